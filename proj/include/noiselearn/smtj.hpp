#pragma once

#include "noiselearn/rng.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace noiselearn {

enum class JunctionState { low = 0, high = 1 };

/// A single superparamagnetic junction in the macrospin picture. Field or
/// current bias is expressed as unequal barriers for the two states.
struct TelegraphParams {
  double tau0 = 1e-9;                      // attempt time [s]
  std::array<double, 2> eb_over_kt{0, 0};  // barrier / k_B T, indexed by JunctionState
  double level_low = 0.0;                  // [V]
  double level_high = 1.0;                 // [V]

  void validate() const;
};

/// Uniformly sampled voltage time series.
struct TelegraphTrace {
  std::vector<double> samples;
  double sampling_rate = 1.0;  // [Hz]

  double duration() const { return static_cast<double>(samples.size()) / sampling_rate; }
  void validate() const;
};

struct HmmFit {
  double p_flip = 0;
  double mu1 = 0;  // mean of the upper level
  double mu2 = 0;  // mean of the lower level
  double sigma_obs = 0;
};

struct DwellEstimate {
  double tau_low = 0;   // [s]
  double tau_high = 0;  // [s]
  double threshold = 0; // [V]
};

/// Neel-Arrhenius mean dwell time tau0 * exp(Eb / kT) for `state`.
double dwell_time(const TelegraphParams& params, JunctionState state);

/// Total fluctuation rate of an ensemble, the sum of inverse dwell times.
double ensemble_rate(std::span<const double> taus);

/// Continuous-time two-state process with exponential residence times,
/// read out on a uniform grid. The initial state is drawn from the
/// stationary occupancy unless given.
TelegraphTrace simulate_telegraph(const TelegraphParams& params, double duration,
                                  double sampling_rate, Rng& rng,
                                  std::optional<JunctionState> initial = std::nullopt);

/// Series connection: resistances (and hence voltages) add sample by sample.
TelegraphTrace compose_series(std::span<const TelegraphTrace> traces);

/// n+1 levels for identical magnetoresistance, 2^n for pairwise distinct.
std::size_t expected_level_count(std::size_t junctions, bool tmr_equal);

/// Number of distinct sample values, merging values closer than `tol`.
std::size_t distinct_levels(std::span<const double> samples, double tol = 1e-12);

/// Normalized autocorrelation of the mean-centered trace for lags
/// 0..max_lag, with the biased 1/N estimator. C(0) == 1.
std::vector<double> autocorrelation(const TelegraphTrace& trace, std::size_t max_lag);

struct Histogram {
  std::vector<double> centers;
  std::vector<std::size_t> counts;
};

Histogram histogram(std::span<const double> samples, std::size_t bins);

/// Locations of the two dominant histogram modes (lower, upper). Throws
/// Unimodal when the trace has no second well-separated peak.
std::pair<double, double> bimodal_modes(std::span<const double> samples);

/// Binary level sequence from a midpoint threshold with a hysteresis band
/// of `hysteresis` times the level gap.
std::vector<std::uint8_t> classify_levels(std::span<const double> samples, double low_mode,
                                          double high_mode, double hysteresis = 0.1);

DwellEstimate estimate_dwell_times(const TelegraphTrace& trace);

HmmFit fit_hmm(const TelegraphTrace& trace);

}  // namespace noiselearn
