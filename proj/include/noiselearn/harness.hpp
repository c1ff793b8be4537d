#pragma once

#include "noiselearn/config.hpp"
#include "noiselearn/data.hpp"
#include "noiselearn/smtj.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace noiselearn {

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0;
  double train_acc = 0;  // 0 for regression tasks
  double test_loss = 0;
  double test_acc = 0;
  std::uint64_t skips = 0;  // cumulative zero-denominator ANP samples
  std::uint64_t wraps = 0;  // cumulative replay wrap-arounds

  bool operator==(const EpochMetrics&) const = default;
};

/// Per-epoch spread of the per-sample clean training loss, plus the mean
/// off-diagonal second-moment norm of the decorrelated layer inputs.
struct EpochDiagnostics {
  std::size_t epoch = 0;
  double loss_min = 0;
  double loss_q25 = 0;
  double loss_median = 0;
  double loss_q75 = 0;
  double loss_max = 0;
  double decor_offdiag = 0;

  bool operator==(const EpochDiagnostics&) const = default;
};

struct RunMetrics {
  std::vector<EpochMetrics> epochs;  // epoch 0 is the initial evaluation
  std::vector<EpochDiagnostics> diagnostics;
  ConfigMap config;
  std::uint64_t seed = 0;
  double wall_seconds = 0;

  const EpochMetrics& last() const { return epochs.back(); }
};

struct DataBundle {
  Dataset train;
  Dataset test;
};

/// Loads (or generates) the train and test splits named by the config.
DataBundle load_data(const ExperimentConfig& config);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Validates the config, then trains. Data is loaded unless supplied; the
/// final network is stored in `trained` when given.
RunMetrics run_experiment(const ExperimentConfig& config, const DataBundle* data = nullptr,
                          const EpochCallback& on_epoch = {}, NetworkState* trained = nullptr);

/// Noise source for a run, including the live feed when requested.
NoiseSource make_noise_source(const ExperimentConfig& config, const std::string& stream);

/// Writes `path` (metrics CSV), `path.diag.csv` and `path.config.json`.
void emit_metrics(const RunMetrics& metrics, const std::filesystem::path& path);
/// Reads the files written by emit_metrics.
RunMetrics read_metrics(const std::filesystem::path& path);

/// Config keys with alternatives; each axis lists one or more values.
struct SweepAxis {
  std::string key;
  std::vector<std::string> values;
};

struct SweepGrid {
  ConfigMap base;
  std::vector<SweepAxis> axes;
};

/// Keys whose value contains '|' become axes; the rest is the base config.
SweepGrid parse_grid(const ConfigMap& values);
SweepGrid read_grid(const std::filesystem::path& path);

/// Cartesian product, the last axis varying fastest.
std::vector<ConfigMap> expand_grid(const SweepGrid& grid);

struct SweepPoint {
  ConfigMap overrides;  // axis values of this point
  std::optional<RunMetrics> metrics;
  std::string error;  // set when the run failed
};

struct Envelope {
  std::string key;
  std::string value;
  double min = 0;  // over every successful run at this axis value
  double max = 0;
  std::size_t runs = 0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::optional<std::size_t> best;
  std::vector<Envelope> envelopes;
  bool classification = true;
};

/// Score used for selection and envelopes: final test accuracy, or the
/// negated final test loss for regression tasks.
double selection_score(const RunMetrics& metrics, bool classification);

/// Highest score; ties go to the lowest index.
std::optional<std::size_t> select_best(std::span<const SweepPoint> points, bool classification);

std::vector<Envelope> envelopes(const SweepGrid& grid, std::span<const SweepPoint> points, bool classification);

/// Runs every grid point on `jobs` threads. Results are stored in grid
/// order and do not depend on `jobs`. Failed runs are recorded, not thrown.
SweepResult run_sweep(const SweepGrid& grid, std::size_t jobs = 1);

/// point_<i>.csv per run (plus sidecars), summary.csv, envelopes.csv and
/// best.json under `dir`.
void write_sweep(const SweepResult& result, const SweepGrid& grid, const std::filesystem::path& dir);

struct CharacterizeOptions {
  std::size_t bins = 64;
  std::size_t max_lag = 1000;
};

struct Characterization {
  double sampling_rate = 0;
  std::size_t samples = 0;
  double mean = 0;
  double stddev = 0;
  Histogram histogram;
  std::vector<double> acf;
  std::optional<DwellEstimate> dwell;  // empty for single-level traces
  std::optional<HmmFit> fit;
  std::string two_level_error;
};

/// Throws ZeroVariance for a constant trace.
Characterization characterize(const TelegraphTrace& trace, const CharacterizeOptions& options = {});

/// histogram.csv, acf.csv and summary.json under `dir`.
void write_characterization(const Characterization& result, const std::filesystem::path& dir);

/// Draws `steps` samples at `sampling_rate` from the noise spec of the
/// config. Telegraph specs are simulated in continuous time and composed.
TelegraphTrace simulate_spec(const ExperimentConfig& config, std::size_t steps, double sampling_rate);

}  // namespace noiselearn
