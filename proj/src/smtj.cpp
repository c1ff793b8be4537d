#include "noiselearn/smtj.hpp"

#include "noiselearn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace noiselearn {

void TelegraphParams::validate() const {
  if (!(tau0 > 0)) throw Error(ErrorCode::InvalidArgument, "telegraph: tau0 must be positive");
  for (double eb : eb_over_kt) {
    if (!(eb >= 0)) throw Error(ErrorCode::InvalidArgument, "telegraph: barrier must be >= 0");
  }
  if (!(level_low < level_high)) {
    throw Error(ErrorCode::InvalidArgument, "telegraph: level_low must be below level_high");
  }
}

void TelegraphTrace::validate() const {
  if (!(sampling_rate > 0)) throw Error(ErrorCode::InvalidArgument, "trace: sampling rate must be positive");
  if (samples.size() < 2) throw Error(ErrorCode::InvalidArgument, "trace: need at least 2 samples");
}

double dwell_time(const TelegraphParams& params, JunctionState state) {
  const double tau = params.tau0 * std::exp(params.eb_over_kt[static_cast<std::size_t>(state)]);
  if (!std::isfinite(tau)) {
    throw Error(ErrorCode::Overflow, "dwell_time: tau0 * exp(Eb/kT) is not finite");
  }
  return tau;
}

double ensemble_rate(std::span<const double> taus) {
  double rate = 0;
  for (double tau : taus) {
    if (!(tau > 0)) throw Error(ErrorCode::InvalidArgument, "ensemble_rate: dwell times must be positive");
    rate += 1.0 / tau;
  }
  return rate;
}

TelegraphTrace simulate_telegraph(const TelegraphParams& params, double duration,
                                  double sampling_rate, Rng& rng,
                                  std::optional<JunctionState> initial) {
  params.validate();
  if (!(duration > 0) || !(sampling_rate > 0)) {
    throw Error(ErrorCode::InvalidArgument, "simulate_telegraph: duration and rate must be positive");
  }
  const double count = std::floor(duration * sampling_rate + 1e-9);
  if (count < 2) {
    throw Error(ErrorCode::InvalidArgument,
                "simulate_telegraph: duration covers fewer than two sample periods");
  }
  const std::array<double, 2> tau{dwell_time(params, JunctionState::low),
                                  dwell_time(params, JunctionState::high)};
  const std::array<double, 2> level{params.level_low, params.level_high};

  int state;
  if (initial) {
    state = static_cast<int>(*initial);
  } else {
    std::bernoulli_distribution high(tau[1] / (tau[0] + tau[1]));
    state = high(rng) ? 1 : 0;
  }
  auto residence = [&](int s) { return std::exponential_distribution<double>(1.0 / tau[s])(rng); };

  TelegraphTrace trace;
  trace.sampling_rate = sampling_rate;
  trace.samples.resize(static_cast<std::size_t>(count));
  double next_switch = residence(state);
  for (std::size_t k = 0; k < trace.samples.size(); ++k) {
    const double t = static_cast<double>(k) / sampling_rate;
    while (t >= next_switch) {
      state ^= 1;
      next_switch += residence(state);
    }
    trace.samples[k] = level[state];
  }
  return trace;
}

TelegraphTrace compose_series(std::span<const TelegraphTrace> traces) {
  if (traces.empty()) throw Error(ErrorCode::EmptyInput, "compose_series: no traces");
  TelegraphTrace out = traces.front();
  for (std::size_t i = 1; i < traces.size(); ++i) {
    const auto& t = traces[i];
    if (t.sampling_rate != out.sampling_rate) {
      throw Error(ErrorCode::DimensionMismatch, "compose_series: sampling rates differ");
    }
    if (t.samples.size() != out.samples.size()) {
      throw Error(ErrorCode::DimensionMismatch, "compose_series: trace lengths differ");
    }
    for (std::size_t k = 0; k < t.samples.size(); ++k) out.samples[k] += t.samples[k];
  }
  return out;
}

std::size_t expected_level_count(std::size_t junctions, bool tmr_equal) {
  return tmr_equal ? junctions + 1 : (std::size_t{1} << junctions);
}

std::size_t distinct_levels(std::span<const double> samples, double tol) {
  if (samples.empty()) return 0;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t levels = 1;
  double last = sorted.front();
  for (double v : sorted) {
    if (v - last > tol) {
      ++levels;
      last = v;
    }
  }
  return levels;
}

std::vector<double> autocorrelation(const TelegraphTrace& trace, std::size_t max_lag) {
  const auto& x = trace.samples;
  const std::size_t n = x.size();
  if (max_lag >= n) {
    throw Error(ErrorCode::InvalidArgument, "autocorrelation: max_lag must be below the sample count");
  }
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  std::vector<double> d(n);
  double var = 0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = x[i] - mean;
    var += d[i] * d[i];
  }
  // Exactly zero or pure rounding residue of a constant signal.
  if (!(var > 1e-24 * std::max(1.0, mean * mean) * static_cast<double>(n))) {
    throw Error(ErrorCode::ZeroVariance, "autocorrelation: trace is constant");
  }
  std::vector<double> acf(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double s = 0;
    const double* a = d.data();
    const double* b = d.data() + k;
    const std::size_t m = n - k;
    for (std::size_t i = 0; i < m; ++i) s += a[i] * b[i];
    acf[k] = s / var;
  }
  acf[0] = 1.0;
  return acf;
}

Histogram histogram(std::span<const double> samples, std::size_t bins) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "histogram: no samples");
  if (bins == 0) throw Error(ErrorCode::InvalidArgument, "histogram: zero bins");
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  Histogram h;
  h.counts.assign(bins, 0);
  h.centers.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) h.centers[b] = lo + (static_cast<double>(b) + 0.5) * width;
  for (double v : samples) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

std::pair<double, double> bimodal_modes(std::span<const double> samples) {
  if (samples.size() < 2) throw Error(ErrorCode::Unimodal, "bimodal_modes: too few samples");
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  if (*lo_it == *hi_it) throw Error(ErrorCode::Unimodal, "bimodal_modes: constant trace");

  const auto bins = static_cast<std::size_t>(
      std::clamp(std::sqrt(static_cast<double>(samples.size())), 8.0, 128.0));
  const Histogram h = histogram(samples, bins);

  // [1 2 1] smoothing with zero padding so edge bins can be peaks.
  std::vector<double> s(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    const double left = b > 0 ? static_cast<double>(h.counts[b - 1]) : 0.0;
    const double right = b + 1 < bins ? static_cast<double>(h.counts[b + 1]) : 0.0;
    s[b] = 0.25 * left + 0.5 * static_cast<double>(h.counts[b]) + 0.25 * right;
  }
  std::vector<std::size_t> peaks;
  for (std::size_t b = 0; b < bins; ++b) {
    const double left = b > 0 ? s[b - 1] : 0.0;
    const double right = b + 1 < bins ? s[b + 1] : 0.0;
    if (s[b] > left && s[b] >= right) peaks.push_back(b);
  }
  std::sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  if (peaks.empty()) throw Error(ErrorCode::Unimodal, "bimodal_modes: no histogram peak");

  const std::size_t first = peaks.front();
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    const std::size_t second = peaks[i];
    if (s[second] < 0.02 * s[first]) break;
    const auto [a, b] = std::minmax(first, second);
    const double valley = *std::min_element(s.begin() + static_cast<std::ptrdiff_t>(a),
                                            s.begin() + static_cast<std::ptrdiff_t>(b) + 1);
    if (valley < 0.5 * s[second]) {
      return {h.centers[a], h.centers[b]};
    }
  }
  throw Error(ErrorCode::Unimodal, "bimodal_modes: histogram has a single mode");
}

std::vector<std::uint8_t> classify_levels(std::span<const double> samples, double low_mode,
                                          double high_mode, double hysteresis) {
  const double threshold = 0.5 * (low_mode + high_mode);
  const double half_band = 0.5 * hysteresis * (high_mode - low_mode);
  std::vector<std::uint8_t> level(samples.size());
  if (samples.empty()) return level;
  std::uint8_t state = samples.front() >= threshold ? 1 : 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double v = samples[i];
    if (state == 0 && v > threshold + half_band) state = 1;
    else if (state == 1 && v < threshold - half_band) state = 0;
    level[i] = state;
  }
  return level;
}

DwellEstimate estimate_dwell_times(const TelegraphTrace& trace) {
  trace.validate();
  const auto [low, high] = bimodal_modes(trace.samples);
  const auto level = classify_levels(trace.samples, low, high);

  std::array<double, 2> total{0, 0};
  std::array<std::size_t, 2> runs{0, 0};
  std::size_t run = 1;
  for (std::size_t i = 1; i <= level.size(); ++i) {
    if (i == level.size() || level[i] != level[i - 1]) {
      total[level[i - 1]] += static_cast<double>(run);
      runs[level[i - 1]]++;
      run = 1;
    } else {
      ++run;
    }
  }
  if (runs[0] == 0 || runs[1] == 0) {
    throw Error(ErrorCode::Unimodal, "estimate_dwell_times: trace never visits both levels");
  }
  return DwellEstimate{total[0] / static_cast<double>(runs[0]) / trace.sampling_rate,
                       total[1] / static_cast<double>(runs[1]) / trace.sampling_rate,
                       0.5 * (low + high)};
}

HmmFit fit_hmm(const TelegraphTrace& trace) {
  trace.validate();
  const auto [low, high] = bimodal_modes(trace.samples);
  const auto level = classify_levels(trace.samples, low, high);

  std::size_t crossings = 0;
  std::array<double, 2> sum{0, 0};
  std::array<std::size_t, 2> count{0, 0};
  for (std::size_t i = 0; i < level.size(); ++i) {
    if (i > 0 && level[i] != level[i - 1]) ++crossings;
    sum[level[i]] += trace.samples[i];
    count[level[i]]++;
  }
  if (count[0] == 0 || count[1] == 0) {
    throw Error(ErrorCode::Unimodal, "fit_hmm: trace never visits both levels");
  }
  HmmFit fit;
  fit.mu1 = sum[1] / static_cast<double>(count[1]);
  fit.mu2 = sum[0] / static_cast<double>(count[0]);
  double ss = 0;
  for (std::size_t i = 0; i < level.size(); ++i) {
    const double mu = level[i] ? fit.mu1 : fit.mu2;
    ss += (trace.samples[i] - mu) * (trace.samples[i] - mu);
  }
  fit.sigma_obs = std::sqrt(ss / static_cast<double>(level.size()));
  fit.p_flip = static_cast<double>(crossings) / static_cast<double>(level.size() - 1);
  return fit;
}

}  // namespace noiselearn
