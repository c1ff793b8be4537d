#include "noiselearn/harness.hpp"

#include "noiselearn/errors.hpp"
#include "noiselearn/learning.hpp"
#include "noiselearn/live.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace noiselearn {

namespace {

using json = nlohmann::json;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

double accuracy(const Matrix& outputs, const std::vector<std::size_t>& labels) {
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < outputs.rows(); ++r) {
    Eigen::Index arg = 0;
    outputs.row(r).maxCoeff(&arg);
    if (static_cast<std::size_t>(arg) == labels[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

// Linear interpolation between order statistics.
double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct Evaluation {
  double loss = 0;
  double acc = 0;
  Vector losses;
};

Evaluation evaluate(const NetworkState& net, const Dataset& data, const Matrix& targets, LossKind kind) {
  Evaluation e;
  const Matrix out = predict(net, data.inputs);
  e.losses = batch_loss(kind, targets, out);
  e.loss = e.losses.mean();
  e.acc = data.is_classification() ? accuracy(out, data.labels) : 0.0;
  return e;
}

double decorrelation_statistic(const NetworkState& net, const Dataset& train) {
  if (!net.has_decorrelation()) return 0.0;
  constexpr std::size_t kProbe = 1000;
  const std::size_t n = std::min(kProbe, train.size());
  const Matrix x = train.inputs.topRows(idx(n));
  const BatchTrace trace = forward_batch(net, x);
  double total = 0;
  std::size_t count = 0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (net.decorrelator(l) == nullptr) continue;
    total += offdiag_frobenius(trace.inputs_used[l], false);
    ++count;
  }
  return total / static_cast<double>(count);
}

// One noise matrix per layer, one row per sample. With `two_passes` the
// draws alternate pass 1 / pass 2 sample by sample.
void draw_noise(NoiseSource& source, std::span<const std::size_t> widths, std::size_t batch, bool two_passes,
                std::vector<Matrix>& first, std::vector<Matrix>& second) {
  first.assign(widths.size(), Matrix());
  second.assign(two_passes ? widths.size() : 0, Matrix());
  for (std::size_t l = 0; l < widths.size(); ++l) {
    first[l].resize(idx(batch), idx(widths[l]));
    if (two_passes) second[l].resize(idx(batch), idx(widths[l]));
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const auto a = source.layer_noise(widths);
    for (std::size_t l = 0; l < widths.size(); ++l) first[l].row(idx(b)) = a[l].transpose();
    if (!two_passes) continue;
    const auto c = source.layer_noise(widths);
    for (std::size_t l = 0; l < widths.size(); ++l) second[l].row(idx(b)) = c[l].transpose();
  }
}

bool weights_finite(const NetworkState& net) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (!all_finite(net.layers[l].weights)) return false;
    if (const Matrix* r = net.decorrelator(l); r && !all_finite(*r)) return false;
  }
  return true;
}

std::string data_key(const ExperimentConfig& c) {
  std::ostringstream os;
  os << to_string(c.dataset) << '|' << c.data_dir << '|' << c.train_cap << '|' << c.test_cap << '|' << c.normalize
     << '|' << c.teacher_samples << '|' << c.teacher_seed;
  return os.str();
}

std::vector<std::string> split_alternatives(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, '|')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    out.push_back(a == std::string::npos ? std::string() : item.substr(a, b - a + 1));
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header) throw Error(ErrorCode::Parse, path.string() + ": unexpected header");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_double(const std::string& s, const std::filesystem::path& path) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw Error(ErrorCode::Parse, path.string() + ": bad number '" + s + "'");
  return v;
}

std::uint64_t parse_count(const std::string& s, const std::filesystem::path& path) {
  char* end = nullptr;
  const auto v = std::strtoull(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') throw Error(ErrorCode::Parse, path.string() + ": bad integer '" + s + "'");
  return v;
}

std::filesystem::path sidecar(const std::filesystem::path& path, const std::string& suffix) {
  return std::filesystem::path(path.string() + suffix);
}

constexpr const char* kMetricsHeader = "epoch,train_loss,train_acc,test_loss,test_acc,skips,wraps";
constexpr const char* kDiagHeader = "epoch,loss_min,loss_q25,loss_median,loss_q75,loss_max,decor_offdiag";

}  // namespace

DataBundle load_data(const ExperimentConfig& c) {
  DataBundle d;
  switch (c.dataset) {
    case DatasetKind::mnist:
      d.train = load_mnist_dir(c.data_dir, Split::train, c.train_cap);
      d.test = load_mnist_dir(c.data_dir, Split::test, c.test_cap);
      break;
    case DatasetKind::cifar10:
    case DatasetKind::cifar100: {
      const int classes = c.dataset == DatasetKind::cifar10 ? 10 : 100;
      d.train = load_cifar_dir(c.data_dir, classes, Split::train, c.train_cap);
      d.test = load_cifar_dir(c.data_dir, classes, Split::test, c.test_cap);
      if (c.normalize) {
        normalize_channels(d.test, d.train);
        normalize_channels(d.train, d.train);
      }
      break;
    }
    case DatasetKind::teacher: {
      TeacherTask task = make_teacher_task(c.teacher_seed, c.teacher_samples);
      d.train = std::move(task.samples);
      d.test = d.train;
      d.test.split = Split::test;
      break;
    }
  }
  return d;
}

NoiseSource make_noise_source(const ExperimentConfig& c, const std::string& stream) {
  const std::uint64_t seed = derive_seed(c.seed, stream);
  NoiseSpec spec = make_noise_spec(c);
  if (c.noise != NoiseKind::live) return NoiseSource(std::move(spec), seed, c.noise_gain);

  std::shared_ptr<SerialTransport> transport;
  if (c.live_device.empty()) {
    std::optional<AdcFraming> quantize;
    if (c.live_quantize) quantize = AdcFraming{};
    transport = std::make_shared<MockTransport>(c.hmm, derive_seed(seed, "device"), c.live_mock_rate, quantize);
  } else {
    transport = std::make_shared<SerialPortTransport>(c.live_device, c.live_baud, c.live_frame);
  }
  auto feed = std::make_shared<LiveNoiseFeed>(transport, c.live_buffer, c.live_min_wait);
  feed->warm_up();
  return NoiseSource(std::move(spec), seed, c.noise_gain, std::move(feed));
}

RunMetrics run_experiment(const ExperimentConfig& config, const DataBundle* data, const EpochCallback& on_epoch,
                          NetworkState* trained) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  DataBundle owned;
  if (data == nullptr) {
    owned = load_data(config);
    data = &owned;
  }
  data->train.validate();
  data->test.validate();
  if (data->train.size() == 0) throw Error(ErrorCode::EmptyInput, "training set is empty");
  if (data->train.is_classification() != config.classification()) {
    throw Error(ErrorCode::Config, "dataset kind does not match the loaded data");
  }

  const Dataset* train = &data->train;
  Dataset shuffled;
  if (config.shuffle_labels) {
    shuffled = data->train;
    Rng label_rng = make_rng(config.seed, "label-shuffle");
    std::shuffle(shuffled.labels.begin(), shuffled.labels.end(), label_rng);
    train = &shuffled;
  }
  const Dataset& test = data->test;

  const std::size_t outputs = train->is_classification() ? train->class_count
                                                         : static_cast<std::size_t>(train->targets.cols());
  std::vector<std::size_t> widths{train->input_dim()};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(outputs);

  InitOptions init;
  init.hidden = config.activation;
  init.output = Activation::linear();
  init.decorrelate = config.rule == Rule::danp;
  init.decorrelate_input = config.decorrelate_input;
  Rng init_rng = make_rng(config.seed, "init");
  NetworkState net = init_weights(widths, init, init_rng);
  const std::vector<std::size_t> layer_widths = net.layer_widths();

  const LossKind kind = config.loss_kind();
  const bool cifar = config.dataset == DatasetKind::cifar10 || config.dataset == DatasetKind::cifar100;
  const bool augment_inputs = cifar && config.augment;

  std::optional<NoiseSource> noise;
  if (config.rule != Rule::bp) noise.emplace(make_noise_source(config, "noise"));
  AdamState adam(net);
  Rng order_rng = make_rng(config.seed, "order");
  Rng augment_rng = make_rng(config.seed, "augment");

  const std::vector<std::size_t> all_train = iota_indices(train->size());
  const Matrix train_targets = train->target_rows(all_train);
  const Matrix test_targets = test.target_rows(iota_indices(test.size()));

  RunMetrics metrics;
  metrics.config = to_map(config);
  metrics.seed = config.seed;
  std::uint64_t skips = 0;

  auto record = [&](std::size_t epoch) {
    const Evaluation tr = evaluate(net, *train, train_targets, kind);
    const Evaluation te = evaluate(net, test, test_targets, kind);
    EpochMetrics m{epoch, tr.loss, tr.acc, te.loss, te.acc, skips, noise ? noise->wrap_count() : 0};
    std::vector<double> sorted(tr.losses.data(), tr.losses.data() + tr.losses.size());
    std::sort(sorted.begin(), sorted.end());
    EpochDiagnostics d{epoch,
                       sorted.front(),
                       quantile(sorted, 0.25),
                       quantile(sorted, 0.5),
                       quantile(sorted, 0.75),
                       sorted.back(),
                       decorrelation_statistic(net, *train)};
    metrics.epochs.push_back(m);
    metrics.diagnostics.push_back(d);
    if (on_epoch) on_epoch(m);
  };

  record(0);
  const double np_sigma = config.sigma * config.noise_gain;
  std::vector<std::size_t> order = all_train;
  std::vector<Matrix> noise1;
  std::vector<Matrix> noise2;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      Matrix x = train->input_rows(batch);
      if (augment_inputs) {
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
          const Vector v = x.row(r).transpose();
          x.row(r) = augment(v, augment_rng).transpose();
        }
      }
      const Matrix t = train->target_rows(batch);

      BatchUpdate update;
      std::optional<BatchTrace> first_pass;
      switch (config.rule) {
        case Rule::bp: {
          const BatchTrace clean = forward_batch(net, x);
          update = bp_batch(net, clean, kind, t);
          break;
        }
        case Rule::np: {
          draw_noise(*noise, layer_widths, batch.size(), false, noise1, noise2);
          const BatchTrace clean = forward_batch(net, x);
          const BatchTrace noisy = forward_batch(net, x, noise1);
          update = np_batch(clean, noisy, noise1, np_sigma, kind, t);
          break;
        }
        case Rule::anp:
        case Rule::danp: {
          const bool two = !config.anp_clean_second_pass;
          draw_noise(*noise, layer_widths, batch.size(), two, noise1, noise2);
          first_pass = forward_batch(net, x, noise1);
          const BatchTrace second = two ? forward_batch(net, x, noise2) : forward_batch(net, x);
          update = anp_batch(*first_pass, second, kind, t, config.anp_input);
          skips += update.skipped;
          break;
        }
      }

      if (update.contributing > 0) {
        if (config.optimizer == OptimizerKind::adam) {
          adam.step(update.mean, config.eta, net);
        } else {
          sgd_step(update.mean, config.eta, net);
        }
      }
      if (config.rule == Rule::danp) {
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
          if (Matrix* r = net.decorrelator(l)) *r = decorrelation_update(*r, first_pass->inputs_used[l], config.decor_eps);
        }
      }
    }
    if (!weights_finite(net)) {
      throw Error(ErrorCode::NonFinite, "training diverged in epoch " + std::to_string(epoch));
    }
    record(epoch);
  }

  metrics.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (trained) *trained = std::move(net);
  return metrics;
}

void emit_metrics(const RunMetrics& metrics, const std::filesystem::path& path) {
  std::string csv = std::string(kMetricsHeader) + "\n";
  for (const auto& e : metrics.epochs) {
    csv += std::to_string(e.epoch) + "," + num(e.train_loss) + "," + num(e.train_acc) + "," + num(e.test_loss) + "," +
           num(e.test_acc) + "," + std::to_string(e.skips) + "," + std::to_string(e.wraps) + "\n";
  }
  write_text(path, csv);

  std::string diag = std::string(kDiagHeader) + "\n";
  for (const auto& d : metrics.diagnostics) {
    diag += std::to_string(d.epoch) + "," + num(d.loss_min) + "," + num(d.loss_q25) + "," + num(d.loss_median) + "," +
            num(d.loss_q75) + "," + num(d.loss_max) + "," + num(d.decor_offdiag) + "\n";
  }
  write_text(sidecar(path, ".diag.csv"), diag);

  json echo;
  echo["seed"] = metrics.seed;
  echo["wall_seconds"] = metrics.wall_seconds;
  echo["epochs_recorded"] = metrics.epochs.size();
  echo["config"] = metrics.config;
  write_text(sidecar(path, ".config.json"), echo.dump(2) + "\n");
}

RunMetrics read_metrics(const std::filesystem::path& path) {
  RunMetrics m;
  for (const auto& row : read_csv(path, kMetricsHeader)) {
    if (row.size() != 7) throw Error(ErrorCode::Parse, path.string() + ": expected 7 columns");
    m.epochs.push_back({parse_count(row[0], path), parse_double(row[1], path), parse_double(row[2], path),
                        parse_double(row[3], path), parse_double(row[4], path), parse_count(row[5], path),
                        parse_count(row[6], path)});
  }
  const auto diag_path = sidecar(path, ".diag.csv");
  for (const auto& row : read_csv(diag_path, kDiagHeader)) {
    if (row.size() != 7) throw Error(ErrorCode::Parse, diag_path.string() + ": expected 7 columns");
    m.diagnostics.push_back({parse_count(row[0], diag_path), parse_double(row[1], diag_path),
                             parse_double(row[2], diag_path), parse_double(row[3], diag_path),
                             parse_double(row[4], diag_path), parse_double(row[5], diag_path),
                             parse_double(row[6], diag_path)});
  }
  for (std::size_t i = 0; i < m.epochs.size(); ++i) {
    if (m.epochs[i].epoch != i) throw Error(ErrorCode::Parse, path.string() + ": epochs are not consecutive");
  }

  const auto echo_path = sidecar(path, ".config.json");
  std::ifstream in(echo_path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + echo_path.string());
  try {
    const json echo = json::parse(in);
    m.seed = echo.at("seed").get<std::uint64_t>();
    m.wall_seconds = echo.at("wall_seconds").get<double>();
    m.config = echo.at("config").get<ConfigMap>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, echo_path.string() + ": " + e.what());
  }
  return m;
}

SweepGrid parse_grid(const ConfigMap& values) {
  SweepGrid grid;
  for (const auto& [key, value] : values) {
    if (value.find('|') == std::string::npos) {
      grid.base[key] = value;
    } else {
      grid.axes.push_back({key, split_alternatives(value)});
    }
  }
  return grid;
}

SweepGrid read_grid(const std::filesystem::path& path) { return parse_grid(read_config_file(path)); }

std::vector<ConfigMap> expand_grid(const SweepGrid& grid) {
  std::vector<ConfigMap> points{ConfigMap{}};
  for (const auto& axis : grid.axes) {
    if (axis.values.empty()) throw Error(ErrorCode::Config, "sweep axis '" + axis.key + "' has no values");
    std::vector<ConfigMap> next;
    next.reserve(points.size() * axis.values.size());
    for (const auto& p : points) {
      for (const auto& v : axis.values) {
        ConfigMap q = p;
        q[axis.key] = v;
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  return points;
}

double selection_score(const RunMetrics& metrics, bool classification) {
  if (metrics.epochs.empty()) throw Error(ErrorCode::EmptyInput, "run has no recorded epochs");
  return classification ? metrics.last().test_acc : -metrics.last().test_loss;
}

std::optional<std::size_t> select_best(std::span<const SweepPoint> points, bool classification) {
  std::optional<std::size_t> best;
  double best_score = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].metrics) continue;
    const double s = selection_score(*points[i].metrics, classification);
    if (std::isnan(s)) continue;
    if (!best || s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

std::vector<Envelope> envelopes(const SweepGrid& grid, std::span<const SweepPoint> points, bool classification) {
  std::vector<Envelope> out;
  for (const auto& axis : grid.axes) {
    for (const auto& value : axis.values) {
      Envelope e{axis.key, value, 0, 0, 0};
      for (const auto& p : points) {
        const auto it = p.overrides.find(axis.key);
        if (!p.metrics || it == p.overrides.end() || it->second != value) continue;
        const double s = selection_score(*p.metrics, classification);
        e.min = e.runs == 0 ? s : std::min(e.min, s);
        e.max = e.runs == 0 ? s : std::max(e.max, s);
        ++e.runs;
      }
      out.push_back(e);
    }
  }
  return out;
}

SweepResult run_sweep(const SweepGrid& grid, std::size_t jobs) {
  const std::vector<ConfigMap> overrides = expand_grid(grid);
  SweepResult result;
  result.points.resize(overrides.size());

  std::vector<std::optional<ExperimentConfig>> configs(overrides.size());
  for (std::size_t i = 0; i < overrides.size(); ++i) {
    result.points[i].overrides = overrides[i];
    ConfigMap merged = grid.base;
    for (const auto& [k, v] : overrides[i]) merged[k] = v;
    try {
      configs[i] = from_map(merged);
      configs[i]->validate();
    } catch (const std::exception& e) {
      configs[i].reset();
      result.points[i].error = e.what();
    }
  }
  for (const auto& c : configs) {
    if (c) {
      result.classification = c->classification();
      break;
    }
  }

  // Data is shared between points that read the same split.
  std::map<std::string, std::shared_ptr<const DataBundle>> cache;
  std::map<std::string, std::string> load_errors;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (!configs[i]) continue;
    const std::string key = data_key(*configs[i]);
    if (cache.count(key) || load_errors.count(key)) continue;
    try {
      cache[key] = std::make_shared<const DataBundle>(load_data(*configs[i]));
    } catch (const std::exception& e) {
      load_errors[key] = e.what();
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      if (!configs[i]) continue;
      const std::string key = data_key(*configs[i]);
      if (const auto it = load_errors.find(key); it != load_errors.end()) {
        result.points[i].error = it->second;
        continue;
      }
      try {
        result.points[i].metrics = run_experiment(*configs[i], cache.at(key).get());
      } catch (const std::exception& e) {
        result.points[i].error = e.what();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, configs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  result.best = select_best(result.points, result.classification);
  result.envelopes = envelopes(grid, result.points, result.classification);
  return result;
}

void write_sweep(const SweepResult& result, const SweepGrid& grid, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string summary = "index";
  for (const auto& axis : grid.axes) summary += "," + axis.key;
  summary += ",status,score,final_train_acc,final_test_acc,final_test_loss,skips,wraps\n";
  std::string failures;
  for (std::size_t i = 0; i < result.points.size(); ++i) {
    const SweepPoint& p = result.points[i];
    char name[32];
    std::snprintf(name, sizeof name, "point_%04zu.csv", i);
    summary += std::to_string(i);
    for (const auto& axis : grid.axes) summary += "," + p.overrides.at(axis.key);
    if (p.metrics) {
      emit_metrics(*p.metrics, dir / name);
      const EpochMetrics& last = p.metrics->last();
      summary += ",ok," + num(selection_score(*p.metrics, result.classification)) + "," + num(last.train_acc) + "," +
                 num(last.test_acc) + "," + num(last.test_loss) + "," + std::to_string(last.skips) + "," +
                 std::to_string(last.wraps) + "\n";
    } else {
      summary += ",failed,,,,,,\n";
      failures += std::to_string(i) + ": " + p.error + "\n";
    }
  }
  write_text(dir / "summary.csv", summary);
  write_text(dir / "failures.txt", failures);

  std::string env = "key,value,min,max,runs\n";
  for (const auto& e : result.envelopes) {
    env += e.key + "," + e.value + "," + num(e.min) + "," + num(e.max) + "," + std::to_string(e.runs) + "\n";
  }
  write_text(dir / "envelopes.csv", env);

  json best;
  best["metric"] = result.classification ? "final_test_acc" : "negated_final_test_loss";
  best["base"] = grid.base;
  if (result.best) {
    const SweepPoint& p = result.points[*result.best];
    best["index"] = *result.best;
    best["overrides"] = p.overrides;
    best["score"] = selection_score(*p.metrics, result.classification);
  } else {
    best["index"] = nullptr;
  }
  write_text(dir / "best.json", best.dump(2) + "\n");
}

Characterization characterize(const TelegraphTrace& trace, const CharacterizeOptions& options) {
  trace.validate();
  Characterization c;
  c.sampling_rate = trace.sampling_rate;
  c.samples = trace.samples.size();
  const std::size_t max_lag = std::min(options.max_lag, c.samples - 1);
  c.acf = autocorrelation(trace, max_lag);

  double sum = 0;
  for (double v : trace.samples) sum += v;
  c.mean = sum / static_cast<double>(c.samples);
  double ss = 0;
  for (double v : trace.samples) ss += (v - c.mean) * (v - c.mean);
  c.stddev = std::sqrt(ss / static_cast<double>(c.samples));
  c.histogram = histogram(trace.samples, options.bins);

  try {
    c.dwell = estimate_dwell_times(trace);
    c.fit = fit_hmm(trace);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Unimodal) throw;
    c.dwell.reset();
    c.two_level_error = e.what();
  }
  return c;
}

void write_characterization(const Characterization& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string hist = "bin_center,count\n";
  for (std::size_t i = 0; i < result.histogram.centers.size(); ++i) {
    hist += num(result.histogram.centers[i]) + "," + std::to_string(result.histogram.counts[i]) + "\n";
  }
  write_text(dir / "histogram.csv", hist);

  std::string acf = "lag_seconds,correlation\n";
  for (std::size_t k = 0; k < result.acf.size(); ++k) {
    acf += num(static_cast<double>(k) / result.sampling_rate) + "," + num(result.acf[k]) + "\n";
  }
  write_text(dir / "acf.csv", acf);

  json s;
  s["samples"] = result.samples;
  s["sampling_rate_hz"] = result.sampling_rate;
  s["mean"] = result.mean;
  s["stddev"] = result.stddev;
  if (result.dwell) {
    s["dwell"] = {{"tau_low_s", result.dwell->tau_low},
                  {"tau_high_s", result.dwell->tau_high},
                  {"threshold", result.dwell->threshold}};
  } else {
    s["dwell"] = nullptr;
  }
  if (result.fit) {
    s["hmm_fit"] = {{"p_flip", result.fit->p_flip},
                    {"mu1", result.fit->mu1},
                    {"mu2", result.fit->mu2},
                    {"sigma_obs", result.fit->sigma_obs}};
  } else {
    s["hmm_fit"] = nullptr;
    s["two_level_error"] = result.two_level_error;
  }
  write_text(dir / "summary.json", s.dump(2) + "\n");
}

TelegraphTrace simulate_spec(const ExperimentConfig& config, std::size_t steps, double sampling_rate) {
  if (steps < 2) throw Error(ErrorCode::InvalidArgument, "simulate_spec needs at least 2 steps");
  if (!(sampling_rate > 0)) throw Error(ErrorCode::InvalidArgument, "sampling rate must be positive");
  TelegraphTrace trace;
  trace.sampling_rate = sampling_rate;
  if (config.noise == NoiseKind::telegraph) {
    const auto spec = std::get<TelegraphNoise>(make_noise_spec(config));
    const double duration = (static_cast<double>(steps) + 0.5) / sampling_rate;
    std::vector<TelegraphTrace> parts;
    for (std::size_t j = 0; j < spec.junctions.size(); ++j) {
      Rng rng = make_rng(config.seed, "characterize", j);
      parts.push_back(simulate_telegraph(spec.junctions[j], duration, sampling_rate, rng));
    }
    trace = compose_series(parts);
    for (double& v : trace.samples) v *= config.noise_gain;
    return trace;
  }
  NoiseSource source = make_noise_source(config, "characterize");
  const Vector v = source.sample(steps);
  trace.samples.assign(v.data(), v.data() + v.size());
  return trace;
}

}  // namespace noiselearn
