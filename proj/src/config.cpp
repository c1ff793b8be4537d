#include "noiselearn/config.hpp"

#include "noiselearn/errors.hpp"
#include "noiselearn/trace_io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace noiselearn {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw Error(ErrorCode::Config, key + ": cannot parse '" + value + "' as " + expected);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (trim(v.substr(used)).empty()) return d;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    if (!v.empty() && v[0] != '-') {
      std::size_t used = 0;
      const auto n = std::stoull(v, &used);
      if (trim(v.substr(used)).empty()) return n;
    }
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a non-negative integer");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <class Enum>
Enum to_enum(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, Enum>> table) {
  for (const auto& [name, e] : table) {
    if (v == name) return e;
  }
  std::string expected = "one of";
  for (const auto& [name, e] : table) expected += std::string(" ") + name;
  bad_value(key, v, expected);
}

}  // namespace

std::string to_string(Rule rule) {
  switch (rule) {
    case Rule::bp: return "bp";
    case Rule::np: return "np";
    case Rule::anp: return "anp";
    case Rule::danp: return "danp";
  }
  return "?";
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::mnist: return "mnist";
    case DatasetKind::cifar10: return "cifar10";
    case DatasetKind::cifar100: return "cifar100";
    case DatasetKind::teacher: return "teacher";
  }
  return "?";
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::bernoulli: return "bernoulli";
    case NoiseKind::hmm: return "hmm";
    case NoiseKind::telegraph: return "telegraph";
    case NoiseKind::replay: return "replay";
    case NoiseKind::live: return "live";
  }
  return "?";
}

LossKind ExperimentConfig::loss_kind() const {
  if (loss == "auto") return classification() ? LossKind::categorical_cross_entropy : LossKind::squared_error;
  return parse_loss(loss);
}

const std::vector<ConfigKey>& config_keys() {
  using C = ExperimentConfig;
  static const std::vector<ConfigKey> keys = {
      {"dataset", "mnist | cifar10 | cifar100 | teacher",
       [](C& c, const std::string& v) {
         c.dataset = to_enum<DatasetKind>("dataset", v,
                                          {{"mnist", DatasetKind::mnist},
                                           {"cifar10", DatasetKind::cifar10},
                                           {"cifar100", DatasetKind::cifar100},
                                           {"teacher", DatasetKind::teacher}});
       },
       [](const C& c) { return to_string(c.dataset); }},
      {"data_dir", "directory holding the dataset files", [](C& c, const std::string& v) { c.data_dir = v; },
       [](const C& c) { return c.data_dir; }},
      {"train_cap", "keep only the first N training samples (0 = all)",
       [](C& c, const std::string& v) { c.train_cap = to_u64("train_cap", v); },
       [](const C& c) { return std::to_string(c.train_cap); }},
      {"test_cap", "keep only the first N test samples (0 = all)",
       [](C& c, const std::string& v) { c.test_cap = to_u64("test_cap", v); },
       [](const C& c) { return std::to_string(c.test_cap); }},
      {"augment", "random crop/flip of CIFAR training images",
       [](C& c, const std::string& v) { c.augment = to_bool("augment", v); },
       [](const C& c) { return fmt_bool(c.augment); }},
      {"normalize", "per-channel standardization of CIFAR inputs",
       [](C& c, const std::string& v) { c.normalize = to_bool("normalize", v); },
       [](const C& c) { return fmt_bool(c.normalize); }},
      {"shuffle_labels", "permute training labels (chance-level control)",
       [](C& c, const std::string& v) { c.shuffle_labels = to_bool("shuffle_labels", v); },
       [](const C& c) { return fmt_bool(c.shuffle_labels); }},
      {"teacher_samples", "samples generated by the teacher network",
       [](C& c, const std::string& v) { c.teacher_samples = to_u64("teacher_samples", v); },
       [](const C& c) { return std::to_string(c.teacher_samples); }},
      {"teacher_seed", "seed of the teacher network and its inputs",
       [](C& c, const std::string& v) { c.teacher_seed = to_u64("teacher_seed", v); },
       [](const C& c) { return std::to_string(c.teacher_seed); }},
      {"hidden", "comma separated hidden widths, empty for a single layer",
       [](C& c, const std::string& v) {
         c.hidden.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) {
           item = trim(item);
           if (!item.empty()) c.hidden.push_back(to_u64("hidden", item));
         }
       },
       [](const C& c) {
         std::string s;
         for (std::size_t i = 0; i < c.hidden.size(); ++i) s += (i ? "," : "") + std::to_string(c.hidden[i]);
         return s;
       }},
      {"activation", "hidden activation: linear | relu | leaky_relu[:slope]",
       [](C& c, const std::string& v) {
         try {
           c.activation = Activation::parse(v);
         } catch (const Error& e) {
           throw Error(ErrorCode::Config, std::string("activation: ") + e.what());
         }
       },
       [](const C& c) { return c.activation.name(); }},
      {"loss", "auto | squared_error | cross_entropy", [](C& c, const std::string& v) { c.loss = v; },
       [](const C& c) { return c.loss; }},
      {"rule", "bp | np | anp | danp",
       [](C& c, const std::string& v) {
         c.rule = to_enum<Rule>("rule", v, {{"bp", Rule::bp}, {"np", Rule::np}, {"anp", Rule::anp}, {"danp", Rule::danp}});
       },
       [](const C& c) { return to_string(c.rule); }},
      {"anp_input", "presynaptic activity for ANP: first_pass | mean",
       [](C& c, const std::string& v) {
         c.anp_input = to_enum<AnpInput>("anp_input", v,
                                         {{"first_pass", AnpInput::first_pass}, {"mean", AnpInput::mean_of_passes}});
       },
       [](const C& c) { return std::string(c.anp_input == AnpInput::first_pass ? "first_pass" : "mean"); }},
      {"anp_clean_second_pass", "run the second ANP pass without noise",
       [](C& c, const std::string& v) { c.anp_clean_second_pass = to_bool("anp_clean_second_pass", v); },
       [](const C& c) { return fmt_bool(c.anp_clean_second_pass); }},
      {"optimizer", "adam | plain",
       [](C& c, const std::string& v) {
         c.optimizer = to_enum<OptimizerKind>("optimizer", v,
                                              {{"adam", OptimizerKind::adam}, {"plain", OptimizerKind::plain}});
       },
       [](const C& c) { return std::string(c.optimizer == OptimizerKind::adam ? "adam" : "plain"); }},
      {"eta", "weight learning rate", [](C& c, const std::string& v) { c.eta = to_double("eta", v); },
       [](const C& c) { return fmt(c.eta); }},
      {"decor_eps", "decorrelation learning rate (danp)",
       [](C& c, const std::string& v) { c.decor_eps = to_double("decor_eps", v); },
       [](const C& c) { return fmt(c.decor_eps); }},
      {"decorrelate_input", "also decorrelate the network input (danp)",
       [](C& c, const std::string& v) { c.decorrelate_input = to_bool("decorrelate_input", v); },
       [](const C& c) { return fmt_bool(c.decorrelate_input); }},
      {"epochs", "training epochs", [](C& c, const std::string& v) { c.epochs = to_u64("epochs", v); },
       [](const C& c) { return std::to_string(c.epochs); }},
      {"batch_size", "samples per update", [](C& c, const std::string& v) { c.batch_size = to_u64("batch_size", v); },
       [](const C& c) { return std::to_string(c.batch_size); }},
      {"seed", "experiment seed", [](C& c, const std::string& v) { c.seed = to_u64("seed", v); },
       [](const C& c) { return std::to_string(c.seed); }},
      {"noise", "gaussian | bernoulli | hmm | telegraph | replay | live",
       [](C& c, const std::string& v) {
         c.noise = to_enum<NoiseKind>("noise", v,
                                      {{"gaussian", NoiseKind::gaussian},
                                       {"bernoulli", NoiseKind::bernoulli},
                                       {"hmm", NoiseKind::hmm},
                                       {"telegraph", NoiseKind::telegraph},
                                       {"replay", NoiseKind::replay},
                                       {"live", NoiseKind::live}});
       },
       [](const C& c) { return to_string(c.noise); }},
      {"noise_gain", "global multiplier applied to every noise value",
       [](C& c, const std::string& v) { c.noise_gain = to_double("noise_gain", v); },
       [](const C& c) { return fmt(c.noise_gain); }},
      {"sigma", "gaussian noise standard deviation", [](C& c, const std::string& v) { c.sigma = to_double("sigma", v); },
       [](const C& c) { return fmt(c.sigma); }},
      {"bernoulli_p", "probability of the +alpha draw",
       [](C& c, const std::string& v) { c.bernoulli_p = to_double("bernoulli_p", v); },
       [](const C& c) { return fmt(c.bernoulli_p); }},
      {"bernoulli_alpha", "bernoulli scale factor",
       [](C& c, const std::string& v) { c.bernoulli_alpha = to_double("bernoulli_alpha", v); },
       [](const C& c) { return fmt(c.bernoulli_alpha); }},
      {"bernoulli_h", "bernoulli draws summed per value",
       [](C& c, const std::string& v) { c.bernoulli_h = static_cast<int>(to_u64("bernoulli_h", v)); },
       [](const C& c) { return std::to_string(c.bernoulli_h); }},
      {"hmm_p_flip", "HMM state flip probability per step",
       [](C& c, const std::string& v) { c.hmm.p_flip = to_double("hmm_p_flip", v); },
       [](const C& c) { return fmt(c.hmm.p_flip); }},
      {"hmm_mu1", "HMM state 1 mean [V]", [](C& c, const std::string& v) { c.hmm.mu1 = to_double("hmm_mu1", v); },
       [](const C& c) { return fmt(c.hmm.mu1); }},
      {"hmm_mu2", "HMM state 2 mean [V]", [](C& c, const std::string& v) { c.hmm.mu2 = to_double("hmm_mu2", v); },
       [](const C& c) { return fmt(c.hmm.mu2); }},
      {"hmm_sigma_obs", "HMM observation noise [V]",
       [](C& c, const std::string& v) { c.hmm.sigma_obs = to_double("hmm_sigma_obs", v); },
       [](const C& c) { return fmt(c.hmm.sigma_obs); }},
      {"telegraph_tau0", "junction attempt time [s]",
       [](C& c, const std::string& v) { c.telegraph_tau0 = to_double("telegraph_tau0", v); },
       [](const C& c) { return fmt(c.telegraph_tau0); }},
      {"telegraph_eb_low", "barrier/kT of the low state",
       [](C& c, const std::string& v) { c.telegraph_eb_low = to_double("telegraph_eb_low", v); },
       [](const C& c) { return fmt(c.telegraph_eb_low); }},
      {"telegraph_eb_high", "barrier/kT of the high state",
       [](C& c, const std::string& v) { c.telegraph_eb_high = to_double("telegraph_eb_high", v); },
       [](const C& c) { return fmt(c.telegraph_eb_high); }},
      {"telegraph_level_low", "low level [V]",
       [](C& c, const std::string& v) { c.telegraph_level_low = to_double("telegraph_level_low", v); },
       [](const C& c) { return fmt(c.telegraph_level_low); }},
      {"telegraph_level_high", "high level [V]",
       [](C& c, const std::string& v) { c.telegraph_level_high = to_double("telegraph_level_high", v); },
       [](const C& c) { return fmt(c.telegraph_level_high); }},
      {"telegraph_junctions", "identical junctions in series",
       [](C& c, const std::string& v) { c.telegraph_junctions = to_u64("telegraph_junctions", v); },
       [](const C& c) { return std::to_string(c.telegraph_junctions); }},
      {"telegraph_dt", "time between noise reads [s]",
       [](C& c, const std::string& v) { c.telegraph_dt = to_double("telegraph_dt", v); },
       [](const C& c) { return fmt(c.telegraph_dt); }},
      {"replay_trace", "recorded trace file (with .hdr sidecar); empty synthesizes one from the hmm_* parameters",
       [](C& c, const std::string& v) { c.replay_trace = v; }, [](const C& c) { return c.replay_trace; }},
      {"replay_synthetic_length", "samples in a synthesized replay trace",
       [](C& c, const std::string& v) { c.replay_synthetic_length = to_u64("replay_synthetic_length", v); },
       [](const C& c) { return std::to_string(c.replay_synthetic_length); }},
      {"replay_start", "initial replay cursor",
       [](C& c, const std::string& v) { c.replay_start = to_u64("replay_start", v); },
       [](const C& c) { return std::to_string(c.replay_start); }},
      {"live_buffer", "live ring buffer capacity",
       [](C& c, const std::string& v) { c.live_buffer = to_u64("live_buffer", v); },
       [](const C& c) { return std::to_string(c.live_buffer); }},
      {"live_min_wait", "wait before each live draw [s]",
       [](C& c, const std::string& v) { c.live_min_wait = to_double("live_min_wait", v); },
       [](const C& c) { return fmt(c.live_min_wait); }},
      {"live_device", "serial device path; empty uses the simulated device",
       [](C& c, const std::string& v) { c.live_device = v; }, [](const C& c) { return c.live_device; }},
      {"live_baud", "serial baud rate",
       [](C& c, const std::string& v) { c.live_baud = static_cast<int>(to_u64("live_baud", v)); },
       [](const C& c) { return std::to_string(c.live_baud); }},
      {"live_frame", "text | adc16be",
       [](C& c, const std::string& v) {
         c.live_frame = to_enum<FrameMode>("live_frame", v, {{"text", FrameMode::text}, {"adc16be", FrameMode::adc16be}});
       },
       [](const C& c) { return std::string(c.live_frame == FrameMode::text ? "text" : "adc16be"); }},
      {"live_mock_rate", "simulated device sample rate [Hz]",
       [](C& c, const std::string& v) { c.live_mock_rate = to_double("live_mock_rate", v); },
       [](const C& c) { return fmt(c.live_mock_rate); }},
      {"live_quantize", "quantize simulated readings to a 14-bit ADC",
       [](C& c, const std::string& v) { c.live_quantize = to_bool("live_quantize", v); },
       [](const C& c) { return fmt_bool(c.live_quantize); }},
  };
  return keys;
}

std::string env_name(const std::string& key) {
  std::string out = "NOISELEARN_";
  for (char ch : key) out += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return out;
}

void apply(ExperimentConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(config, trim(value));
      return;
    }
  }
  throw Error(ErrorCode::Config, "unknown config key '" + key + "'");
}

void apply(ExperimentConfig& config, const ConfigMap& values) {
  for (const auto& [k, v] : values) apply(config, k, v);
}

ConfigMap to_map(const ExperimentConfig& config) {
  ConfigMap m;
  for (const auto& k : config_keys()) m[k.name] = k.get(config);
  return m;
}

ExperimentConfig from_map(const ConfigMap& values) {
  ExperimentConfig c;
  apply(c, values);
  return c;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
  ConfigMap m;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    m[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return m;
}

void apply_environment(ExperimentConfig& config) {
  for (const auto& k : config_keys()) {
    if (const char* v = std::getenv(env_name(k.name).c_str())) k.set(config, trim(v));
  }
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::Config, what); };
  if (!(eta > 0)) fail("eta must be positive");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (rule == Rule::danp && !(decor_eps > 0)) fail("danp requires decor_eps > 0");
  if (rule != Rule::danp && decor_eps != 0) fail("decor_eps is only used by danp");
  if (rule == Rule::np && noise != NoiseKind::gaussian) fail("np requires gaussian noise (sigma enters the update)");
  if (!(noise_gain > 0)) fail("noise_gain must be positive");
  if (dataset != DatasetKind::teacher && data_dir.empty()) fail("data_dir is required for " + to_string(dataset));
  if (dataset == DatasetKind::teacher && teacher_samples == 0) fail("teacher_samples must be positive");
  for (std::size_t w : hidden) {
    if (w == 0) fail("hidden widths must be positive");
  }
  try {
    activation.validate();
    (void)loss_kind();
  } catch (const Error& e) {
    fail(e.what());
  }
  if (noise == NoiseKind::telegraph && telegraph_junctions == 0) fail("telegraph_junctions must be >= 1");
  if (noise == NoiseKind::live && live_buffer == 0) fail("live_buffer must be positive");
  if (rule == Rule::bp) return;

  // Amplitude of the perturbation actually injected.
  double amplitude = 0;
  switch (noise) {
    case NoiseKind::gaussian: amplitude = sigma; break;
    case NoiseKind::bernoulli: amplitude = bernoulli_alpha; break;
    case NoiseKind::hmm: amplitude = std::max({std::abs(hmm.mu1 - hmm.mu2), hmm.sigma_obs}); break;
    case NoiseKind::telegraph: amplitude = telegraph_level_high - telegraph_level_low; break;
    case NoiseKind::replay:
    case NoiseKind::live: amplitude = 1; break;
  }
  amplitude *= noise_gain;
  try {
    if (noise != NoiseKind::replay && noise != NoiseKind::live) noiselearn::validate(make_noise_spec(*this));
  } catch (const Error& e) {
    fail(e.what());
  }
  constexpr double kMinAmplitude = 1e-9;
  if ((rule == Rule::anp || rule == Rule::danp) && amplitude < kMinAmplitude) {
    fail(anp_clean_second_pass ? "degenerate ANP: one pass is clean and the other carries vanishing noise"
                               : "degenerate ANP: noise amplitude is vanishing in both passes");
  }
  if (rule == Rule::np && amplitude < kMinAmplitude) fail("np requires sigma > 0");
  if (anp_clean_second_pass && rule != Rule::anp && rule != Rule::danp) fail("anp_clean_second_pass needs anp/danp");
}

NoiseSpec make_noise_spec(const ExperimentConfig& c) {
  switch (c.noise) {
    case NoiseKind::gaussian: return GaussianNoise{c.sigma};
    case NoiseKind::bernoulli: return BernoulliNoise{c.bernoulli_p, c.bernoulli_alpha, c.bernoulli_h};
    case NoiseKind::hmm: return c.hmm;
    case NoiseKind::telegraph: {
      TelegraphParams p;
      p.tau0 = c.telegraph_tau0;
      p.eb_over_kt = {c.telegraph_eb_low, c.telegraph_eb_high};
      p.level_low = c.telegraph_level_low;
      p.level_high = c.telegraph_level_high;
      return TelegraphNoise{std::vector<TelegraphParams>(c.telegraph_junctions, p), c.telegraph_dt};
    }
    case NoiseKind::replay: {
      auto trace = std::make_shared<TelegraphTrace>();
      if (!c.replay_trace.empty()) {
        *trace = read_trace(c.replay_trace);
      } else {
        Rng rng = make_rng(c.seed, "replay-trace");
        HmmChain chain(c.hmm, rng);
        const Vector v = chain.sample(rng, c.replay_synthetic_length);
        trace->samples.assign(v.data(), v.data() + v.size());
        trace->sampling_rate = 40e3;
      }
      return ReplayNoise{trace, c.replay_start};
    }
    case NoiseKind::live: return LiveNoise{c.live_buffer, c.live_min_wait};
  }
  throw Error(ErrorCode::Config, "unknown noise kind");
}

}  // namespace noiselearn
