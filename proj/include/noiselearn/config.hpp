#pragma once

#include "noiselearn/learning.hpp"
#include "noiselearn/live.hpp"
#include "noiselearn/network.hpp"
#include "noiselearn/noise.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace noiselearn {

enum class DatasetKind { mnist, cifar10, cifar100, teacher };
enum class Rule { bp, np, anp, danp };
enum class OptimizerKind { adam, plain };
enum class NoiseKind { gaussian, bernoulli, hmm, telegraph, replay, live };

using ConfigMap = std::map<std::string, std::string>;

struct ExperimentConfig {
  DatasetKind dataset = DatasetKind::mnist;
  std::string data_dir;
  std::size_t train_cap = 0;
  std::size_t test_cap = 0;
  bool augment = true;  // CIFAR only
  bool normalize = false;  // CIFAR per-channel standardization
  bool shuffle_labels = false;
  std::size_t teacher_samples = 100;
  std::uint64_t teacher_seed = 7;

  std::vector<std::size_t> hidden;  // hidden widths; input/output come from the data
  Activation activation = Activation::leaky_relu(0.01);
  std::string loss = "auto";

  Rule rule = Rule::anp;
  AnpInput anp_input = AnpInput::first_pass;
  bool anp_clean_second_pass = false;
  OptimizerKind optimizer = OptimizerKind::adam;
  double eta = 1e-3;
  double decor_eps = 0.0;
  bool decorrelate_input = true;
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;

  NoiseKind noise = NoiseKind::gaussian;
  double noise_gain = 1.0;
  double sigma = 0.01;
  double bernoulli_p = 0.5;
  double bernoulli_alpha = 0.01;
  int bernoulli_h = 1;
  HmmNoise hmm{};
  double telegraph_tau0 = 1e-9;
  double telegraph_eb_low = 13.8;
  double telegraph_eb_high = 13.8;
  double telegraph_level_low = 0.0362;
  double telegraph_level_high = 0.0480;
  std::size_t telegraph_junctions = 1;
  double telegraph_dt = 1e-4;
  std::string replay_trace;
  std::size_t replay_synthetic_length = 1'000'000;
  std::size_t replay_start = 0;
  std::size_t live_buffer = 200;
  double live_min_wait = 1e-3;
  std::string live_device;  // empty: simulated device driven by the hmm_* parameters
  int live_baud = 115200;
  FrameMode live_frame = FrameMode::text;
  double live_mock_rate = 1000.0;
  bool live_quantize = false;

  LossKind loss_kind() const;
  bool classification() const { return dataset != DatasetKind::teacher; }

  /// Throws Config on any violation, before any work happens.
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

/// Environment variable consulted for `key`, e.g. NOISELEARN_BATCH_SIZE.
std::string env_name(const std::string& key);

void apply(ExperimentConfig& config, const ConfigMap& values);
void apply(ExperimentConfig& config, const std::string& key, const std::string& value);
ConfigMap to_map(const ExperimentConfig& config);
ExperimentConfig from_map(const ConfigMap& values);

/// `key = value` lines; '#' starts a comment. Values are kept verbatim,
/// so sweep files can list alternatives separated by '|'.
ConfigMap read_config_file(const std::filesystem::path& path);

/// Overrides every key whose environment variable is set.
void apply_environment(ExperimentConfig& config);

/// Builds the noise spec described by the config.
NoiseSpec make_noise_spec(const ExperimentConfig& config);

std::string to_string(Rule rule);
std::string to_string(DatasetKind kind);
std::string to_string(NoiseKind kind);

}  // namespace noiselearn
