#include "noiselearn/config.hpp"
#include "noiselearn/data.hpp"
#include "noiselearn/errors.hpp"
#include "noiselearn/harness.hpp"
#include "noiselearn/network.hpp"
#include "noiselearn/trace_io.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

namespace nl = noiselearn;

namespace {

// Config keys double as flags (--batch-size) with NOISELEARN_* overrides.
struct KeyFlags {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    for (const auto& key : nl::config_keys()) {
      std::string flag = "--" + key.name;
      for (char& c : flag) {
        if (c == '_') c = '-';
      }
      options[key.name] = app->add_option(flag, values[key.name], key.help)->envname(nl::env_name(key.name));
    }
  }

  // Flags and environment variables override `base`.
  nl::ConfigMap merge(nl::ConfigMap base) const {
    for (const auto& [name, opt] : options) {
      if (opt->count() > 0) base[name] = values.at(name);
    }
    return base;
  }
};

nl::ConfigMap load_base(const std::string& config_path) {
  return config_path.empty() ? nl::ConfigMap{} : nl::read_config_file(config_path);
}

void print_epoch(const nl::EpochMetrics& m) {
  std::fprintf(stderr, "epoch %4zu  train_loss %.6g  train_acc %.4f  test_loss %.6g  test_acc %.4f  skips %llu\n",
               m.epoch, m.train_loss, m.train_acc, m.test_loss, m.test_acc,
               static_cast<unsigned long long>(m.skips));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noise-based local learning for multilayer perceptrons"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::string checkpoint_path;
  bool quiet = false;
  KeyFlags train_keys;
  auto* train = app.add_subcommand("train", "run one experiment");
  train->add_option("-c,--config", config_path, "key = value config file");
  train->add_option("-o,--out", out_path, "metrics CSV path")->default_val("metrics.csv");
  train->add_option("--save-checkpoint", checkpoint_path, "write the trained network here");
  train->add_flag("-q,--quiet", quiet, "no per-epoch progress");
  train_keys.attach(train);

  std::string grid_path;
  std::string sweep_dir;
  std::size_t jobs = 1;
  KeyFlags sweep_keys;
  auto* sweep = app.add_subcommand("sweep", "run a hyperparameter grid");
  sweep->add_option("-g,--grid", grid_path, "grid file; values separated by '|' form axes")->required();
  sweep->add_option("-o,--out", sweep_dir, "output directory")->default_val("sweep");
  sweep->add_option("-j,--jobs", jobs, "concurrent runs")->default_val(1)->envname("NOISELEARN_JOBS");
  sweep_keys.attach(sweep);

  std::string trace_path;
  std::string char_dir;
  std::size_t steps = 1'000'000;
  double rate = 40e3;
  nl::CharacterizeOptions char_options;
  std::string char_config;
  std::string save_trace;
  KeyFlags char_keys;
  auto* characterize = app.add_subcommand("characterize", "histogram, autocorrelation and HMM fit of a trace");
  characterize->add_option("-t,--trace", trace_path, "recorded trace (with .hdr sidecar)");
  characterize->add_option("-c,--config", char_config, "noise spec config used when no trace is given");
  characterize->add_option("--steps", steps, "samples to simulate from the spec")->default_val(steps);
  characterize->add_option("--rate", rate, "sampling rate of the simulated trace [Hz]")->default_val(rate);
  characterize->add_option("--bins", char_options.bins, "histogram bins")->default_val(char_options.bins);
  characterize->add_option("--max-lag", char_options.max_lag, "autocorrelation lags")->default_val(char_options.max_lag);
  characterize->add_option("--save-trace", save_trace, "also write the simulated trace");
  characterize->add_option("-o,--out", char_dir, "output directory")->default_val("characterize");
  char_keys.attach(characterize);

  std::uint64_t teacher_seed = 7;
  std::size_t teacher_samples = 100;
  std::string teacher_prefix;
  auto* teacher = app.add_subcommand("teacher-gen", "emit a 2-2-2-1 teacher network and its samples");
  teacher->add_option("--seed", teacher_seed, "teacher seed")->default_val(teacher_seed);
  teacher->add_option("--samples", teacher_samples, "sample count")->default_val(teacher_samples);
  teacher->add_option("-o,--out", teacher_prefix, "output prefix (.ckpt and .csv)")->default_val("teacher");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const nl::ExperimentConfig config = nl::from_map(train_keys.merge(load_base(config_path)));
      nl::NetworkState net;
      const nl::EpochCallback progress = quiet ? nl::EpochCallback{} : nl::EpochCallback{print_epoch};
      const nl::RunMetrics metrics = nl::run_experiment(config, nullptr, progress, &net);
      nl::emit_metrics(metrics, out_path);
      if (!checkpoint_path.empty()) nl::save_checkpoint(checkpoint_path, net);
      std::printf("final test_acc %.4f test_loss %.6g (%.1f s) -> %s\n", metrics.last().test_acc,
                  metrics.last().test_loss, metrics.wall_seconds, out_path.c_str());
    } else if (sweep->parsed()) {
      const nl::SweepGrid grid = nl::parse_grid(sweep_keys.merge(nl::read_config_file(grid_path)));
      const nl::SweepResult result = nl::run_sweep(grid, jobs);
      nl::write_sweep(result, grid, sweep_dir);
      std::size_t failed = 0;
      for (const auto& p : result.points) failed += p.metrics ? 0 : 1;
      std::printf("%zu runs, %zu failed", result.points.size(), failed);
      if (result.best) std::printf(", best point %zu", *result.best);
      std::printf(" -> %s\n", sweep_dir.c_str());
    } else if (characterize->parsed()) {
      nl::TelegraphTrace trace;
      if (!trace_path.empty()) {
        trace = nl::read_trace(trace_path);
      } else {
        const nl::ExperimentConfig config = nl::from_map(char_keys.merge(load_base(char_config)));
        trace = nl::simulate_spec(config, steps, rate);
        if (!save_trace.empty()) nl::write_trace(save_trace, trace, nl::TraceEncoding::f64le);
      }
      const nl::Characterization result = nl::characterize(trace, char_options);
      nl::write_characterization(result, char_dir);
      if (result.fit) {
        std::printf("p_flip %.5g mu1 %.5g mu2 %.5g sigma_obs %.5g\n", result.fit->p_flip, result.fit->mu1,
                    result.fit->mu2, result.fit->sigma_obs);
      } else {
        std::printf("single-level trace: %s\n", result.two_level_error.c_str());
      }
    } else if (teacher->parsed()) {
      const nl::TeacherTask task = nl::make_teacher_task(teacher_seed, teacher_samples);
      nl::save_checkpoint(teacher_prefix + ".ckpt", task.teacher);
      std::ofstream csv(teacher_prefix + ".csv");
      if (!csv) throw nl::Error(nl::ErrorCode::Io, "cannot write " + teacher_prefix + ".csv");
      csv << "x0,x1,y\n";
      csv.precision(17);
      for (Eigen::Index r = 0; r < task.samples.inputs.rows(); ++r) {
        csv << task.samples.inputs(r, 0) << ',' << task.samples.inputs(r, 1) << ',' << task.samples.targets(r, 0)
            << '\n';
      }
      std::printf("wrote %s.ckpt and %s.csv\n", teacher_prefix.c_str(), teacher_prefix.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
