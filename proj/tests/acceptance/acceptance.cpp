// Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
// non-zero if any criterion fails.

#include "CLI11.hpp"

#include "noiselearn/config.hpp"
#include "noiselearn/errors.hpp"
#include "noiselearn/harness.hpp"
#include "noiselearn/learning.hpp"
#include "noiselearn/network.hpp"
#include "noiselearn/noise.hpp"
#include "noiselearn/numerics.hpp"
#include "noiselearn/rng.hpp"
#include "noiselearn/smtj.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace nl = noiselearn;
namespace fs = std::filesystem;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status = Status::fail;
  std::string detail;
};

struct Context {
  std::string mnist_dir;
  fs::path out_dir;
  // Filled by criterion 5 for criterion 6.
  std::optional<double> danp_test_acc;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Status::pass : Status::fail, std::move(detail)}; }

nl::Matrix gaussian_matrix(nl::Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  nl::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

nl::NetworkState linear_net(nl::Matrix w) {
  nl::NetworkState net;
  net.layers.push_back({std::move(w), nl::Activation::linear()});
  return net;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool have_mnist(const Context& ctx) {
  return !ctx.mnist_dir.empty() && fs::exists(fs::path(ctx.mnist_dir) / "train-images-idx3-ubyte");
}

nl::ExperimentConfig danp_mnist(const Context& ctx) {
  nl::ExperimentConfig c;
  c.dataset = nl::DatasetKind::mnist;
  c.data_dir = ctx.mnist_dir;
  c.train_cap = 10'000;
  c.hidden = {500, 500, 500};
  c.rule = nl::Rule::danp;
  c.eta = 0.1 * std::ldexp(1.0, -11);
  c.decor_eps = 0.1 * std::ldexp(1.0, -19);
  c.batch_size = 64;
  c.epochs = 50;
  c.noise = nl::NoiseKind::hmm;
  return c;
}

nl::RunMetrics run_logged(const Context& ctx, const nl::ExperimentConfig& cfg, const std::string& name,
                          const nl::DataBundle* data = nullptr) {
  nl::RunMetrics m = nl::run_experiment(cfg, data, [&](const nl::EpochMetrics& e) {
    std::printf("    [%s] epoch %zu train_acc %.4f test_acc %.4f test_loss %.5g\n", name.c_str(), e.epoch, e.train_acc,
                e.test_acc, e.test_loss);
    std::fflush(stdout);
  });
  nl::emit_metrics(m, ctx.out_dir / (name + ".csv"));
  return m;
}

// 1. ANP on a scalar linear net is the exact gradient; NP is unbiased.
Outcome estimator_correctness(Context&) {
  nl::Rng rng(101);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> amp(0.05, 0.5);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const double w = u(rng), x = u(rng);
    const double t = w * x + (u(rng) > 0 ? 1.0 : -1.0) * (0.5 + std::abs(u(rng)));
    const double e = amp(rng);
    const auto net = linear_net(nl::Matrix::Constant(1, 1, w));
    const nl::Vector xv = nl::Vector::Constant(1, x), tv = nl::Vector::Constant(1, t);
    const std::vector<nl::Vector> plus{nl::Vector::Constant(1, e)}, minus{nl::Vector::Constant(1, -e)};
    const auto a = nl::anp_update(nl::forward_noisy(net, xv, plus), nl::forward_noisy(net, xv, minus),
                                  nl::LossKind::squared_error, tv);
    if (!a) return {Status::fail, "antithetic pair skipped"};
    // d/dw of (w x - t)^2.
    const double g = 2 * (w * x - t) * x;
    if (g == 0) continue;
    worst = std::max(worst, std::abs((*a)[0](0, 0) - g) / std::abs(g));
  }

  const double sigma = 0.1, w = 0.7, x = 1.3, t = -0.4;
  const auto net = linear_net(nl::Matrix::Constant(1, 1, w));
  const nl::Vector xv = nl::Vector::Constant(1, x), tv = nl::Vector::Constant(1, t);
  const auto clean = nl::forward_clean(net, xv);
  double mean = 0;
  const int draws = 100'000;
  for (int i = 0; i < draws; ++i) {
    const std::vector<nl::Vector> eps{nl::sample_gaussian(rng, sigma, 1)};
    mean += nl::np_update(clean, nl::forward_noisy(net, xv, eps), eps, sigma, nl::LossKind::squared_error, tv)[0](0, 0);
  }
  mean /= draws;
  const double g = 2 * (w * x - t) * x;
  const double np_rel = std::abs(mean - g) / std::abs(g);
  return verdict(worst <= 1e-12 && np_rel < 0.05,
                 fmt("anp max rel err %.3g over 1000 cases (<=1e-12); np mean %.5f vs grad %.5f, rel %.4f (<0.05)",
                     worst, mean, g, np_rel));
}

// 2. The mean ANP update aligns with the BP gradient.
Outcome gradient_alignment(Context&) {
  nl::Rng rng(202);
  std::uniform_int_distribution<int> width(2, 20);
  double worst = 1.0;
  std::string widths;
  for (int trial = 0; trial < 5; ++trial) {
    const int in = width(rng), out = width(rng);
    widths += fmt("%s%dx%d", trial ? "," : "", out, in);
    const auto net = linear_net(gaussian_matrix(rng, out, in, 1.0 / std::sqrt(double(in))));
    const nl::Vector x = gaussian_matrix(rng, in, 1).col(0);
    const nl::Vector t = gaussian_matrix(rng, out, 1).col(0);
    const nl::UpdateSet bp = nl::bp_update(net, x, t, nl::LossKind::squared_error);
    nl::UpdateSet mean{nl::Matrix::Zero(out, in)};
    for (int i = 0; i < 10'000; ++i) {
      const std::vector<nl::Vector> e1{nl::sample_gaussian(rng, 0.01, out)};
      const std::vector<nl::Vector> e2{nl::sample_gaussian(rng, 0.01, out)};
      const auto a = nl::anp_update(nl::forward_noisy(net, x, e1), nl::forward_noisy(net, x, e2),
                                    nl::LossKind::squared_error, t);
      if (a) mean[0] += (*a)[0];
    }
    worst = std::min(worst, nl::alignment(mean, bp));
  }
  return verdict(worst > 0.9, fmt("min cosine %.4f over nets %s (>0.9)", worst, widths.c_str()));
}

// 3. Decorrelation on ill-conditioned Gaussian data.
Outcome decorrelation(Context&) {
  nl::Rng rng(303);
  const int d = 10;
  // Covariance Q diag(l) Q^T with l log-spaced over two decades, trace = d.
  Eigen::HouseholderQR<nl::Matrix> qr(gaussian_matrix(rng, d, d));
  const nl::Matrix q = qr.householderQ();
  nl::Vector l(d);
  for (int i = 0; i < d; ++i) l[i] = std::pow(100.0, double(i) / (d - 1));
  l *= d / l.sum();
  const nl::Matrix root = q * l.cwiseSqrt().asDiagonal();
  const double cond = l.maxCoeff() / l.minCoeff();

  auto draw = [&](int n) -> nl::Matrix { return (root * gaussian_matrix(rng, d, n)).transpose(); };
  const nl::Matrix held_out = draw(20'000);
  nl::Matrix r = nl::identity(d);
  const double before = nl::offdiag_frobenius(held_out * r.transpose(), true);
  for (int it = 0; it < 200; ++it) {
    const nl::Matrix batch = draw(64);
    r = nl::decorrelation_update(r, batch * r.transpose(), 0.01);
  }
  const double after = nl::offdiag_frobenius(held_out * r.transpose(), true);
  return verdict(after <= 0.5 * before,
                 fmt("condition number %.1f; off-diagonal norm %.4f -> %.4f (%.1f%% reduction, >=50%%)", cond, before,
                     after, 100 * (1 - after / before)));
}

// 4. Single-layer ANP on MNIST.
Outcome single_layer_mnist(Context& ctx) {
  if (!have_mnist(ctx)) return {Status::fail, "MNIST not found in '" + ctx.mnist_dir + "'"};
  nl::ExperimentConfig c;
  c.dataset = nl::DatasetKind::mnist;
  c.data_dir = ctx.mnist_dir;
  c.train_cap = 10'000;
  c.hidden = {};
  c.rule = nl::Rule::anp;
  c.noise = nl::NoiseKind::gaussian;
  c.sigma = 0.01;
  c.eta = 1e-3;
  c.batch_size = 64;
  c.epochs = 20;
  const nl::RunMetrics m = run_logged(ctx, c, "c4_single_layer_anp");
  return verdict(m.last().train_acc >= 0.85,
                 fmt("train acc %.4f (>=0.85), test acc %.4f", m.last().train_acc, m.last().test_acc));
}

std::optional<std::string> env_dir(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

// 5. Multilayer DANP on MNIST, with a shuffled-label control and a CIFAR smoke run.
Outcome multilayer_danp(Context& ctx) {
  if (!have_mnist(ctx)) return {Status::fail, "MNIST not found in '" + ctx.mnist_dir + "'"};
  const auto t0 = std::chrono::steady_clock::now();
  const nl::ExperimentConfig c = danp_mnist(ctx);
  const nl::RunMetrics m = run_logged(ctx, c, "c5_danp");
  nl::ExperimentConfig control = c;
  control.shuffle_labels = true;
  const nl::RunMetrics s = run_logged(ctx, control, "c5_danp_shuffled_labels");
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60;
  ctx.danp_test_acc = m.last().test_acc;

  bool ok = m.last().test_acc >= 0.85 && m.last().test_acc > s.last().test_acc && minutes < 30;
  std::string detail = fmt("test acc %.4f (>=0.85), shuffled control %.4f, %.1f min for both (<30)", m.last().test_acc,
                           s.last().test_acc, minutes);

  const std::pair<const char*, nl::DatasetKind> cifar[] = {{"NOISELEARN_CIFAR10_DIR", nl::DatasetKind::cifar10},
                                                           {"NOISELEARN_CIFAR100_DIR", nl::DatasetKind::cifar100}};
  for (const auto& [var, kind] : cifar) {
    const double chance_bar = kind == nl::DatasetKind::cifar10 ? 0.15 : 0.02;
    const auto dir = env_dir(var);
    if (!dir) {
      detail += fmt("; %s smoke SKIP (%s unset)", var + 11, var);
      continue;
    }
    nl::ExperimentConfig cc = c;
    cc.dataset = kind;
    cc.data_dir = *dir;
    cc.train_cap = 5'000;
    cc.epochs = 5;
    cc.normalize = true;
    const nl::RunMetrics cm = run_logged(ctx, cc, std::string("c5_smoke_") + (var + 11));
    ok = ok && cm.last().test_acc > chance_bar;
    detail += fmt("; %s smoke test acc %.4f (>%.2f)", var + 11, cm.last().test_acc, chance_bar);
  }
  return verdict(ok, detail);
}

// 6. Serial replay of a recorded HMM trace against independent noise.
Outcome replay_worst_case(Context& ctx) {
  if (!have_mnist(ctx)) return {Status::fail, "MNIST not found in '" + ctx.mnist_dir + "'"};
  if (!ctx.danp_test_acc) return {Status::fail, "criterion 5 did not produce a reference accuracy"};
  nl::ExperimentConfig c = danp_mnist(ctx);
  c.noise = nl::NoiseKind::replay;
  const nl::RunMetrics m = run_logged(ctx, c, "c6_danp_replay");
  const double loss = *ctx.danp_test_acc - m.last().test_acc;
  return verdict(loss <= 0.10, fmt("replay test acc %.4f vs independent %.4f: %.2f points lost (<=10), %llu wraps",
                                   m.last().test_acc, *ctx.danp_test_acc, 100 * loss,
                                   static_cast<unsigned long long>(m.last().wraps)));
}

// 7. Noise physics round trips.
Outcome noise_physics(Context&) {
  std::vector<std::string> failures;
  auto within = [&](const char* what, double got, double want, double tol) {
    if (!(std::abs(got / want - 1) <= tol)) failures.push_back(fmt("%s %.5g vs %.5g", what, got, want));
  };

  const nl::HmmNoise spec{};
  nl::Rng rng(707);
  nl::HmmChain chain(spec, rng);
  const nl::Vector v = chain.sample(rng, 1'000'000);
  const nl::HmmFit fit = nl::fit_hmm(nl::TelegraphTrace{std::vector<double>(v.data(), v.data() + v.size()), 40e3});
  within("p_flip", fit.p_flip, spec.p_flip, 0.05);
  within("mu1", fit.mu1, spec.mu1, 0.05);
  within("mu2", fit.mu2, spec.mu2, 0.05);
  within("sigma", fit.sigma_obs, spec.sigma_obs, 0.05);

  // Symmetric telegraph with tau = 10 ms read at 2 kHz; lambda = 1/tau.
  nl::TelegraphParams p;
  p.tau0 = 1e-9;
  p.eb_over_kt = {std::log(10e-3 / p.tau0), std::log(10e-3 / p.tau0)};
  p.level_low = spec.mu2;
  p.level_high = spec.mu1;
  const double lambda = 1.0 / nl::dwell_time(p, nl::JunctionState::low);
  const double rate = 2e3;
  const nl::TelegraphTrace t = nl::simulate_telegraph(p, 2500.0, rate, rng);
  const auto acf = nl::autocorrelation(t, 200);
  double worst_acf = 0;
  for (std::size_t k = 1; k < acf.size(); ++k) {
    const double expected = std::exp(-2 * lambda * double(k) / rate);
    if (expected < 0.1) break;  // first decade
    worst_acf = std::max(worst_acf, std::abs(acf[k] / expected - 1));
  }
  if (!(worst_acf <= 0.10)) failures.push_back(fmt("acf rel err %.3f", worst_acf));

  const std::vector<double> taus{1e-3, 2e-3, 4e-3};
  const double ens = nl::ensemble_rate(taus);
  if (ens != 1e3 + 5e2 + 2.5e2) failures.push_back(fmt("ensemble_rate %.17g", ens));

  nl::TelegraphParams a = p;
  a.eb_over_kt = {std::log(1e-3 / a.tau0), std::log(1e-3 / a.tau0)};
  a.level_low = 0.0;
  a.level_high = 1.0;
  nl::TelegraphParams b = a;
  std::vector<nl::TelegraphTrace> parts{nl::simulate_telegraph(a, 50.0, 5e3, rng),
                                        nl::simulate_telegraph(a, 50.0, 5e3, rng)};
  const auto series = nl::compose_series(parts);
  auto var = [](const std::vector<double>& s) {
    double m = 0, q = 0;
    for (double x : s) m += x;
    m /= double(s.size());
    for (double x : s) q += (x - m) * (x - m);
    return q / double(s.size());
  };
  if (nl::distinct_levels(series.samples) != nl::expected_level_count(2, true)) failures.push_back("equal-TMR levels");
  within("series variance", var(series.samples), var(parts[0].samples) + var(parts[1].samples), 0.02);
  b.level_high = 0.3;
  parts[1] = nl::simulate_telegraph(b, 50.0, 5e3, rng);
  if (nl::distinct_levels(nl::compose_series(parts).samples) != nl::expected_level_count(2, false)) {
    failures.push_back("distinct-TMR levels");
  }

  std::string detail = fmt("fit p=%.5f mu1=%.5f mu2=%.5f sigma=%.6f; acf max rel err %.3f over first decade",
                           fit.p_flip, fit.mu1, fit.mu2, fit.sigma_obs, worst_acf);
  for (const auto& f : failures) detail += "; FAILED " + f;
  return verdict(failures.empty(), detail);
}

// 8. Teacher-student learning with a simulated live device.
Outcome teacher_live(Context& ctx) {
  nl::ExperimentConfig c;
  c.dataset = nl::DatasetKind::teacher;
  c.teacher_samples = 100;
  c.hidden = {2, 2};
  c.rule = nl::Rule::danp;
  c.noise = nl::NoiseKind::live;
  c.eta = 1e-3;
  c.decor_eps = 1e-4;
  c.batch_size = 1;
  c.epochs = 100;
  const nl::RunMetrics m = nl::run_experiment(c);
  nl::emit_metrics(m, ctx.out_dir / "c8_teacher_live.csv");

  std::vector<double> medians;
  for (const auto& d : m.diagnostics) medians.push_back(d.loss_median);
  const double first = medians[1], last = medians[100];
  // After epoch 50 each median stays within 10% of the epoch-1 median above
  // the lowest median seen since epoch 50.
  const double slack = 0.10 * first;
  double running = medians[50], worst_excess = 0;
  for (std::size_t e = 51; e <= 100; ++e) {
    worst_excess = std::max(worst_excess, medians[e] - running);
    running = std::min(running, medians[e]);
  }
  return verdict(last < 0.25 * first && worst_excess <= slack,
                 fmt("median loss epoch 1 %.4g -> epoch 100 %.4g (ratio %.3f, <0.25); max rise after epoch 50 %.3g "
                     "(<= %.3g)",
                     first, last, last / first, worst_excess, slack));
}

// 9. Bitwise determinism of metrics files.
Outcome determinism(Context& ctx) {
  std::vector<nl::ExperimentConfig> configs;
  nl::ExperimentConfig teacher;
  teacher.dataset = nl::DatasetKind::teacher;
  teacher.hidden = {2, 2};
  teacher.rule = nl::Rule::danp;
  teacher.decor_eps = 1e-4;
  teacher.batch_size = 1;
  teacher.epochs = 20;
  for (nl::NoiseKind k : {nl::NoiseKind::gaussian, nl::NoiseKind::hmm, nl::NoiseKind::telegraph, nl::NoiseKind::replay,
                          nl::NoiseKind::live}) {
    teacher.noise = k;
    configs.push_back(teacher);
  }
  if (have_mnist(ctx)) {
    nl::ExperimentConfig mnist = danp_mnist(ctx);
    mnist.hidden = {100};
    mnist.train_cap = 2'000;
    mnist.test_cap = 1'000;
    mnist.epochs = 2;
    configs.push_back(mnist);
  }

  const fs::path dir = ctx.out_dir / "c9";
  fs::create_directories(dir);
  std::size_t identical = 0;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const fs::path a = dir / fmt("run%zu_a.csv", i), b = dir / fmt("run%zu_b.csv", i);
    nl::emit_metrics(nl::run_experiment(configs[i]), a);
    nl::emit_metrics(nl::run_experiment(configs[i]), b);
    identical += slurp(a) == slurp(b) && slurp(a.string() + ".diag.csv") == slurp(b.string() + ".diag.csv");
  }

  // Same runs through the sweep runner, serially and concurrently.
  nl::ConfigMap base = nl::to_map(teacher);
  base["noise"] = "gaussian | hmm | live";
  const nl::SweepGrid grid = nl::parse_grid(base);
  const auto serial = nl::run_sweep(grid, 1);
  const auto parallel = nl::run_sweep(grid, 3);
  nl::write_sweep(serial, grid, dir / "sweep_j1");
  nl::write_sweep(parallel, grid, dir / "sweep_j3");
  bool sweep_same = true;
  for (std::size_t i = 0; i < serial.points.size(); ++i) {
    const std::string name = fmt("point_%04zu.csv", i);
    sweep_same = sweep_same && slurp(dir / "sweep_j1" / name) == slurp(dir / "sweep_j3" / name);
  }
  sweep_same = sweep_same && slurp(dir / "sweep_j1" / "summary.csv") == slurp(dir / "sweep_j3" / "summary.csv");
  return verdict(identical == configs.size() && sweep_same,
                 fmt("%zu/%zu configs bitwise identical; sweep jobs=1 vs jobs=3 %s", identical, configs.size(),
                     sweep_same ? "identical" : "DIFFERENT"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noiselearn acceptance suite"};
  Context ctx;
  std::string out = "acceptance_out";
  std::vector<int> only;
  app.add_option("--mnist-dir", ctx.mnist_dir, "MNIST IDX directory")->envname("NOISELEARN_MNIST_DIR");
  app.add_option("--out", out, "directory for metrics files");
  app.add_option("--only", only, "run only these criteria")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  ctx.out_dir = out;
  fs::create_directories(ctx.out_dir);
  fs::remove(ctx.out_dir / "summary.txt");

  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;  // 0: no limit of its own
    std::function<Outcome(Context&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "estimator correctness", 10, estimator_correctness},
      {2, "gradient alignment", 60, gradient_alignment},
      {3, "decorrelation", 10, decorrelation},
      {4, "single-layer ANP on MNIST", 600, single_layer_mnist},
      {5, "multilayer DANP on MNIST", 1800, multilayer_danp},
      {6, "replay worst case", 0, replay_worst_case},
      {7, "noise physics round trips", 60, noise_physics},
      {8, "teacher network with live noise", 120, teacher_live},
      {9, "determinism", 0, determinism},
  };
  const std::set<int> selected(only.begin(), only.end());

  int failed = 0;
  std::vector<std::string> lines;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    std::printf("criterion %d: %s ...\n", c.id, c.name);
    std::fflush(stdout);
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {Status::fail, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_seconds > 0 && secs >= c.limit_seconds && o.status == Status::pass) {
      o.status = Status::fail;
      o.detail += fmt("; runtime over %.0f s", c.limit_seconds);
    }
    const char* tag = o.status == Status::pass ? "PASS" : o.status == Status::skip ? "SKIP" : "FAIL";
    failed += o.status == Status::fail;
    std::string line = fmt("%s criterion %d (%s): ", tag, c.id, c.name) + o.detail + fmt(" [%.1f s]", secs);
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    lines.push_back(std::move(line));
  }
  std::printf("\nsummary\n");
  std::ofstream summary(ctx.out_dir / "summary.txt");
  for (const auto& l : lines) {
    std::printf("%s\n", l.c_str());
    summary << l << '\n';
  }
  return failed == 0 ? 0 : 1;
}
