#pragma once

#include "noiselearn/numerics.hpp"
#include "noiselearn/rng.hpp"
#include "noiselearn/smtj.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace noiselearn {

struct GaussianNoise {
  double sigma = 1.0;
};

/// Sum of `h` draws from {-alpha, +alpha}, +alpha with probability p.
struct BernoulliNoise {
  double p = 0.5;
  double alpha = 1.0;
  int h = 1;
};

/// Two-state hidden Markov model with Gaussian emission. State "1" emits
/// around mu1, state "2" around mu2.
struct HmmNoise {
  double p_flip = 0.0809;
  double mu1 = 0.0480;
  double mu2 = 0.0362;
  double sigma_obs = 0.001;
};

/// Series stack of junctions simulated in continuous time and read out
/// every `dt` seconds.
struct TelegraphNoise {
  std::vector<TelegraphParams> junctions;
  double dt = 1e-3;
};

struct ReplayNoise {
  std::shared_ptr<const TelegraphTrace> trace;
  std::size_t start = 0;
};

struct LiveNoise {
  std::size_t buffer_size = 200;
  double min_wait = 1e-3;  // [s]
};

using NoiseSpec =
    std::variant<GaussianNoise, BernoulliNoise, HmmNoise, TelegraphNoise, ReplayNoise, LiveNoise>;

void validate(const NoiseSpec& spec);
std::string describe(const NoiseSpec& spec);

Vector sample_gaussian(Rng& rng, double sigma, std::size_t n);
Vector sample_bernoulli(Rng& rng, double p, double alpha, int h, std::size_t n);

class HmmChain {
 public:
  /// `in_state1` selects the mu1 state; when unset the chain starts from
  /// its (symmetric) stationary distribution.
  HmmChain(const HmmNoise& spec, Rng& rng);
  HmmChain(const HmmNoise& spec, bool in_state1);

  /// Emits the current state's observation, then advances one step.
  double step(Rng& rng);
  Vector sample(Rng& rng, std::size_t n);

  bool in_state1() const { return state1_; }

 private:
  HmmNoise spec_;
  bool state1_;
};

Vector sample_hmm(HmmChain& chain, Rng& rng, std::size_t n);

/// Mean-centered serial readout of a recorded trace, wrapping at the end.
class ReplayCursor {
 public:
  explicit ReplayCursor(const TelegraphTrace& trace, std::size_t start = 0);

  Vector next(std::size_t n);

  std::size_t cursor() const { return cursor_; }
  std::uint64_t wraps() const { return wraps_; }
  const std::vector<double>& centered() const { return centered_; }

 private:
  std::vector<double> centered_;
  std::size_t cursor_ = 0;
  std::uint64_t wraps_ = 0;
  bool at_end_ = false;
};

/// A hardware-backed stream: each draw returns a fresh shuffled, centered
/// snapshot of the device buffer.
class LiveFeed {
 public:
  virtual ~LiveFeed() = default;
  virtual Vector draw(Rng& rng) = 0;
};

/// Stateful perturbation generator. Identical (spec, seed, call sequence)
/// produce bitwise identical output. Not thread-safe.
class NoiseSource {
 public:
  NoiseSource(NoiseSpec spec, std::uint64_t seed, double gain = 1.0,
              std::shared_ptr<LiveFeed> live = nullptr);
  ~NoiseSource();
  NoiseSource(NoiseSource&&) noexcept;
  NoiseSource& operator=(NoiseSource&&) noexcept;

  /// n consecutive values from a single stream.
  Vector sample(std::size_t n);

  /// One vector per layer. Gaussian and Bernoulli draw i.i.d. values, HMM
  /// and telegraph specs run one independent device per unit, replay and
  /// live specs hand out consecutive values serially from the first layer
  /// to the last.
  std::vector<Vector> layer_noise(std::span<const std::size_t> sizes);

  const NoiseSpec& spec() const { return spec_; }
  double gain() const { return gain_; }
  std::uint64_t wrap_count() const;

 private:
  struct Bank;

  NoiseSpec spec_;
  double gain_;
  Rng rng_;
  std::shared_ptr<LiveFeed> live_;
  std::unique_ptr<Bank> bank_;
};

}  // namespace noiselearn
