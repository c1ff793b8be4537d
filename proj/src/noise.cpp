#include "noiselearn/noise.hpp"

#include "noiselearn/errors.hpp"

#include <cmath>
#include <optional>
#include <numeric>
#include <sstream>

namespace noiselearn {

namespace {

void require_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, std::string(what) + " must lie in [0,1]");
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// One series stack of junctions advanced in continuous time.
struct TelegraphStack {
  std::vector<int> state;
  std::vector<double> remaining;

  TelegraphStack(const TelegraphNoise& spec, Rng& rng) {
    for (const auto& j : spec.junctions) {
      const double lo = dwell_time(j, JunctionState::low);
      const double hi = dwell_time(j, JunctionState::high);
      const int s = std::bernoulli_distribution(hi / (lo + hi))(rng) ? 1 : 0;
      state.push_back(s);
      remaining.push_back(std::exponential_distribution<double>(1.0 / (s ? hi : lo))(rng));
    }
  }

  double emit(const TelegraphNoise& spec) const {
    double v = 0;
    for (std::size_t i = 0; i < state.size(); ++i) {
      v += state[i] ? spec.junctions[i].level_high : spec.junctions[i].level_low;
    }
    return v;
  }

  void advance(const TelegraphNoise& spec, Rng& rng) {
    for (std::size_t i = 0; i < state.size(); ++i) {
      remaining[i] -= spec.dt;
      while (remaining[i] <= 0) {
        state[i] ^= 1;
        const double tau = dwell_time(spec.junctions[i], state[i] ? JunctionState::high : JunctionState::low);
        remaining[i] += std::exponential_distribution<double>(1.0 / tau)(rng);
      }
    }
  }
};

}  // namespace

void validate(const NoiseSpec& spec) {
  std::visit(overloaded{
                 [](const GaussianNoise& g) {
                   if (!(g.sigma > 0)) throw Error(ErrorCode::InvalidArgument, "gaussian sigma must be positive");
                 },
                 [](const BernoulliNoise& b) {
                   require_probability(b.p, "bernoulli p");
                   if (!(b.alpha > 0)) throw Error(ErrorCode::InvalidArgument, "bernoulli alpha must be positive");
                   if (b.h < 1) throw Error(ErrorCode::InvalidArgument, "bernoulli h must be >= 1");
                 },
                 [](const HmmNoise& h) {
                   require_probability(h.p_flip, "hmm p_flip");
                   if (!(h.sigma_obs >= 0)) throw Error(ErrorCode::InvalidArgument, "hmm sigma_obs must be >= 0");
                 },
                 [](const TelegraphNoise& t) {
                   if (t.junctions.empty()) throw Error(ErrorCode::InvalidArgument, "telegraph spec needs a junction");
                   if (!(t.dt > 0)) throw Error(ErrorCode::InvalidArgument, "telegraph dt must be positive");
                   for (const auto& j : t.junctions) j.validate();
                 },
                 [](const ReplayNoise& r) {
                   if (!r.trace || r.trace->samples.empty()) {
                     throw Error(ErrorCode::EmptyInput, "replay trace is empty");
                   }
                 },
                 [](const LiveNoise& l) {
                   if (l.buffer_size == 0) throw Error(ErrorCode::InvalidArgument, "live buffer size must be positive");
                   if (!(l.min_wait >= 0)) throw Error(ErrorCode::InvalidArgument, "live min_wait must be >= 0");
                 },
             },
             spec);
}

std::string describe(const NoiseSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  std::visit(overloaded{
                 [&](const GaussianNoise& g) { os << "gaussian(sigma=" << g.sigma << ")"; },
                 [&](const BernoulliNoise& b) {
                   os << "bernoulli(p=" << b.p << ",alpha=" << b.alpha << ",h=" << b.h << ")";
                 },
                 [&](const HmmNoise& h) {
                   os << "hmm(p_flip=" << h.p_flip << ",mu1=" << h.mu1 << ",mu2=" << h.mu2
                      << ",sigma_obs=" << h.sigma_obs << ")";
                 },
                 [&](const TelegraphNoise& t) {
                   os << "telegraph(junctions=" << t.junctions.size() << ",dt=" << t.dt << ")";
                 },
                 [&](const ReplayNoise& r) {
                   os << "replay(samples=" << (r.trace ? r.trace->samples.size() : 0) << ",start=" << r.start << ")";
                 },
                 [&](const LiveNoise& l) {
                   os << "live(buffer=" << l.buffer_size << ",min_wait=" << l.min_wait << ")";
                 },
             },
             spec);
  return os.str();
}

Vector sample_gaussian(Rng& rng, double sigma, std::size_t n) {
  if (!(sigma > 0)) throw Error(ErrorCode::InvalidArgument, "sample_gaussian: sigma must be positive");
  std::normal_distribution<double> dist(0.0, sigma);
  Vector out(static_cast<Eigen::Index>(n));
  for (auto& v : out) v = dist(rng);
  return out;
}

Vector sample_bernoulli(Rng& rng, double p, double alpha, int h, std::size_t n) {
  require_probability(p, "sample_bernoulli: p");
  if (h < 1) throw Error(ErrorCode::InvalidArgument, "sample_bernoulli: h must be >= 1");
  std::bernoulli_distribution up(p);
  Vector out(static_cast<Eigen::Index>(n));
  for (auto& v : out) {
    int ups = 0;
    for (int k = 0; k < h; ++k) ups += up(rng) ? 1 : 0;
    v = alpha * static_cast<double>(2 * ups - h);
  }
  return out;
}

HmmChain::HmmChain(const HmmNoise& spec, Rng& rng)
    : spec_(spec), state1_(std::bernoulli_distribution(0.5)(rng)) {}

HmmChain::HmmChain(const HmmNoise& spec, bool in_state1) : spec_(spec), state1_(in_state1) {}

double HmmChain::step(Rng& rng) {
  double v = state1_ ? spec_.mu1 : spec_.mu2;
  if (spec_.sigma_obs > 0) v += std::normal_distribution<double>(0.0, spec_.sigma_obs)(rng);
  if (spec_.p_flip > 0 && std::bernoulli_distribution(spec_.p_flip)(rng)) state1_ = !state1_;
  return v;
}

Vector HmmChain::sample(Rng& rng, std::size_t n) {
  Vector out(static_cast<Eigen::Index>(n));
  for (auto& v : out) v = step(rng);
  return out;
}

Vector sample_hmm(HmmChain& chain, Rng& rng, std::size_t n) { return chain.sample(rng, n); }

ReplayCursor::ReplayCursor(const TelegraphTrace& trace, std::size_t start) {
  if (trace.samples.empty()) throw Error(ErrorCode::EmptyInput, "replay: trace is empty");
  const double mean = std::accumulate(trace.samples.begin(), trace.samples.end(), 0.0) /
                      static_cast<double>(trace.samples.size());
  centered_.reserve(trace.samples.size());
  for (double v : trace.samples) centered_.push_back(v - mean);
  cursor_ = start % centered_.size();
}

Vector ReplayCursor::next(std::size_t n) {
  Vector out(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (at_end_) {
      ++wraps_;
      at_end_ = false;
    }
    out[static_cast<Eigen::Index>(i)] = centered_[cursor_];
    if (++cursor_ == centered_.size()) {
      cursor_ = 0;
      at_end_ = true;
    }
  }
  return out;
}

struct NoiseSource::Bank {
  std::optional<HmmChain> hmm_stream;
  std::vector<HmmChain> hmm_units;
  std::optional<TelegraphStack> telegraph_stream;
  std::vector<TelegraphStack> telegraph_units;
  std::optional<ReplayCursor> replay;
};

NoiseSource::NoiseSource(NoiseSpec spec, std::uint64_t seed, double gain, std::shared_ptr<LiveFeed> live)
    : spec_(std::move(spec)), gain_(gain), rng_(derive_seed(seed, "noise-source")), live_(std::move(live)),
      bank_(std::make_unique<Bank>()) {
  validate(spec_);
  if (!(gain_ > 0)) throw Error(ErrorCode::InvalidArgument, "noise gain must be positive");
  if (std::holds_alternative<LiveNoise>(spec_) && !live_) {
    throw Error(ErrorCode::InvalidArgument, "live noise spec needs a live feed");
  }
  if (const auto* r = std::get_if<ReplayNoise>(&spec_)) bank_->replay.emplace(*r->trace, r->start);
}

NoiseSource::~NoiseSource() = default;
NoiseSource::NoiseSource(NoiseSource&&) noexcept = default;
NoiseSource& NoiseSource::operator=(NoiseSource&&) noexcept = default;

std::uint64_t NoiseSource::wrap_count() const { return bank_->replay ? bank_->replay->wraps() : 0; }

Vector NoiseSource::sample(std::size_t n) {
  Vector out = std::visit(
      overloaded{
          [&](const GaussianNoise& g) { return sample_gaussian(rng_, g.sigma, n); },
          [&](const BernoulliNoise& b) { return sample_bernoulli(rng_, b.p, b.alpha, b.h, n); },
          [&](const HmmNoise& h) {
            if (!bank_->hmm_stream) bank_->hmm_stream.emplace(h, rng_);
            return bank_->hmm_stream->sample(rng_, n);
          },
          [&](const TelegraphNoise& t) {
            if (!bank_->telegraph_stream) bank_->telegraph_stream.emplace(t, rng_);
            Vector v(static_cast<Eigen::Index>(n));
            for (auto& x : v) {
              x = bank_->telegraph_stream->emit(t);
              bank_->telegraph_stream->advance(t, rng_);
            }
            return v;
          },
          [&](const ReplayNoise&) { return bank_->replay->next(n); },
          [&](const LiveNoise&) {
            Vector v(static_cast<Eigen::Index>(n));
            Eigen::Index filled = 0;
            while (filled < v.size()) {
              const Vector chunk = live_->draw(rng_);
              if (chunk.size() == 0) throw Error(ErrorCode::EmptyInput, "live feed returned no values");
              const Eigen::Index take = std::min(chunk.size(), v.size() - filled);
              v.segment(filled, take) = chunk.head(take);
              filled += take;
            }
            return v;
          },
      },
      spec_);
  if (gain_ != 1.0) out *= gain_;
  return out;
}

std::vector<Vector> NoiseSource::layer_noise(std::span<const std::size_t> sizes) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  Vector flat;
  if (const auto* h = std::get_if<HmmNoise>(&spec_)) {
    if (bank_->hmm_units.size() != total) {
      bank_->hmm_units.clear();
      bank_->hmm_units.reserve(total);
      for (std::size_t i = 0; i < total; ++i) bank_->hmm_units.emplace_back(*h, rng_);
    }
    flat.resize(static_cast<Eigen::Index>(total));
    for (std::size_t i = 0; i < total; ++i) flat[static_cast<Eigen::Index>(i)] = bank_->hmm_units[i].step(rng_);
    if (gain_ != 1.0) flat *= gain_;
  } else if (const auto* t = std::get_if<TelegraphNoise>(&spec_)) {
    if (bank_->telegraph_units.size() != total) {
      bank_->telegraph_units.clear();
      for (std::size_t i = 0; i < total; ++i) bank_->telegraph_units.emplace_back(*t, rng_);
    }
    flat.resize(static_cast<Eigen::Index>(total));
    for (std::size_t i = 0; i < total; ++i) {
      flat[static_cast<Eigen::Index>(i)] = bank_->telegraph_units[i].emit(*t);
      bank_->telegraph_units[i].advance(*t, rng_);
    }
    if (gain_ != 1.0) flat *= gain_;
  } else {
    flat = sample(total);
  }

  std::vector<Vector> out;
  out.reserve(sizes.size());
  Eigen::Index offset = 0;
  for (std::size_t n : sizes) {
    const auto len = static_cast<Eigen::Index>(n);
    out.emplace_back(flat.segment(offset, len));
    offset += len;
  }
  return out;
}

}  // namespace noiselearn
