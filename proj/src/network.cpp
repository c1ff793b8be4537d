#include "noiselearn/network.hpp"

#include "noiselearn/errors.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace noiselearn {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void apply_activation(const Activation& act, const Vector& pre, Vector& out) {
  out.resize(pre.size());
  for (Eigen::Index i = 0; i < pre.size(); ++i) out[i] = act.apply(pre[i]);
}

void apply_activation(const Activation& act, const Matrix& pre, Matrix& out) {
  switch (act.kind) {
    case Activation::Kind::linear: out = pre; break;
    case Activation::Kind::relu: out = pre.cwiseMax(0.0); break;
    case Activation::Kind::leaky_relu:
      out = pre.unaryExpr([s = act.slope](double v) { return v > 0 ? v : s * v; });
      break;
  }
}

ForwardTrace forward_impl(const NetworkState& net, const Vector& x0, std::span<const Vector> noise) {
  if (static_cast<std::size_t>(x0.size()) != net.input_width()) {
    throw Error(ErrorCode::DimensionMismatch, "forward: input has " + std::to_string(x0.size()) +
                                                  " entries, network expects " + std::to_string(net.input_width()));
  }
  if (!noise.empty() && noise.size() != net.layers.size()) {
    throw Error(ErrorCode::DimensionMismatch, "forward: need one noise vector per layer");
  }
  ForwardTrace trace;
  trace.layers.resize(net.layers.size());
  const Vector* x = &x0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& t = trace.layers[l];
    const Layer& layer = net.layers[l];
    const Matrix* r = net.decorrelator(l);
    t.input_used = r ? decorrelate(*r, *x) : *x;
    t.pre_activation = matvec(layer.weights, t.input_used);
    if (!noise.empty()) {
      if (noise[l].size() != t.pre_activation.size()) {
        throw Error(ErrorCode::DimensionMismatch, "forward: noise width mismatch at layer " + std::to_string(l));
      }
      t.pre_activation += noise[l];
    }
    apply_activation(layer.activation, t.pre_activation, t.output);
    x = &t.output;
  }
  return trace;
}

template <class T>
void put(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  if constexpr (std::is_same_v<T, double>) {
    auto bits = std::bit_cast<std::uint64_t>(value);
    for (std::size_t i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  } else {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(value) >> (8 * i));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& context) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw Error(ErrorCode::Parse, context + ": truncated checkpoint");
  }
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(bits);
  } else {
    return static_cast<T>(bits);
  }
}

constexpr char kMagic[4] = {'N', 'L', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void Activation::validate() const {
  if (kind == Kind::leaky_relu && !(slope > 0 && slope < 1)) {
    throw Error(ErrorCode::InvalidArgument, "leaky_relu slope must lie in (0,1)");
  }
}

std::string Activation::name() const {
  switch (kind) {
    case Kind::linear: return "linear";
    case Kind::relu: return "relu";
    case Kind::leaky_relu: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "leaky_relu:%.17g", slope);
      return buf;
    }
  }
  return "linear";
}

Activation Activation::parse(const std::string& text) {
  if (text == "linear") return linear();
  if (text == "relu") return relu();
  if (text == "leaky_relu") return leaky_relu(0.01);
  if (text.rfind("leaky_relu:", 0) == 0) {
    try {
      auto a = leaky_relu(std::stod(text.substr(11)));
      a.validate();
      return a;
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorCode::Parse, "unknown activation '" + text + "'");
}

std::size_t NetworkState::input_width() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weights.cols());
}

std::size_t NetworkState::output_width() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weights.rows());
}

std::vector<std::size_t> NetworkState::layer_widths() const {
  std::vector<std::size_t> w;
  for (const auto& l : layers) w.push_back(static_cast<std::size_t>(l.weights.rows()));
  return w;
}

std::size_t NetworkState::unit_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.rows());
  return n;
}

const Matrix* NetworkState::decorrelator(std::size_t layer) const {
  if (layer >= decorrelators.size() || !decorrelators[layer]) return nullptr;
  return &*decorrelators[layer];
}

Matrix* NetworkState::decorrelator(std::size_t layer) {
  if (layer >= decorrelators.size() || !decorrelators[layer]) return nullptr;
  return &*decorrelators[layer];
}

bool NetworkState::has_decorrelation() const {
  for (const auto& r : decorrelators) {
    if (r) return true;
  }
  return false;
}

void NetworkState::validate() const {
  if (layers.empty()) throw Error(ErrorCode::InvalidArgument, "network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weights;
    if (w.rows() < 1 || w.cols() < 1) throw Error(ErrorCode::InvalidArgument, "empty weight matrix");
    if (l > 0 && w.cols() != layers[l - 1].weights.rows()) {
      throw Error(ErrorCode::DimensionMismatch, "layer " + std::to_string(l) + " weights " + shape(w) +
                                                    " do not chain onto layer " + std::to_string(l - 1));
    }
    layers[l].activation.validate();
    require_finite(w, "network weights");
  }
  if (!decorrelators.empty() && decorrelators.size() != layers.size()) {
    throw Error(ErrorCode::DimensionMismatch, "decorrelators must align with layers");
  }
  for (std::size_t l = 0; l < decorrelators.size(); ++l) {
    if (!decorrelators[l]) continue;
    const auto& r = *decorrelators[l];
    if (r.rows() != r.cols() || r.cols() != layers[l].weights.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "decorrelator " + std::to_string(l) + " has shape " + shape(r));
    }
    require_finite(r, "decorrelation matrix");
  }
}

ForwardTrace forward_clean(const NetworkState& net, const Vector& x0) { return forward_impl(net, x0, {}); }

ForwardTrace forward_noisy(const NetworkState& net, const Vector& x0, std::span<const Vector> noise) {
  if (noise.size() != net.layers.size()) {
    throw Error(ErrorCode::DimensionMismatch, "forward_noisy: need one noise vector per layer");
  }
  return forward_impl(net, x0, noise);
}

Vector decorrelate(const Matrix& r, const Vector& x) {
  if (r.rows() != r.cols()) throw Error(ErrorCode::DimensionMismatch, "decorrelate: R must be square");
  return matvec(r, x);
}

Matrix decorrelation_update(const Matrix& r, std::span<const Vector> decorrelated, double eps) {
  if (decorrelated.empty()) throw Error(ErrorCode::EmptyInput, "decorrelation_update: empty batch");
  return decorrelation_update(r, stack_rows(decorrelated), eps);
}

Matrix decorrelation_update(const Matrix& r, const Matrix& rows, double eps) {
  if (rows.rows() == 0) throw Error(ErrorCode::EmptyInput, "decorrelation_update: empty batch");
  if (!(eps > 0)) throw Error(ErrorCode::InvalidArgument, "decorrelation_update: eps must be positive");
  if (r.rows() != r.cols() || rows.cols() != r.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "decorrelation_update: R is " + shape(r) + ", batch is " + shape(rows));
  }
  const double inv_b = 1.0 / static_cast<double>(rows.rows());
  // <x x^T - diag(x^2)> R == (X^T (X R)) / B - diag(<x^2>) R, computed
  // without forming the d x d moment matrix.
  Matrix xr = rows * r;
  Matrix mr = rows.transpose() * xr;
  mr *= inv_b;
  const Vector mean_sq = rows.array().square().colwise().sum().transpose() * inv_b;
  mr -= mean_sq.asDiagonal() * r;
  Matrix out = r;
  out.noalias() -= eps * mr;
  return out;
}

NetworkState init_weights(std::span<const std::size_t> widths, const InitOptions& options, Rng& rng) {
  if (widths.size() < 2) throw Error(ErrorCode::InvalidArgument, "init_weights: need input and at least one layer");
  for (std::size_t w : widths) {
    if (w < 1) throw Error(ErrorCode::InvalidArgument, "init_weights: widths must be >= 1");
  }
  options.hidden.validate();
  options.output.validate();
  NetworkState net;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    const auto fan_in = static_cast<double>(widths[l - 1]);
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer;
    layer.weights.resize(static_cast<Eigen::Index>(widths[l]), static_cast<Eigen::Index>(widths[l - 1]));
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = dist(rng);
    layer.activation = l + 1 == widths.size() ? options.output : options.hidden;
    net.layers.push_back(std::move(layer));
  }
  if (options.decorrelate) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      if (l == 0 && !options.decorrelate_input) {
        net.decorrelators.emplace_back(std::nullopt);
      } else {
        net.decorrelators.emplace_back(identity(static_cast<Eigen::Index>(widths[l])));
      }
    }
  }
  return net;
}

BatchTrace forward_batch(const NetworkState& net, const Matrix& x0, std::span<const Matrix> noise) {
  if (static_cast<std::size_t>(x0.cols()) != net.input_width()) {
    throw Error(ErrorCode::DimensionMismatch, "forward_batch: input width mismatch");
  }
  if (!noise.empty() && noise.size() != net.layers.size()) {
    throw Error(ErrorCode::DimensionMismatch, "forward_batch: need one noise matrix per layer");
  }
  const std::size_t depth = net.layers.size();
  BatchTrace t;
  t.inputs_used.resize(depth);
  t.pre_activations.resize(depth);
  t.outputs.resize(depth);
  const Matrix* x = &x0;
  for (std::size_t l = 0; l < depth; ++l) {
    const Layer& layer = net.layers[l];
    if (const Matrix* r = net.decorrelator(l)) {
      t.inputs_used[l].noalias() = *x * r->transpose();
    } else {
      t.inputs_used[l] = *x;
    }
    t.pre_activations[l].noalias() = t.inputs_used[l] * layer.weights.transpose();
    if (!noise.empty()) {
      if (noise[l].rows() != x0.rows() || noise[l].cols() != layer.weights.rows()) {
        throw Error(ErrorCode::DimensionMismatch, "forward_batch: noise shape mismatch at layer " + std::to_string(l));
      }
      t.pre_activations[l] += noise[l];
    }
    apply_activation(layer.activation, t.pre_activations[l], t.outputs[l]);
    x = &t.outputs[l];
  }
  return t;
}

Matrix predict(const NetworkState& net, const Matrix& x0) {
  if (static_cast<std::size_t>(x0.cols()) != net.input_width()) {
    throw Error(ErrorCode::DimensionMismatch, "predict: input width mismatch");
  }
  Matrix x = x0;
  Matrix pre;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    if (const Matrix* r = net.decorrelator(l)) {
      const Matrix folded = layer.weights * *r;
      pre.noalias() = x * folded.transpose();
    } else {
      pre.noalias() = x * layer.weights.transpose();
    }
    apply_activation(layer.activation, pre, x);
  }
  return x;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkState& net) {
  net.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers.size()));
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    put<std::uint64_t>(out, static_cast<std::uint64_t>(layer.weights.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(layer.weights.cols()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(layer.activation.kind));
    put<double>(out, layer.activation.slope);
    put<std::uint8_t>(out, net.decorrelator(l) ? 1 : 0);
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& w = net.layers[l].weights;
    for (Eigen::Index i = 0; i < w.size(); ++i) put<double>(out, w.data()[i]);
    if (const Matrix* r = net.decorrelator(l)) {
      for (Eigen::Index i = 0; i < r->size(); ++i) put<double>(out, r->data()[i]);
    }
  }
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

NetworkState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  const std::string ctx = path.string();
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorCode::Parse, ctx + ": bad checkpoint magic");
  }
  if (get<std::uint32_t>(in, ctx) != kVersion) throw Error(ErrorCode::Parse, ctx + ": unsupported version");
  const auto count = get<std::uint32_t>(in, ctx);
  if (count == 0 || count > 4096) throw Error(ErrorCode::Parse, ctx + ": implausible layer count");
  NetworkState net;
  std::vector<bool> has_r(count);
  for (std::uint32_t l = 0; l < count; ++l) {
    const auto rows = get<std::uint64_t>(in, ctx);
    const auto cols = get<std::uint64_t>(in, ctx);
    if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24)) {
      throw Error(ErrorCode::Parse, ctx + ": implausible layer shape");
    }
    const auto kind = get<std::uint8_t>(in, ctx);
    if (kind > 2) throw Error(ErrorCode::Parse, ctx + ": unknown activation kind");
    Layer layer;
    layer.activation.kind = static_cast<Activation::Kind>(kind);
    layer.activation.slope = get<double>(in, ctx);
    layer.weights.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    has_r[l] = get<std::uint8_t>(in, ctx) != 0;
    net.layers.push_back(std::move(layer));
  }
  bool any_r = false;
  for (bool b : has_r) any_r = any_r || b;
  for (std::uint32_t l = 0; l < count; ++l) {
    auto& w = net.layers[l].weights;
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = get<double>(in, ctx);
    if (any_r) {
      if (has_r[l]) {
        Matrix r(w.cols(), w.cols());
        for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = get<double>(in, ctx);
        net.decorrelators.emplace_back(std::move(r));
      } else {
        net.decorrelators.emplace_back(std::nullopt);
      }
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(ErrorCode::Parse, ctx + ": trailing bytes");
  net.validate();
  return net;
}

}  // namespace noiselearn
