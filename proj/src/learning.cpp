#include "noiselearn/learning.hpp"

#include "noiselearn/errors.hpp"

#include <algorithm>
#include <cmath>

namespace noiselearn {

namespace {

constexpr double kProbabilityFloor = 1e-12;

void require_same_length(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": target has " + std::to_string(a.size()) +
                                                  " entries, output has " + std::to_string(b.size()));
  }
}

void require_same_shape(const ForwardTrace& a, const ForwardTrace& b, const char* what) {
  if (a.layers.size() != b.layers.size() || a.layers.empty()) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": traces have different depth");
  }
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].pre_activation.size() != b.layers[l].pre_activation.size() ||
        a.layers[l].input_used.size() != b.layers[l].input_used.size()) {
      throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": traces have different widths");
    }
  }
}

void require_same_shape(const BatchTrace& a, const BatchTrace& b, const char* what) {
  if (a.outputs.size() != b.outputs.size() || a.outputs.empty()) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": traces have different depth");
  }
  for (std::size_t l = 0; l < a.outputs.size(); ++l) {
    if (a.pre_activations[l].rows() != b.pre_activations[l].rows() ||
        a.pre_activations[l].cols() != b.pre_activations[l].cols()) {
      throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": traces have different shapes");
    }
  }
}

Matrix activation_derivative(const Activation& act, const Matrix& pre) {
  return pre.unaryExpr([&act](double v) { return act.derivative(v); });
}

}  // namespace

std::string to_string(LossKind kind) {
  return kind == LossKind::squared_error ? "squared_error" : "categorical_cross_entropy";
}

LossKind parse_loss(const std::string& text) {
  if (text == "squared_error" || text == "mse") return LossKind::squared_error;
  if (text == "categorical_cross_entropy" || text == "cross_entropy" || text == "ce") {
    return LossKind::categorical_cross_entropy;
  }
  throw Error(ErrorCode::Parse, "unknown loss '" + text + "'");
}

Vector softmax(const Vector& logits) {
  Vector p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

double loss(LossKind kind, const Vector& target, const Vector& output) {
  require_same_length(target, output, "loss");
  if (kind == LossKind::squared_error) return (target - output).squaredNorm();
  const Vector p = softmax(output);
  double l = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (target[i] != 0) l -= target[i] * std::log(std::max(p[i], kProbabilityFloor));
  }
  return l;
}

Vector loss_gradient(LossKind kind, const Vector& target, const Vector& output) {
  require_same_length(target, output, "loss_gradient");
  if (kind == LossKind::squared_error) return 2.0 * (output - target);
  return softmax(output) * target.sum() - target;
}

Vector batch_loss(LossKind kind, const Matrix& targets, const Matrix& outputs) {
  if (targets.rows() != outputs.rows() || targets.cols() != outputs.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "batch_loss: target and output shapes differ");
  }
  Vector out(outputs.rows());
  if (kind == LossKind::squared_error) {
    out = (targets - outputs).rowwise().squaredNorm();
    return out;
  }
  for (Eigen::Index b = 0; b < outputs.rows(); ++b) {
    const auto row = outputs.row(b);
    const double mx = row.maxCoeff();
    const double log_z = std::log((row.array() - mx).exp().sum()) + mx;
    double l = 0;
    for (Eigen::Index i = 0; i < row.size(); ++i) {
      const double t = targets(b, i);
      if (t != 0) l -= t * std::log(std::max(std::exp(row[i] - log_z), kProbabilityFloor));
    }
    out[b] = l;
  }
  return out;
}

UpdateSet np_update(const ForwardTrace& clean, const ForwardTrace& noisy, std::span<const Vector> noise, double sigma,
                    LossKind kind, const Vector& target) {
  if (!(sigma > 0)) throw Error(ErrorCode::InvalidArgument, "np_update: sigma must be positive");
  require_same_shape(clean, noisy, "np_update");
  if (noise.size() != clean.layers.size()) {
    throw Error(ErrorCode::DimensionMismatch, "np_update: need one noise vector per layer");
  }
  const double delta_loss = loss(kind, target, noisy.output()) - loss(kind, target, clean.output());
  const double scale = delta_loss / (sigma * sigma);
  UpdateSet out;
  for (std::size_t l = 0; l < clean.layers.size(); ++l) {
    if (noise[l].size() != clean.layers[l].pre_activation.size()) {
      throw Error(ErrorCode::DimensionMismatch, "np_update: noise width mismatch");
    }
    out.push_back(scale * outer(noise[l], clean.layers[l].input_used));
  }
  return out;
}

std::optional<UpdateSet> anp_update(const ForwardTrace& pass1, const ForwardTrace& pass2, LossKind kind,
                                    const Vector& target, AnpInput input) {
  require_same_shape(pass1, pass2, "anp_update");
  std::vector<Vector> delta;
  double norm_sq = 0;
  std::size_t units = 0;
  for (std::size_t l = 0; l < pass1.layers.size(); ++l) {
    delta.push_back(pass1.layers[l].pre_activation - pass2.layers[l].pre_activation);
    norm_sq += sq_norm(delta.back());
    units += static_cast<std::size_t>(delta.back().size());
  }
  if (norm_sq == 0) return std::nullopt;
  const double delta_loss = loss(kind, target, pass1.output()) - loss(kind, target, pass2.output());
  const double scale = static_cast<double>(units) * delta_loss / norm_sq;
  UpdateSet out;
  for (std::size_t l = 0; l < pass1.layers.size(); ++l) {
    const Vector& x1 = pass1.layers[l].input_used;
    if (input == AnpInput::first_pass) {
      out.push_back(scale * outer(delta[l], x1));
    } else {
      out.push_back(scale * outer(delta[l], 0.5 * (x1 + pass2.layers[l].input_used)));
    }
  }
  return out;
}

UpdateSet bp_update(const NetworkState& net, const Vector& x0, const Vector& target, LossKind kind) {
  const ForwardTrace trace = forward_clean(net, x0);
  const std::size_t depth = net.layers.size();
  UpdateSet grads(depth);
  Vector delta = loss_gradient(kind, target, trace.output());
  for (std::size_t l = depth; l-- > 0;) {
    const auto& layer = net.layers[l];
    const auto& t = trace.layers[l];
    for (Eigen::Index i = 0; i < delta.size(); ++i) delta[i] *= layer.activation.derivative(t.pre_activation[i]);
    grads[l] = outer(delta, t.input_used);
    if (l > 0) {
      Vector back = layer.weights.transpose() * delta;
      if (const Matrix* r = net.decorrelator(l)) back = r->transpose() * back;
      delta = std::move(back);
    }
  }
  return grads;
}

BatchUpdate np_batch(const BatchTrace& clean, const BatchTrace& noisy, std::span<const Matrix> noise, double sigma,
                     LossKind kind, const Matrix& targets) {
  if (!(sigma > 0)) throw Error(ErrorCode::InvalidArgument, "np_batch: sigma must be positive");
  require_same_shape(clean, noisy, "np_batch");
  if (noise.size() != clean.outputs.size()) throw Error(ErrorCode::DimensionMismatch, "np_batch: noise depth");
  const Vector coef = (batch_loss(kind, targets, noisy.output()) - batch_loss(kind, targets, clean.output())) /
                      (sigma * sigma);
  const auto batch = static_cast<double>(targets.rows());
  BatchUpdate out;
  for (std::size_t l = 0; l < clean.outputs.size(); ++l) {
    Matrix scaled = coef.asDiagonal() * noise[l];
    out.mean.push_back(scaled.transpose() * clean.inputs_used[l] / batch);
  }
  out.contributing = static_cast<std::size_t>(targets.rows());
  return out;
}

BatchUpdate anp_batch(const BatchTrace& pass1, const BatchTrace& pass2, LossKind kind, const Matrix& targets,
                      AnpInput input) {
  require_same_shape(pass1, pass2, "anp_batch");
  const std::size_t depth = pass1.outputs.size();
  const Eigen::Index rows = targets.rows();
  std::vector<Matrix> delta(depth);
  Vector norm_sq = Vector::Zero(rows);
  std::size_t units = 0;
  for (std::size_t l = 0; l < depth; ++l) {
    delta[l] = pass1.pre_activations[l] - pass2.pre_activations[l];
    norm_sq += delta[l].rowwise().squaredNorm();
    units += static_cast<std::size_t>(delta[l].cols());
  }
  const Vector delta_loss = batch_loss(kind, targets, pass1.output()) - batch_loss(kind, targets, pass2.output());
  Vector coef(rows);
  BatchUpdate out;
  for (Eigen::Index b = 0; b < rows; ++b) {
    if (norm_sq[b] == 0) {
      coef[b] = 0;
      ++out.skipped;
    } else {
      coef[b] = static_cast<double>(units) * delta_loss[b] / norm_sq[b];
      ++out.contributing;
    }
  }
  const double denom = out.contributing > 0 ? static_cast<double>(out.contributing) : 1.0;
  for (std::size_t l = 0; l < depth; ++l) {
    Matrix scaled = coef.asDiagonal() * delta[l];
    if (input == AnpInput::first_pass) {
      out.mean.push_back(scaled.transpose() * pass1.inputs_used[l] / denom);
    } else {
      out.mean.push_back(scaled.transpose() * (0.5 * (pass1.inputs_used[l] + pass2.inputs_used[l])) / denom);
    }
  }
  return out;
}

BatchUpdate bp_batch(const NetworkState& net, const BatchTrace& clean, LossKind kind, const Matrix& targets) {
  const std::size_t depth = net.layers.size();
  const Matrix& y = clean.output();
  if (targets.rows() != y.rows() || targets.cols() != y.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "bp_batch: target shape mismatch");
  }
  Matrix delta(y.rows(), y.cols());
  if (kind == LossKind::squared_error) {
    delta = 2.0 * (y - targets);
  } else {
    for (Eigen::Index b = 0; b < y.rows(); ++b) {
      const Vector yb = y.row(b).transpose();
      const Vector tb = targets.row(b).transpose();
      delta.row(b) = loss_gradient(kind, tb, yb).transpose();
    }
  }
  const auto batch = static_cast<double>(y.rows());
  BatchUpdate out;
  out.mean.resize(depth);
  for (std::size_t l = depth; l-- > 0;) {
    const auto& layer = net.layers[l];
    delta = delta.cwiseProduct(activation_derivative(layer.activation, clean.pre_activations[l]));
    out.mean[l] = delta.transpose() * clean.inputs_used[l] / batch;
    if (l > 0) {
      Matrix back = delta * layer.weights;
      if (const Matrix* r = net.decorrelator(l)) back = back * *r;
      delta = std::move(back);
    }
  }
  out.contributing = static_cast<std::size_t>(y.rows());
  return out;
}

AdamState::AdamState(const NetworkState& net) {
  for (const auto& layer : net.layers) {
    m_.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
    v_.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
  }
}

void AdamState::step(const UpdateSet& updates, double eta, NetworkState& net) {
  if (!(eta > 0)) throw Error(ErrorCode::InvalidArgument, "adam: eta must be positive");
  if (updates.size() != m_.size() || net.layers.size() != m_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "adam: update set does not match the network");
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  for (std::size_t l = 0; l < m_.size(); ++l) {
    const Matrix& g = updates[l];
    if (g.rows() != m_[l].rows() || g.cols() != m_[l].cols()) {
      throw Error(ErrorCode::DimensionMismatch, "adam: update shape mismatch");
    }
    m_[l] = kBeta1 * m_[l] + (1.0 - kBeta1) * g;
    v_[l] = kBeta2 * v_[l] + (1.0 - kBeta2) * g.cwiseProduct(g);
    net.layers[l].weights.array() -=
        eta * (m_[l].array() / c1) / ((v_[l].array() / c2).sqrt() + kEpsilon);
  }
}

void sgd_step(const UpdateSet& updates, double eta, NetworkState& net) {
  if (updates.size() != net.layers.size()) {
    throw Error(ErrorCode::DimensionMismatch, "sgd_step: update set does not match the network");
  }
  for (std::size_t l = 0; l < updates.size(); ++l) {
    if (updates[l].rows() != net.layers[l].weights.rows() || updates[l].cols() != net.layers[l].weights.cols()) {
      throw Error(ErrorCode::DimensionMismatch, "sgd_step: update shape mismatch");
    }
    net.layers[l].weights -= eta * updates[l];
  }
}

double alignment(const UpdateSet& a, const UpdateSet& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "alignment: different depth");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    if (a[l].rows() != b[l].rows() || a[l].cols() != b[l].cols()) {
      throw Error(ErrorCode::DimensionMismatch, "alignment: shape mismatch");
    }
    ab += a[l].cwiseProduct(b[l]).sum();
    aa += a[l].squaredNorm();
    bb += b[l].squaredNorm();
  }
  if (aa == 0 || bb == 0) throw Error(ErrorCode::InvalidArgument, "alignment: zero update");
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

}  // namespace noiselearn
