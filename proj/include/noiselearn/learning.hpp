#pragma once

#include "noiselearn/network.hpp"
#include "noiselearn/numerics.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace noiselearn {

enum class LossKind { squared_error, categorical_cross_entropy };

std::string to_string(LossKind kind);
LossKind parse_loss(const std::string& text);

/// Numerically stable softmax (max subtracted).
Vector softmax(const Vector& logits);

/// Squared error sum (t - y)^2, or cross-entropy -sum t log softmax(y)
/// with probabilities clamped at 1e-12.
double loss(LossKind kind, const Vector& target, const Vector& output);

/// dL/dy for the same loss.
Vector loss_gradient(LossKind kind, const Vector& target, const Vector& output);

/// Per-row losses for a batch.
Vector batch_loss(LossKind kind, const Matrix& targets, const Matrix& outputs);

/// One weight update matrix per layer.
using UpdateSet = std::vector<Matrix>;

/// Classic node perturbation: sigma^-2 * dL * eps_l x_{l-1}^T, with x taken
/// from the clean pass.
UpdateSet np_update(const ForwardTrace& clean, const ForwardTrace& noisy, std::span<const Vector> noise,
                    double sigma, LossKind kind, const Vector& target);

/// Which pass supplies the presynaptic activity in the ANP update.
enum class AnpInput { first_pass, mean_of_passes };

/// Activity-based node perturbation from two noisy passes:
/// N * dL * da_l / ||da||^2 x_{l-1}^T, dL = L(pass1) - L(pass2).
/// Returns nullopt when both passes have identical pre-activations, so the
/// caller can count the skipped sample.
std::optional<UpdateSet> anp_update(const ForwardTrace& pass1, const ForwardTrace& pass2, LossKind kind,
                                    const Vector& target, AnpInput input = AnpInput::first_pass);

/// Exact gradient of the loss with respect to every weight matrix, with the
/// decorrelators held fixed.
UpdateSet bp_update(const NetworkState& net, const Vector& x0, const Vector& target, LossKind kind);

/// Batch-mean updates computed from row-per-sample traces.
struct BatchUpdate {
  UpdateSet mean;
  std::size_t contributing = 0;
  std::size_t skipped = 0;
};

BatchUpdate np_batch(const BatchTrace& clean, const BatchTrace& noisy, std::span<const Matrix> noise, double sigma,
                     LossKind kind, const Matrix& targets);
BatchUpdate anp_batch(const BatchTrace& pass1, const BatchTrace& pass2, LossKind kind, const Matrix& targets,
                      AnpInput input = AnpInput::first_pass);
BatchUpdate bp_batch(const NetworkState& net, const BatchTrace& clean, LossKind kind, const Matrix& targets);

/// Adam with bias correction; the update set plays the role of the gradient.
class AdamState {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  explicit AdamState(const NetworkState& net);

  void step(const UpdateSet& updates, double eta, NetworkState& net);

  std::uint64_t steps() const { return steps_; }

 private:
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::uint64_t steps_ = 0;
};

/// W <- W - eta * dW.
void sgd_step(const UpdateSet& updates, double eta, NetworkState& net);

/// Cosine similarity of the flattened update sets.
double alignment(const UpdateSet& a, const UpdateSet& b);

}  // namespace noiselearn
