#pragma once

#include "noiselearn/numerics.hpp"
#include "noiselearn/rng.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace noiselearn {

struct Activation {
  enum class Kind { linear, relu, leaky_relu };

  Kind kind = Kind::linear;
  double slope = 0.01;  // leaky_relu only, in (0, 1)

  static Activation linear() { return {Kind::linear, 0.0}; }
  static Activation relu() { return {Kind::relu, 0.0}; }
  static Activation leaky_relu(double slope) { return {Kind::leaky_relu, slope}; }

  double apply(double pre) const {
    switch (kind) {
      case Kind::linear: return pre;
      case Kind::relu: return pre > 0 ? pre : 0.0;
      case Kind::leaky_relu: return pre > 0 ? pre : slope * pre;
    }
    return pre;
  }

  double derivative(double pre) const {
    switch (kind) {
      case Kind::linear: return 1.0;
      case Kind::relu: return pre > 0 ? 1.0 : 0.0;
      case Kind::leaky_relu: return pre > 0 ? 1.0 : slope;
    }
    return 1.0;
  }

  void validate() const;
  std::string name() const;
  static Activation parse(const std::string& text);
};

struct Layer {
  Matrix weights;  // out x in
  Activation activation;
};

/// Fully connected network without biases. When `decorrelators` is
/// non-empty it is aligned with `layers`; an engaged entry is the square
/// matrix applied to that layer's input before the weights.
struct NetworkState {
  std::vector<Layer> layers;
  std::vector<std::optional<Matrix>> decorrelators;

  std::size_t input_width() const;
  std::size_t output_width() const;
  /// Output width of every layer (the input layer excluded).
  std::vector<std::size_t> layer_widths() const;
  /// Total number of units over all layers.
  std::size_t unit_count() const;
  const Matrix* decorrelator(std::size_t layer) const;
  Matrix* decorrelator(std::size_t layer);
  bool has_decorrelation() const;

  void validate() const;
};

struct LayerTrace {
  Vector input_used;      // layer input after decorrelation
  Vector pre_activation;  // includes injected noise on noisy passes
  Vector output;
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;

  const Vector& output() const { return layers.back().output; }
};

ForwardTrace forward_clean(const NetworkState& net, const Vector& x0);
ForwardTrace forward_noisy(const NetworkState& net, const Vector& x0, std::span<const Vector> noise);

Vector decorrelate(const Matrix& r, const Vector& x);

/// R - eps * <x x^T - diag(x^2)> R over already decorrelated inputs.
Matrix decorrelation_update(const Matrix& r, std::span<const Vector> decorrelated, double eps);

/// Same update with the batch as the rows of a matrix.
Matrix decorrelation_update(const Matrix& r, const Matrix& decorrelated_rows, double eps);

struct InitOptions {
  Activation hidden = Activation::leaky_relu(0.01);
  Activation output = Activation::linear();
  bool decorrelate = false;
  bool decorrelate_input = true;
};

/// `widths` lists the input width followed by every layer width. Weights
/// are uniform in +-sqrt(6 / fan_in); decorrelators start at identity.
NetworkState init_weights(std::span<const std::size_t> widths, const InitOptions& options, Rng& rng);

/// Row-per-sample variant of the forward pass used by the trainers.
struct BatchTrace {
  std::vector<Matrix> inputs_used;
  std::vector<Matrix> pre_activations;
  std::vector<Matrix> outputs;

  const Matrix& output() const { return outputs.back(); }
};

/// `noise`, when non-empty, holds one batch x width matrix per layer.
BatchTrace forward_batch(const NetworkState& net, const Matrix& x0, std::span<const Matrix> noise = {});

/// Clean outputs only, with each decorrelator folded into its weights.
Matrix predict(const NetworkState& net, const Matrix& x0);

/// Flat little-endian checkpoint; see README for the byte layout.
void save_checkpoint(const std::filesystem::path& path, const NetworkState& net);
NetworkState load_checkpoint(const std::filesystem::path& path);

}  // namespace noiselearn
