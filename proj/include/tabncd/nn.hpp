#pragma once

// Small dense-network engine: row-major batches, analytic backward pass,
// loss primitives and Adam. Every network in the pipeline (encoder, SSL
// heads, classifier, clustering head) is a DenseNet.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabncd/rng.hpp"

namespace tabncd {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint32_t { identity = 0, relu = 1, sigmoid = 2, softmax = 3 };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::identity;

  [[nodiscard]] Eigen::Index in_dim() const { return weight.cols(); }
  [[nodiscard]] Eigen::Index out_dim() const { return weight.rows(); }
};

struct LayerSpec {
  int units = 0;
  Activation activation = Activation::identity;
};

/// Activations recorded by a forward pass; required by backward().
struct ForwardTrace {
  std::vector<Matrix> inputs;   // input of each layer
  std::vector<Matrix> outputs;  // post-activation output of each layer

  [[nodiscard]] bool recorded() const { return !outputs.empty(); }
  [[nodiscard]] const Matrix& output() const { return outputs.back(); }
};

struct LayerGradient {
  Matrix weight;
  Vector bias;
};

/// Gradient buffers shaped like a DenseNet. backward() accumulates into it.
class GradientTape {
 public:
  GradientTape() = default;
  explicit GradientTape(const class DenseNet& net);

  void clear();
  [[nodiscard]] bool all_finite() const;

  std::vector<LayerGradient> layers;
  double loss = 0.0;
};

class DenseNet {
 public:
  DenseNet() = default;
  /// Validates chaining, finiteness and softmax placement.
  explicit DenseNet(std::vector<DenseLayer> layers);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation of weights and biases.
  static DenseNet initialize(int input_dim, std::span<const LayerSpec> specs, Rng& rng);

  [[nodiscard]] int input_dim() const;
  [[nodiscard]] int output_dim() const;
  [[nodiscard]] std::size_t depth() const { return layers_.size(); }
  [[nodiscard]] bool empty() const { return layers_.empty(); }
  [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }
  [[nodiscard]] std::size_t parameter_count() const;

  /// Mutable parameter access for optimizers; shapes must not change.
  [[nodiscard]] std::vector<DenseLayer>& parameters() { return layers_; }

  [[nodiscard]] Matrix forward(const Matrix& batch) const;
  Matrix forward(const Matrix& batch, ForwardTrace& trace) const;

  /// Backpropagates dL/d(output) through the recorded trace, adds the
  /// parameter gradients into `tape` and returns dL/d(input).
  Matrix backward(const ForwardTrace& trace, const Matrix& grad_output, GradientTape& tape) const;

  friend bool operator==(const DenseNet& a, const DenseNet& b);

 private:
  void validate() const;
  void check_input(const Matrix& batch) const;

  std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------
// Losses. All return the scalar mean; the *_grad variants also return
// dL/d(first argument).

inline constexpr double kLogClamp = 1e-12;

struct LossValue {
  double value = 0.0;
  Matrix grad;
};

/// Mean over rows of -sum_c y_c log(max(p_c, 1e-12)).
double loss_cross_entropy(const Matrix& pred, const Matrix& one_hot);
LossValue cross_entropy_grad(const Matrix& pred, const Matrix& one_hot);

/// Mean over all entries of binary cross-entropy, p clamped to [1e-12, 1-1e-12].
double loss_bce(const Matrix& pred, const Matrix& target);
LossValue bce_grad(const Matrix& pred, const Matrix& target);

/// Mean over all entries of (a-b)^2. No 1/2 factor.
double loss_mse(const Matrix& a, const Matrix& b);
LossValue mse_grad(const Matrix& a, const Matrix& b);

enum class LossKind { cross_entropy, bce, mse };

/// Evaluates `kind` on the trace output against `targets` and backpropagates it
/// into a fresh tape whose `loss` holds the scalar value.
GradientTape backward(const DenseNet& net, const ForwardTrace& trace, LossKind kind,
                      const Matrix& targets);

// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Holds moment buffers for exactly one network.
class Adam {
 public:
  Adam(const DenseNet& net, AdamConfig config);

  /// Applies one update. Throws TrainingDiverged on non-finite gradients.
  void step(DenseNet& net, const GradientTape& tape);

  [[nodiscard]] std::int64_t steps() const { return steps_; }
  [[nodiscard]] const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<LayerGradient> first_;
  std::vector<LayerGradient> second_;
  std::int64_t steps_ = 0;
};

/// One-hot rows for integer class ids in [0, classes).
Matrix one_hot(std::span<const int> labels, int classes);

/// Row-wise argmax; ties resolve to the lowest index.
std::vector<int> argmax_rows(const Matrix& m);

}  // namespace tabncd
