#include "tabncd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tabncd/errors.hpp"

namespace tabncd {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
  }
  return "unknown";
}

Activation activation_from_string(std::string_view name) {
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "softmax") return Activation::softmax;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

namespace {

void apply_activation(Activation act, Matrix& z) {
  switch (act) {
    case Activation::identity:
      break;
    case Activation::relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::sigmoid:
      z = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      break;
    case Activation::softmax:
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
      }
      break;
  }
}

// dL/dZ from dL/dA and the activation output A.
Matrix activation_backward(Activation act, const Matrix& out, const Matrix& grad) {
  switch (act) {
    case Activation::identity:
      return grad;
    case Activation::relu:
      return (out.array() > 0.0).select(grad, 0.0);
    case Activation::sigmoid:
      return (grad.array() * out.array() * (1.0 - out.array())).matrix();
    case Activation::softmax: {
      Matrix dz(grad.rows(), grad.cols());
      for (Eigen::Index r = 0; r < grad.rows(); ++r) {
        const double inner = grad.row(r).dot(out.row(r));
        dz.row(r) = (out.row(r).array() * (grad.row(r).array() - inner)).matrix();
      }
      return dz;
    }
  }
  return grad;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream msg;
    msg << what << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
        << b.cols();
    throw ConfigError(msg.str());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

GradientTape::GradientTape(const DenseNet& net) {
  layers.reserve(net.depth());
  for (const auto& layer : net.layers()) {
    layers.push_back({Matrix::Zero(layer.out_dim(), layer.in_dim()), Vector::Zero(layer.out_dim())});
  }
}

void GradientTape::clear() {
  for (auto& g : layers) {
    g.weight.setZero();
    g.bias.setZero();
  }
  loss = 0.0;
}

bool GradientTape::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const LayerGradient& g) {
    return g.weight.allFinite() && g.bias.allFinite();
  });
}

// ---------------------------------------------------------------------------

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

void DenseNet::validate() const {
  if (layers_.empty()) throw ConfigError("DenseNet needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weight.rows() == 0 || l.weight.cols() == 0) throw ConfigError("DenseNet: empty layer");
    if (l.bias.size() != l.weight.rows()) throw ConfigError("DenseNet: bias size mismatch");
    if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) {
      std::ostringstream msg;
      msg << "DenseNet: layer " << i << " expects " << l.in_dim() << " inputs but layer " << i - 1
          << " produces " << layers_[i - 1].out_dim();
      throw ConfigError(msg.str());
    }
    if (l.activation == Activation::softmax && i + 1 != layers_.size()) {
      throw ConfigError("DenseNet: softmax is only allowed on the final layer");
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw DataError("DenseNet: non-finite parameter in layer " + std::to_string(i));
    }
  }
}

DenseNet DenseNet::initialize(int input_dim, std::span<const LayerSpec> specs, Rng& rng) {
  if (input_dim <= 0) throw ConfigError("DenseNet: input_dim must be positive");
  std::vector<DenseLayer> layers;
  int fan_in = input_dim;
  for (const auto& spec : specs) {
    if (spec.units <= 0) throw ConfigError("DenseNet: layer width must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer layer{Matrix(spec.units, fan_in), Vector(spec.units), spec.activation};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = rng.uniform(-bound, bound);
    layers.push_back(std::move(layer));
    fan_in = spec.units;
  }
  return DenseNet(std::move(layers));
}

int DenseNet::input_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.front().in_dim());
}

int DenseNet::output_dim() const {
  return layers_.empty() ? 0 : static_cast<int>(layers_.back().out_dim());
}

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void DenseNet::check_input(const Matrix& batch) const {
  if (layers_.empty()) throw UsageError("forward on an empty DenseNet");
  if (batch.cols() != input_dim()) {
    std::ostringstream msg;
    msg << "forward: batch has " << batch.cols() << " columns, network expects " << input_dim();
    throw ConfigError(msg.str());
  }
  if (!batch.allFinite()) throw DataError("forward: non-finite input");
}

Matrix DenseNet::forward(const Matrix& batch) const {
  check_input(batch);
  Matrix a = batch;
  for (const auto& layer : layers_) {
    Matrix z = a * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    apply_activation(layer.activation, z);
    a = std::move(z);
  }
  return a;
}

Matrix DenseNet::forward(const Matrix& batch, ForwardTrace& trace) const {
  check_input(batch);
  trace.inputs.clear();
  trace.outputs.clear();
  trace.inputs.reserve(layers_.size());
  trace.outputs.reserve(layers_.size());
  const Matrix* a = &batch;
  for (const auto& layer : layers_) {
    trace.inputs.push_back(*a);
    Matrix z = (*a) * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    apply_activation(layer.activation, z);
    trace.outputs.push_back(std::move(z));
    a = &trace.outputs.back();
  }
  return trace.outputs.back();
}

Matrix DenseNet::backward(const ForwardTrace& trace, const Matrix& grad_output,
                          GradientTape& tape) const {
  if (!trace.recorded() || trace.outputs.size() != layers_.size()) {
    throw UsageError("backward called without a recorded forward pass for this network");
  }
  if (tape.layers.size() != layers_.size()) throw UsageError("gradient tape does not match network");
  require_same_shape(grad_output, trace.output(), "backward");

  Matrix grad = grad_output;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const auto& layer = layers_[i];
    const Matrix dz = activation_backward(layer.activation, trace.outputs[i], grad);
    tape.layers[i].weight.noalias() += dz.transpose() * trace.inputs[i];
    tape.layers[i].bias += dz.colwise().sum().transpose();
    grad = dz * layer.weight;
  }
  return grad;
}

bool operator==(const DenseNet& a, const DenseNet& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const auto& x = a.layers_[i];
    const auto& y = b.layers_[i];
    if (x.activation != y.activation || x.weight.rows() != y.weight.rows() ||
        x.weight.cols() != y.weight.cols() || x.weight != y.weight || x.bias != y.bias) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

double loss_cross_entropy(const Matrix& pred, const Matrix& one_hot) {
  require_same_shape(pred, one_hot, "cross_entropy");
  if (pred.rows() == 0) return 0.0;
  const double total =
      -(one_hot.array() * pred.array().max(kLogClamp).log()).sum();
  return total / static_cast<double>(pred.rows());
}

LossValue cross_entropy_grad(const Matrix& pred, const Matrix& one_hot) {
  LossValue out{loss_cross_entropy(pred, one_hot), Matrix()};
  const double n = static_cast<double>(std::max<Eigen::Index>(pred.rows(), 1));
  // Gradient is taken at the clamped value so it never vanishes under saturation.
  out.grad = (-one_hot.array() / pred.array().max(kLogClamp)).matrix() / n;
  return out;
}

double loss_bce(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "bce");
  if (pred.size() == 0) return 0.0;
  const auto p = pred.array().max(kLogClamp).min(1.0 - kLogClamp);
  const auto t = target.array();
  const double total = -(t * p.log() + (1.0 - t) * (1.0 - p).log()).sum();
  return total / static_cast<double>(pred.size());
}

LossValue bce_grad(const Matrix& pred, const Matrix& target) {
  LossValue out{loss_bce(pred, target), Matrix()};
  const double n = static_cast<double>(std::max<Eigen::Index>(pred.size(), 1));
  const auto p = pred.array();
  const auto t = target.array();
  out.grad = ((-t / p.max(kLogClamp) + (1.0 - t) / (1.0 - p).max(kLogClamp)) / n).matrix();
  return out;
}

double loss_mse(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "mse");
  if (a.size() == 0) return 0.0;
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

LossValue mse_grad(const Matrix& a, const Matrix& b) {
  LossValue out{loss_mse(a, b), Matrix()};
  const double n = static_cast<double>(std::max<Eigen::Index>(a.size(), 1));
  out.grad = (2.0 / n) * (a - b);
  return out;
}

GradientTape backward(const DenseNet& net, const ForwardTrace& trace, LossKind kind,
                      const Matrix& targets) {
  if (!trace.recorded()) throw UsageError("backward called without a recorded forward pass");
  LossValue lv;
  switch (kind) {
    case LossKind::cross_entropy: lv = cross_entropy_grad(trace.output(), targets); break;
    case LossKind::bce: lv = bce_grad(trace.output(), targets); break;
    case LossKind::mse: lv = mse_grad(trace.output(), targets); break;
  }
  GradientTape tape(net);
  net.backward(trace, lv.grad, tape);
  tape.loss = lv.value;
  return tape;
}

// ---------------------------------------------------------------------------

Adam::Adam(const DenseNet& net, AdamConfig config) : config_(config) {
  if (!(config_.learning_rate >= 0.0)) throw ConfigError("Adam: learning rate must be >= 0");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) || !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw ConfigError("Adam: betas must lie in [0, 1)");
  }
  const GradientTape zeros(net);
  first_ = zeros.layers;
  second_ = zeros.layers;
}

void Adam::step(DenseNet& net, const GradientTape& tape) {
  auto& layers = net.parameters();
  if (tape.layers.size() != layers.size() || first_.size() != layers.size()) {
    throw UsageError("Adam: gradient tape does not match the optimised network");
  }
  if (!tape.all_finite()) {
    std::ostringstream msg;
    msg << "non-finite gradient at optimizer step " << steps_ + 1 << " (loss " << tape.loss << ")";
    throw TrainingDiverged(msg.str());
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const double lr = config_.learning_rate;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double eps = config_.epsilon;

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, tape.layers[i].weight, first_[i].weight, second_[i].weight);
    update(layers[i].bias, tape.layers[i].bias, first_[i].bias, second_[i].bias);
  }
}

// ---------------------------------------------------------------------------

Matrix one_hot(std::span<const int> labels, int classes) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw ConfigError("one_hot: label " + std::to_string(labels[i]) + " outside [0, " +
                        std::to_string(classes) + ")");
    }
    m(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return m;
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c) {
      if (m(r, c) > m(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace tabncd
