#pragma once

// Independent reference implementations shared by the unit and acceptance tests.
// Nothing here calls into the code under test except for constructing inputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "tabncd/data.hpp"
#include "tabncd/nn.hpp"

namespace tabncd::oracle {

// Mean loss of a network output against targets, written out longhand.
inline double reference_loss(const Matrix& out, LossKind kind, const Matrix& t) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      const double p = out(i, j);
      switch (kind) {
        case LossKind::cross_entropy:
          s -= t(i, j) * std::log(std::max(p, 1e-12));
          break;
        case LossKind::bce:
          s -= t(i, j) * std::log(std::max(p, 1e-12)) + (1.0 - t(i, j)) * std::log(std::max(1.0 - p, 1e-12));
          break;
        case LossKind::mse:
          s += (p - t(i, j)) * (p - t(i, j));
          break;
      }
    }
  }
  const double n = static_cast<double>(out.rows());
  switch (kind) {
    case LossKind::cross_entropy:
      return s / n;
    default:
      return s / (n * static_cast<double>(out.cols()));
  }
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7});
}

// Central differences over every weight, bias and input cell.
inline GradCheck finite_difference_check(const DenseNet& net, const Matrix& X, LossKind kind, const Matrix& targets,
                                         double h = 1e-5) {
  ForwardTrace trace;
  net.forward(X, trace);
  const GradientTape tape = backward(net, trace, kind, targets);
  GradientTape scratch(net);
  Matrix g_out;
  {
    // dL/dInput from the public backward path.
    ForwardTrace t2;
    const Matrix out = net.forward(X, t2);
    Matrix g;
    switch (kind) {
      case LossKind::cross_entropy:
        g = cross_entropy_grad(out, targets).grad;
        break;
      case LossKind::bce:
        g = bce_grad(out, targets).grad;
        break;
      case LossKind::mse:
        g = mse_grad(out, targets).grad;
        break;
    }
    g_out = net.backward(t2, g, scratch);
  }

  GradCheck r;
  DenseNet probe = net;
  auto loss_at = [&]() { return reference_loss(probe.forward(X), kind, targets); };
  auto& params = probe.parameters();
  for (std::size_t l = 0; l < params.size(); ++l) {
    for (Eigen::Index i = 0; i < params[l].weight.size(); ++i) {
      double& w = params[l].weight.data()[i];
      const double keep = w;
      w = keep + h;
      const double up = loss_at();
      w = keep - h;
      const double down = loss_at();
      w = keep;
      r.max_rel_error = std::max(r.max_rel_error, rel_error((up - down) / (2 * h), tape.layers[l].weight.data()[i]));
      ++r.checked;
    }
    for (Eigen::Index i = 0; i < params[l].bias.size(); ++i) {
      double& b = params[l].bias[i];
      const double keep = b;
      b = keep + h;
      const double up = loss_at();
      b = keep - h;
      const double down = loss_at();
      b = keep;
      r.max_rel_error = std::max(r.max_rel_error, rel_error((up - down) / (2 * h), tape.layers[l].bias[i]));
      ++r.checked;
    }
  }
  Matrix Xp = X;
  for (Eigen::Index i = 0; i < Xp.size(); ++i) {
    double& x = Xp.data()[i];
    const double keep = x;
    x = keep + h;
    const double up = reference_loss(net.forward(Xp), kind, targets);
    x = keep - h;
    const double down = reference_loss(net.forward(Xp), kind, targets);
    x = keep;
    r.max_rel_error = std::max(r.max_rel_error, rel_error((up - down) / (2 * h), g_out.data()[i]));
    ++r.checked;
  }
  return r;
}

// Best matched count over all injective cluster -> class maps, by enumeration.
inline std::int64_t brute_force_matched(const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& counts) {
  const int rows = static_cast<int>(counts.rows());
  const int cols = static_cast<int>(counts.cols());
  const int n = std::max(rows, cols);
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::int64_t best = 0;
  do {
    std::int64_t s = 0;
    for (int c = 0; c < cols; ++c) {
      const int r = perm[static_cast<std::size_t>(c)];
      if (r < rows) s += counts(r, c);
    }
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Top-k by a full similarity table and a stable sort.
inline std::vector<std::vector<int>> naive_pseudo_labels(const Matrix& Z, int k) {
  const auto b = static_cast<std::size_t>(Z.rows());
  std::vector<std::vector<double>> sim(b, std::vector<double>(b, 0.0));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      double dot = 0.0, ni = 0.0, nj = 0.0;
      for (Eigen::Index c = 0; c < Z.cols(); ++c) {
        const double a = Z(static_cast<Eigen::Index>(i), c);
        const double d = Z(static_cast<Eigen::Index>(j), c);
        dot += a * d;
        ni += a * a;
        nj += d * d;
      }
      const double cos = (ni == 0.0 || nj == 0.0) ? 0.0 : dot / (std::sqrt(ni) * std::sqrt(nj));
      // Values equal up to rounding noise count as ties (resolution 2^-40).
      sim[i][j] = std::round(cos * 1099511627776.0) / 1099511627776.0;
    }
  }
  std::vector<std::vector<int>> out(b, std::vector<int>(b, 0));
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sim[i][x] > sim[i][y]; });
    for (int t = 0; t < k; ++t) out[i][order[static_cast<std::size_t>(t)]] = 1;
  }
  return out;
}

// Isotropic Gaussian blobs written as a CSV plus a manifest; returns the manifest path.
struct BlobSpec {
  int dims = 8;
  int per_class = 300;
  double spread = 0.5;
  double separation = 6.0;
  std::vector<std::string> known{"a"};
  std::vector<std::string> unknown{"b", "c"};
  std::uint64_t seed = 7;
};

inline std::filesystem::path write_blob_dataset(const std::filesystem::path& dir, const BlobSpec& spec) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 gen(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.spread);
  std::vector<std::string> classes = spec.known;
  classes.insert(classes.end(), spec.unknown.begin(), spec.unknown.end());

  std::ofstream csv(dir / "blobs.csv");
  for (int c = 0; c < spec.dims; ++c) csv << 'f' << c << ',';
  csv << "label\n";
  for (std::size_t k = 0; k < classes.size(); ++k) {
    // Class k sits on its own axis (wrapping when there are more classes than dims).
    std::vector<double> centre(static_cast<std::size_t>(spec.dims), 0.0);
    centre[k % static_cast<std::size_t>(spec.dims)] = spec.separation * static_cast<double>(1 + k / spec.dims);
    for (int r = 0; r < spec.per_class; ++r) {
      for (int c = 0; c < spec.dims; ++c) csv << centre[static_cast<std::size_t>(c)] + noise(gen) << ',';
      csv << classes[k] << '\n';
    }
  }
  nlohmann::json m{{"name", "blobs"},
                   {"train_csv", "blobs.csv"},
                   {"label_column", "label"},
                   {"known_classes", spec.known},
                   {"unknown_classes", spec.unknown},
                   {"train_fraction", 0.7},
                   {"seed", spec.seed}};
  std::ofstream(dir / "manifest.json") << m.dump(2);
  return dir / "manifest.json";
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tabncd_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace tabncd::oracle
