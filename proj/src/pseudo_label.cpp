#include "tabncd/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tabncd/errors.hpp"

namespace tabncd {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double cosine_similarity(std::span<const double> a, std::span<const double> b, std::size_t* zero_norm_count) {
  if (a.size() != b.size()) throw ConfigError("cosine_similarity: length mismatch");
  const double na = std::sqrt(dot(a.data(), a.data(), a.size()));
  const double nb = std::sqrt(dot(b.data(), b.data(), b.size()));
  if (na == 0.0 || nb == 0.0) {
    if (zero_norm_count) ++*zero_norm_count;
    return 0.0;
  }
  return dot(a.data(), b.data(), a.size()) / (na * nb);
}

PseudoLabelSet::PseudoLabelSet(std::size_t batch, int k) : batch_(batch), k_(k), bits_(batch * batch, 0) {}

std::size_t PseudoLabelSet::row_sum(std::size_t i) const {
  return static_cast<std::size_t>(std::count(bits_.begin() + static_cast<std::ptrdiff_t>(i * batch_),
                                             bits_.begin() + static_cast<std::ptrdiff_t>((i + 1) * batch_), 1));
}

Matrix PseudoLabelSet::as_matrix() const {
  Matrix m(static_cast<Eigen::Index>(batch_), static_cast<Eigen::Index>(batch_));
  for (std::size_t i = 0; i < batch_; ++i)
    for (std::size_t j = 0; j < batch_; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = at(i, j);
  return m;
}

PseudoLabelSet assign_pseudo_labels(const Matrix& latent, int k, std::size_t* zero_norm_count) {
  const auto b = static_cast<std::size_t>(latent.rows());
  if (k < 1 || static_cast<std::size_t>(k) >= b) {
    throw ConfigError("assign_pseudo_labels: need 1 <= k <= batch-1 (k=" + std::to_string(k) +
                      ", batch=" + std::to_string(b) + ")");
  }
  const auto m = static_cast<std::size_t>(latent.cols());
  // Row-major storage: row i starts at data() + i*m.
  const double* base = latent.data();
  std::vector<double> norms(b);
  for (std::size_t i = 0; i < b; ++i) norms[i] = std::sqrt(dot(base + i * m, base + i * m, m));

  // Symmetric table; each pair is evaluated once.
  std::vector<double> sim(b * b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      double s = 0.0;
      if (norms[i] == 0.0 || norms[j] == 0.0) {
        if (zero_norm_count) ++*zero_norm_count;
      } else {
        // Snapped to a 2^-40 grid so similarities that agree up to rounding
        // noise tie exactly (and rescaling the batch cannot reorder them).
        s = std::ldexp(std::round(std::ldexp(dot(base + i * m, base + j * m, m) / (norms[i] * norms[j]), 40)), -40);
      }
      sim[i * b + j] = s;
      sim[j * b + i] = s;
    }
  }

  PseudoLabelSet out(b, k);
  std::vector<std::size_t> candidates(b - 1);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t c = 0;
    for (std::size_t r = 0; r < b; ++r) {
      if (r != i) candidates[c++] = r;
    }
    const double* row = sim.data() + i * b;
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(),
                      [row](std::size_t x, std::size_t y) {
                        return row[x] > row[y] || (row[x] == row[y] && x < y);
                      });
    for (int t = 0; t < k; ++t) out.set(i, candidates[static_cast<std::size_t>(t)]);
  }
  return out;
}

double pseudo_label_precision(const PseudoLabelSet& labels, std::span<const int> truth) {
  if (truth.size() != labels.batch()) throw ConfigError("pseudo_label_precision: size mismatch");
  std::size_t positives = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.batch(); ++i) {
    for (std::size_t j = 0; j < labels.batch(); ++j) {
      if (i == j || !labels.at(i, j)) continue;
      ++positives;
      if (truth[i] == truth[j]) ++correct;
    }
  }
  return positives == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(positives);
}

}  // namespace tabncd
