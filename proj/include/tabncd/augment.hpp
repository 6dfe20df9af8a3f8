#pragma once

// SMOTE-NC perturbation: move a row toward one of its nearest neighbours on
// continuous dimensions and take the neighbourhood majority on each one-hot
// group. Used to produce the perturbed counterpart of a row for consistency
// regularisation, not for oversampling.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tabncd/data.hpp"
#include "tabncd/nn.hpp"
#include "tabncd/rng.hpp"

namespace tabncd {

struct AugmentConfig {
  int k_neighbors = 5;
};

struct SmoteSample {
  Vector x_bar;
  Eigen::Index neighbor = -1;  // pool row interpolated toward
  double lambda = 0.0;
};

/// Perturbs `x` against `pool`. Neighbours are ranked by Euclidean distance over
/// continuous dimensions (ties to the lower pool index); `exclude` removes one
/// pool row (x itself) from consideration.
SmoteSample smote_nc_perturb(std::span<const double> x, const Matrix& pool, const ColumnSchema& schema,
                             const AugmentConfig& cfg, Rng& rng,
                             std::optional<Eigen::Index> exclude = std::nullopt);

/// Same rule applied to every row of a TrainingPool with neighbour lists
/// computed once. Labeled rows draw neighbours from labeled rows of the same
/// class, unlabeled rows from all unlabeled rows.
class SmotePerturber {
 public:
  SmotePerturber(const LabeledSet& labeled, const UnlabeledSet& unlabeled, const ColumnSchema& schema,
                 const AugmentConfig& cfg);

  /// One perturbed copy of every pool row, pool order (labeled first).
  [[nodiscard]] Matrix perturb_all(Rng& rng) const;

  [[nodiscard]] const std::vector<std::vector<std::size_t>>& neighbors() const { return neighbors_; }

 private:

  Matrix rows_;  // labeled then unlabeled
  std::vector<int> continuous_;
  std::vector<CategoricalGroup> groups_;
  std::vector<std::vector<std::size_t>> neighbors_;  // k nearest per row, nearest first
};

/// Indices of the k nearest rows of `pool` to `query` by continuous-dimension
/// distance, nearest first, ties to the lower index.
std::vector<Eigen::Index> nearest_neighbors(std::span<const double> query, const Matrix& pool,
                                            std::span<const int> continuous_dims, int k,
                                            std::optional<Eigen::Index> exclude = std::nullopt);

}  // namespace tabncd
