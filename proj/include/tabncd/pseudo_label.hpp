#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tabncd/nn.hpp"

namespace tabncd {

/// Cosine similarity. A zero-norm operand yields 0 and bumps `zero_norm_count`.
double cosine_similarity(std::span<const double> a, std::span<const double> b,
                         std::size_t* zero_norm_count = nullptr);

/// Pairwise relation over one batch: row i marks the k rows most cosine-similar
/// to row i (excluding i). Not symmetric in general.
class PseudoLabelSet {
 public:
  PseudoLabelSet(std::size_t batch, int k);

  [[nodiscard]] std::size_t batch() const { return batch_; }
  [[nodiscard]] int k() const { return k_; }
  [[nodiscard]] bool at(std::size_t i, std::size_t j) const { return bits_[i * batch_ + j] != 0; }
  void set(std::size_t i, std::size_t j) { bits_[i * batch_ + j] = 1; }
  [[nodiscard]] std::size_t row_sum(std::size_t i) const;
  /// Dense 0/1 matrix view.
  [[nodiscard]] Matrix as_matrix() const;

  friend bool operator==(const PseudoLabelSet&, const PseudoLabelSet&) = default;

 private:
  std::size_t batch_;
  int k_;
  std::vector<std::uint8_t> bits_;
};

/// Top-k cosine neighbours per row. Similarities are compared at 2^-40
/// resolution and ties resolve to the lower index.
/// Requires 1 <= k <= rows-1 (ConfigError otherwise).
PseudoLabelSet assign_pseudo_labels(const Matrix& latent, int k, std::size_t* zero_norm_count = nullptr);

/// Fraction of positive pairs whose two rows share a ground-truth class.
/// Evaluation only; `truth` is indexed by batch position.
double pseudo_label_precision(const PseudoLabelSet& labels, std::span<const int> truth);

}  // namespace tabncd
