#include "tabncd/augment.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "tabncd/errors.hpp"
#include "tabncd/log.hpp"

namespace tabncd {

namespace {

/// Active category of a one-hot group, or -1 when the group is all zero.
int active_category(const double* row, const CategoricalGroup& g) {
  for (int c = 0; c < g.width; ++c) {
    if (row[g.offset + c] > 0.5) return c;
  }
  return -1;
}

/// Majority vote over neighbour categories; ties go to `own` when it is among
/// the tied, otherwise to the lowest category.
int vote(const std::vector<int>& votes, int width, int own) {
  std::vector<int> counts(static_cast<std::size_t>(width), 0);
  for (const int v : votes) {
    if (v >= 0) ++counts[static_cast<std::size_t>(v)];
  }
  const int best = *std::max_element(counts.begin(), counts.end());
  if (own >= 0 && counts[static_cast<std::size_t>(own)] == best) return own;
  return static_cast<int>(std::find(counts.begin(), counts.end(), best) - counts.begin());
}

void apply_perturbation(const double* x, const double* neighbor, double lambda,
                        const std::vector<std::vector<int>>& group_votes,
                        std::span<const int> continuous, std::span<const CategoricalGroup> groups,
                        double* out, Eigen::Index dim) {
  std::copy(x, x + dim, out);
  for (const int j : continuous) {
    // Rounding can land one ulp outside the segment; keep it inside.
    const double v = x[j] + lambda * (neighbor[j] - x[j]);
    out[j] = std::clamp(v, std::min(x[j], neighbor[j]), std::max(x[j], neighbor[j]));
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    const int chosen = vote(group_votes[g], grp.width, active_category(x, grp));
    std::fill(out + grp.offset, out + grp.offset + grp.width, 0.0);
    out[grp.offset + chosen] = 1.0;
  }
}

}  // namespace

std::vector<Eigen::Index> nearest_neighbors(std::span<const double> query, const Matrix& pool,
                                            std::span<const int> continuous_dims, int k,
                                            std::optional<Eigen::Index> exclude) {
  std::vector<std::pair<double, Eigen::Index>> dist;
  dist.reserve(static_cast<std::size_t>(pool.rows()));
  for (Eigen::Index r = 0; r < pool.rows(); ++r) {
    if (exclude && *exclude == r) continue;
    double d = 0.0;
    for (const int j : continuous_dims) {
      const double diff = pool(r, j) - query[static_cast<std::size_t>(j)];
      d += diff * diff;
    }
    dist.emplace_back(d, r);
  }
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back(dist[i].second);
  return out;
}

SmoteSample smote_nc_perturb(std::span<const double> x, const Matrix& pool, const ColumnSchema& schema,
                             const AugmentConfig& cfg, Rng& rng, std::optional<Eigen::Index> exclude) {
  if (cfg.k_neighbors < 1) throw ConfigError("smote: k_neighbors must be >= 1");
  if (pool.rows() < cfg.k_neighbors + 1) {
    throw ConfigError("smote: pool has " + std::to_string(pool.rows()) + " rows, need at least k_neighbors+1 = " +
                      std::to_string(cfg.k_neighbors + 1));
  }
  if (static_cast<Eigen::Index>(x.size()) != pool.cols() || pool.cols() != schema.encoded_dim) {
    throw ConfigError("smote: dimension mismatch between row, pool and schema");
  }
  const auto continuous = schema.continuous_dims();
  const auto groups = schema.categorical_groups();
  const auto nn = nearest_neighbors(x, pool, continuous, cfg.k_neighbors, exclude);

  SmoteSample s;
  s.neighbor = nn[rng.uniform_index(nn.size())];
  s.lambda = rng.uniform01();
  std::vector<std::vector<int>> votes(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (const auto r : nn) votes[g].push_back(active_category(pool.row(r).data(), groups[g]));
  }
  s.x_bar.resize(pool.cols());
  apply_perturbation(x.data(), pool.row(s.neighbor).data(), s.lambda, votes, continuous, groups,
                     s.x_bar.data(), pool.cols());
  return s;
}

// ---------------------------------------------------------------------------

SmotePerturber::SmotePerturber(const LabeledSet& labeled, const UnlabeledSet& unlabeled,
                               const ColumnSchema& schema, const AugmentConfig& cfg)
    : continuous_(schema.continuous_dims()), groups_(schema.categorical_groups()) {
  if (cfg.k_neighbors < 1) throw ConfigError("smote: k_neighbors must be >= 1");
  const Eigen::Index nl = static_cast<Eigen::Index>(labeled.rows());
  const Eigen::Index nu = static_cast<Eigen::Index>(unlabeled.rows());
  rows_.resize(nl + nu, schema.encoded_dim);
  if (nl > 0) rows_.topRows(nl) = labeled.X;
  if (nu > 0) rows_.bottomRows(nu) = unlabeled.X;

  // Pools: one per labeled class, one for all unlabeled rows.
  std::map<int, std::vector<std::size_t>> pools;
  for (std::size_t i = 0; i < labeled.rows(); ++i) pools[labeled.y[i]].push_back(i);
  std::vector<std::size_t> unl(static_cast<std::size_t>(nu));
  std::iota(unl.begin(), unl.end(), static_cast<std::size_t>(nl));

  // Continuous-only coordinates for distance computations.
  Matrix cont(rows_.rows(), static_cast<Eigen::Index>(continuous_.size()));
  for (std::size_t c = 0; c < continuous_.size(); ++c) cont.col(static_cast<Eigen::Index>(c)) = rows_.col(continuous_[c]);
  const Vector sq = cont.rowwise().squaredNorm();

  neighbors_.assign(static_cast<std::size_t>(rows_.rows()), {});
  std::size_t shrunk = 0;
  auto build = [&](const std::vector<std::size_t>& members) {
    if (members.empty()) return;
    const auto m = static_cast<Eigen::Index>(members.size());
    const std::vector<Eigen::Index> idx(members.begin(), members.end());
    const Matrix sub = cont(idx, Eigen::all);
    const Matrix gram = sub * sub.transpose();
    const int k = std::min<int>(cfg.k_neighbors, static_cast<int>(m) - 1);
    if (k < cfg.k_neighbors) ++shrunk;
    std::vector<std::pair<double, std::size_t>> cand;
    for (Eigen::Index a = 0; a < m; ++a) {
      cand.clear();
      for (Eigen::Index b = 0; b < m; ++b) {
        if (a == b) continue;
        const double d = std::max(0.0, sq(idx[a]) + sq(idx[b]) - 2.0 * gram(a, b));
        cand.emplace_back(d, members[static_cast<std::size_t>(b)]);
      }
      if (k > 0) {
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
      }
      auto& out = neighbors_[members[static_cast<std::size_t>(a)]];
      for (int t = 0; t < k; ++t) out.push_back(cand[static_cast<std::size_t>(t)].second);
    }
  };
  for (const auto& [cls, members] : pools) build(members);
  build(unl);
  if (shrunk > 0) {
    log_warn("smote: " + std::to_string(shrunk) + " neighbour pool(s) smaller than k_neighbors+1; k reduced");
  }
}

Matrix SmotePerturber::perturb_all(Rng& rng) const {
  Matrix out(rows_.rows(), rows_.cols());
  std::vector<std::vector<int>> votes(groups_.size());
  for (Eigen::Index r = 0; r < rows_.rows(); ++r) {
    const auto& nn = neighbors_[static_cast<std::size_t>(r)];
    const double* x = rows_.row(r).data();
    if (nn.empty()) {  // singleton pool
      out.row(r) = rows_.row(r);
      continue;
    }
    const auto pick = nn[rng.uniform_index(nn.size())];
    const double lambda = rng.uniform01();
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      votes[g].clear();
      for (const auto n : nn) votes[g].push_back(active_category(rows_.row(static_cast<Eigen::Index>(n)).data(), groups_[g]));
    }
    apply_perturbation(x, rows_.row(static_cast<Eigen::Index>(pick)).data(), lambda, votes, continuous_, groups_,
                       out.row(r).data(), rows_.cols());
  }
  return out;
}

}  // namespace tabncd
