#include "tabncd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "tabncd/errors.hpp"

namespace tabncd {

namespace {

void check_lengths(std::span<const int> a, std::span<const int> b, std::size_t min_len) {
  if (a.size() != b.size()) throw ConfigError("metrics: label vectors differ in length");
  if (a.size() < min_len) {
    throw ConfigError("metrics: need at least " + std::to_string(min_len) + " labels");
  }
}

std::vector<int> sorted_unique(std::span<const int> v) {
  std::vector<int> u(v.begin(), v.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

// Summing in sorted order makes the result independent of label ids.
double sorted_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (const double t : terms) s += t;
  return s;
}

double entropy(const std::vector<std::int64_t>& counts, double n) {
  std::vector<double> terms;
  for (const auto c : counts) {
    if (c > 0) {
      const double p = static_cast<double>(c) / n;
      terms.push_back(-p * std::log(p));
    }
  }
  return sorted_sum(std::move(terms));
}

}  // namespace

ContingencyTable ContingencyTable::from_labels(std::span<const int> y_true, std::span<const int> y_pred) {
  check_lengths(y_true, y_pred, 1);
  ContingencyTable t;
  t.classes = sorted_unique(y_true);
  t.clusters = sorted_unique(y_pred);
  t.counts.setZero(static_cast<Eigen::Index>(t.classes.size()), static_cast<Eigen::Index>(t.clusters.size()));
  auto index_of = [](const std::vector<int>& v, int x) {
    return static_cast<Eigen::Index>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
  };
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ++t.counts(index_of(t.classes, y_true[i]), index_of(t.clusters, y_pred[i]));
  }
  t.n = static_cast<std::int64_t>(y_true.size());
  return t;
}

ContingencyTable ContingencyTable::from_counts(const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& counts) {
  if ((counts.array() < 0).any()) throw ConfigError("contingency counts must be non-negative");
  ContingencyTable t;
  t.counts = counts;
  for (Eigen::Index r = 0; r < counts.rows(); ++r) t.classes.push_back(static_cast<int>(r));
  for (Eigen::Index c = 0; c < counts.cols(); ++c) t.clusters.push_back(static_cast<int>(c));
  t.n = counts.sum();
  return t;
}

std::vector<std::int64_t> ContingencyTable::row_sums() const {
  std::vector<std::int64_t> s(static_cast<std::size_t>(counts.rows()));
  for (Eigen::Index r = 0; r < counts.rows(); ++r) s[static_cast<std::size_t>(r)] = counts.row(r).sum();
  return s;
}

std::vector<std::int64_t> ContingencyTable::col_sums() const {
  std::vector<std::int64_t> s(static_cast<std::size_t>(counts.cols()));
  for (Eigen::Index c = 0; c < counts.cols(); ++c) s[static_cast<std::size_t>(c)] = counts.col(c).sum();
  return s;
}

// ---------------------------------------------------------------------------

std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<int>(cost.rows());
  const auto m = static_cast<int>(cost.cols());
  if (n > m) throw ConfigError("min_cost_assignment: more rows than columns");
  if (n == 0) return {};
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials formulation; column 0 is a virtual source.
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[static_cast<std::size_t>(j)] != 0) row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }
  return row_to_col;
}

Assignment hungarian_assign(const ContingencyTable& table) {
  if (table.n < 1) throw ConfigError("hungarian_assign: empty table");
  const auto rows = table.counts.rows();
  const auto cols = table.counts.cols();
  const auto size = std::max(rows, cols);
  // Square cost over clusters (rows of the cost) x classes; dummies weigh 0.
  // Clusters enter the solver ordered by their count columns, so among equally
  // good matchings the one chosen does not depend on cluster ids.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(cols));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (table.counts(r, x) != table.counts(r, y)) return table.counts(r, x) > table.counts(r, y);
    }
    return false;
  });
  const double top = static_cast<double>(table.counts.maxCoeff());
  Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(size, size, top);
  for (Eigen::Index k = 0; k < cols; ++k)
    for (Eigen::Index r = 0; r < rows; ++r)
      cost(k, r) = top - static_cast<double>(table.counts(r, order[static_cast<std::size_t>(k)]));

  const auto match = min_cost_assignment(cost);
  Assignment a;
  a.cluster_to_class.assign(static_cast<std::size_t>(cols), -1);
  for (Eigen::Index k = 0; k < cols; ++k) {
    const Eigen::Index c = order[static_cast<std::size_t>(k)];
    const int r = match[static_cast<std::size_t>(k)];
    if (r < rows) {
      a.cluster_to_class[static_cast<std::size_t>(c)] = r;
      a.matched += table.counts(r, c);
    }
  }
  return a;
}

double clustering_accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
  check_lengths(y_true, y_pred, 1);
  const auto table = ContingencyTable::from_labels(y_true, y_pred);
  return static_cast<double>(hungarian_assign(table).matched) / static_cast<double>(table.n);
}

double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
  return evaluate_clustering(y_true, y_pred).bacc;
}

double nmi(std::span<const int> y_true, std::span<const int> y_pred) {
  check_lengths(y_true, y_pred, 2);
  const auto t = ContingencyTable::from_labels(y_true, y_pred);
  const double n = static_cast<double>(t.n);
  const auto a = t.row_sums();
  const auto b = t.col_sums();
  const double hu = entropy(a, n);
  const double hv = entropy(b, n);
  if (t.classes.size() == 1 && t.clusters.size() == 1) return 1.0;
  if (t.classes.size() == 1 || t.clusters.size() == 1) return 0.0;
  std::vector<double> terms;
  for (Eigen::Index r = 0; r < t.counts.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.counts.cols(); ++c) {
      const auto nij = static_cast<double>(t.counts(r, c));
      if (nij == 0.0) continue;
      terms.push_back(nij / n *
                      std::log(n * nij / (static_cast<double>(a[static_cast<std::size_t>(r)]) *
                                          static_cast<double>(b[static_cast<std::size_t>(c)]))));
    }
  }
  const double mi = sorted_sum(std::move(terms));
  const double value = mi / ((hu + hv) / 2.0);
  return std::clamp(value, 0.0, 1.0);
}

double ari(std::span<const int> y_true, std::span<const int> y_pred) {
  check_lengths(y_true, y_pred, 2);
  const auto t = ContingencyTable::from_labels(y_true, y_pred);
  const double n = static_cast<double>(t.n);
  double index = 0.0;
  for (Eigen::Index r = 0; r < t.counts.rows(); ++r)
    for (Eigen::Index c = 0; c < t.counts.cols(); ++c) index += comb2(static_cast<double>(t.counts(r, c)));
  double sum_a = 0.0;
  double sum_b = 0.0;
  for (const auto x : t.row_sums()) sum_a += comb2(static_cast<double>(x));
  for (const auto x : t.col_sums()) sum_b += comb2(static_cast<double>(x));
  const double expected = sum_a * sum_b / comb2(n);
  const double max_index = (sum_a + sum_b) / 2.0;
  if (max_index == expected) return 1.0;  // both labelings trivial (one cluster, or all singletons)
  return (index - expected) / (max_index - expected);
}

MetricsReport evaluate_clustering(std::span<const int> y_true, std::span<const int> y_pred) {
  check_lengths(y_true, y_pred, 1);
  const auto t = ContingencyTable::from_labels(y_true, y_pred);
  const auto a = hungarian_assign(t);
  MetricsReport r;
  r.n = t.n;
  r.acc = static_cast<double>(a.matched) / static_cast<double>(t.n);
  const auto class_sizes = t.row_sums();
  std::vector<std::int64_t> hits(t.classes.size(), 0);
  for (std::size_t c = 0; c < a.cluster_to_class.size(); ++c) {
    const int cls = a.cluster_to_class[c];
    r.assignment.emplace_back(t.clusters[c], cls < 0 ? -1 : t.classes[static_cast<std::size_t>(cls)]);
    if (cls >= 0) hits[static_cast<std::size_t>(cls)] += t.counts(cls, static_cast<Eigen::Index>(c));
  }
  double recall_sum = 0.0;
  for (std::size_t k = 0; k < t.classes.size(); ++k) {
    const double recall = static_cast<double>(hits[k]) / static_cast<double>(class_sizes[k]);
    r.per_class_recall.emplace_back(t.classes[k], recall);
    recall_sum += recall;
  }
  r.bacc = recall_sum / static_cast<double>(t.classes.size());
  if (t.n >= 2) {
    r.nmi = nmi(y_true, y_pred);
    r.ari = ari(y_true, y_pred);
  }
  return r;
}

nlohmann::json to_json(const MetricsReport& report, const std::vector<std::string>& class_names) {
  auto name = [&](int cls) -> nlohmann::json {
    if (cls < 0) return nullptr;
    if (static_cast<std::size_t>(cls) < class_names.size()) return class_names[static_cast<std::size_t>(cls)];
    return cls;
  };
  nlohmann::json assignment = nlohmann::json::array();
  for (const auto& [cluster, cls] : report.assignment) assignment.push_back({{"cluster", cluster}, {"class", name(cls)}});
  nlohmann::json recall = nlohmann::json::array();
  for (const auto& [cls, value] : report.per_class_recall) recall.push_back({{"class", name(cls)}, {"recall", value}});
  return {{"acc", report.acc},   {"bacc", report.bacc},         {"nmi", report.nmi},
          {"ari", report.ari},   {"assignment", assignment},   {"n", report.n},
          {"per_class_recall", recall}};
}

}  // namespace tabncd
