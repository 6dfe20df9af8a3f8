#pragma once

// Clustering evaluation: accuracy under the optimal cluster-to-class matching
// (Hungarian algorithm), balanced accuracy, NMI and ARI.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace tabncd {

/// Rows are true classes, columns predicted clusters, both in ascending label order.
struct ContingencyTable {
  std::vector<int> classes;
  std::vector<int> clusters;
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;
  std::int64_t n = 0;

  static ContingencyTable from_labels(std::span<const int> y_true, std::span<const int> y_pred);
  /// Table with classes/clusters numbered 0..rows-1 / 0..cols-1.
  static ContingencyTable from_counts(const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& counts);

  [[nodiscard]] std::vector<std::int64_t> row_sums() const;
  [[nodiscard]] std::vector<std::int64_t> col_sums() const;
};

/// Injective cluster -> class matching. cluster_to_class[c] is a row index of the
/// table or -1 when the cluster is left unmatched (more clusters than classes).
struct Assignment {
  std::vector<int> cluster_to_class;
  std::int64_t matched = 0;
};

/// Minimum-cost assignment of rows to distinct columns for a rows <= cols cost
/// matrix (O(n^2 m) shortest augmenting paths). Returns the column of each row.
std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost);

/// Maximum-weight matching on the contingency table; rectangular tables are
/// padded with zero-weight dummies.
Assignment hungarian_assign(const ContingencyTable& table);

double clustering_accuracy(std::span<const int> y_true, std::span<const int> y_pred);
double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred);
/// Arithmetic-mean normalisation. 0 when exactly one labeling is a single
/// cluster, 1 when both are.
double nmi(std::span<const int> y_true, std::span<const int> y_pred);
double ari(std::span<const int> y_true, std::span<const int> y_pred);

struct MetricsReport {
  double acc = 0.0;
  double bacc = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
  std::int64_t n = 0;
  std::vector<std::pair<int, int>> assignment;      // (cluster, class), class -1 if unmatched
  std::vector<std::pair<int, double>> per_class_recall;  // (class, recall)
};

MetricsReport evaluate_clustering(std::span<const int> y_true, std::span<const int> y_pred);

/// {acc, bacc, nmi, ari, assignment, n, per_class_recall}. Class ids are
/// rendered through `class_names` when given.
nlohmann::json to_json(const MetricsReport& report, const std::vector<std::string>& class_names = {});

}  // namespace tabncd
