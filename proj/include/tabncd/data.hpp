#pragma once

// Tabular ingestion and the novel-class-discovery split protocol.
//
// Labels of unknown-class rows never appear in the training-side types:
// LabeledSet carries labels of known classes only, UnlabeledSet carries no
// labels at all, and the hidden labels live in HiddenLabels, which is only
// consumed by evaluation code.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabncd/nn.hpp"
#include "tabncd/rng.hpp"

namespace tabncd {

enum class ColumnKind { continuous, categorical };

struct CategoricalGroup {
  int offset = 0;
  int width = 0;
};

/// Layout of one input column after encoding.
struct EncodedColumn {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  int offset = 0;  // first encoded column
  int width = 1;   // 1 for continuous, cardinality for categorical
  std::vector<std::string> categories;  // categorical only, sorted
  double min = 0.0;                     // continuous only, training statistics
  double max = 0.0;
};

struct ColumnSchema {
  std::vector<EncodedColumn> columns;
  int encoded_dim = 0;

  [[nodiscard]] std::vector<int> continuous_dims() const;
  [[nodiscard]] std::vector<CategoricalGroup> categorical_groups() const;
  /// One-hot spans disjoint and covering, cardinality >= 2. Throws ConfigError.
  void validate() const;

  /// Schema with every encoded column continuous (synthetic data, tests).
  static ColumnSchema all_continuous(int dims);
};

/// Column kinds as declared by a manifest; columns not listed use the default.
struct ColumnKinds {
  ColumnKind default_kind = ColumnKind::continuous;
  std::map<std::string, ColumnKind> overrides;
  std::vector<std::string> dropped;

  [[nodiscard]] ColumnKind kind_of(const std::string& column) const;
};

/// Parsed CSV before encoding. Rows with missing values are already removed.
struct RawTable {
  std::vector<std::string> feature_names;
  std::vector<std::vector<std::string>> cells;  // rows x features
  std::vector<std::string> labels;
  std::size_t dropped_missing = 0;

  [[nodiscard]] std::size_t rows() const { return labels.size(); }
};

/// Reads a headered CSV. Empty, "?", "NA" and "NaN" cells count as missing and
/// drop the row. Columns listed in `kinds.dropped` are skipped.
RawTable read_csv(const std::filesystem::path& path, const std::string& label_column,
                  const ColumnKinds& kinds, char delimiter = ',');

/// Fits min/max and category levels on `rows` of `table`.
ColumnSchema fit_schema(const RawTable& table, const std::vector<std::size_t>& rows,
                        const ColumnKinds& kinds);

struct EncodeStats {
  std::size_t unseen_categories = 0;  // cells mapped to an all-zero one-hot
};

/// Min-max scales continuous columns (clipped to [-0.05, 1.05]) and one-hot
/// expands categorical ones.
Matrix encode_rows(const ColumnSchema& schema, const RawTable& table,
                   const std::vector<std::size_t>& rows, EncodeStats* stats = nullptr);

/// Known classes occupy ids [0, C^l), unknown classes [C^l, C^l + C^u).
struct ClassPartition {
  std::vector<std::string> known;
  std::vector<std::string> unknown;

  [[nodiscard]] int num_known() const { return static_cast<int>(known.size()); }
  [[nodiscard]] int num_unknown() const { return static_cast<int>(unknown.size()); }
  [[nodiscard]] int num_classes() const { return num_known() + num_unknown(); }
  /// Global class id of a label string, or nullopt if the label is in neither list.
  [[nodiscard]] std::optional<int> class_id(const std::string& label) const;
  [[nodiscard]] const std::string& class_name(int id) const;
  /// Disjoint, both non-empty. Throws ConfigError.
  void validate() const;
};

enum class SplitRole { train, test };

/// A fully encoded table: every row with its class id and labeled flag.
struct TabularDataset {
  Matrix X;
  std::vector<int> y;  // global class ids
  std::vector<bool> is_labeled;
  std::vector<SplitRole> split;
  ColumnSchema schema;
  ClassPartition partition;

  [[nodiscard]] std::size_t rows() const { return y.size(); }
};

/// Loads a whole CSV as one training table, fitting the encoding on all rows.
/// Without a partition, classes are numbered in sorted label order and all rows
/// count as labeled.
TabularDataset load_csv(const std::filesystem::path& path, const ColumnKinds& kinds,
                        const std::string& label_column,
                        const std::optional<ClassPartition>& partition = std::nullopt);

struct LabeledSet {
  Matrix X;
  std::vector<int> y;  // in [0, C^l)
  std::vector<std::size_t> row_ids;

  [[nodiscard]] std::size_t rows() const { return y.size(); }
};

struct UnlabeledSet {
  Matrix X;
  std::vector<std::size_t> row_ids;

  [[nodiscard]] std::size_t rows() const { return row_ids.size(); }
};

/// Ground truth of unlabeled rows, ids in [0, C^u). Evaluation only.
struct HiddenLabels {
  std::vector<int> train;
  std::vector<int> test;
};

struct NcdSplit {
  ColumnSchema schema;
  ClassPartition partition;
  LabeledSet labeled_train;
  UnlabeledSet unlabeled_train;
  LabeledSet labeled_test;
  UnlabeledSet unlabeled_test;
  HiddenLabels hidden;
  std::size_t excluded_rows = 0;    // label in neither class list
  std::size_t dropped_missing = 0;  // rows with missing values
  std::size_t unseen_categories = 0;
  std::string name;
  std::uint64_t seed = 0;
};

/// Per-class train/test assignment by largest-remainder apportionment of
/// round(train_fraction * n) training rows, at least one row of each class on
/// each side. Throws DataError for classes with fewer than two rows.
struct TrainTestIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
TrainTestIndices stratified_split(const std::vector<int>& labels, double train_fraction,
                                  std::uint64_t seed);

/// Splits an already-encoded dataset. `unknown_classes` are global class ids;
/// they are remapped so the remaining classes become known ids [0, C^l) and the
/// hidden ones [0, C^u), both in ascending original-id order.
NcdSplit ncd_split(const TabularDataset& ds, const std::vector<int>& unknown_classes,
                   double train_fraction, std::uint64_t seed);

struct DatasetManifest {
  std::string name;
  std::filesystem::path train_csv;
  std::optional<std::filesystem::path> test_csv;
  std::string label_column;
  ColumnKinds kinds;
  ClassPartition partition;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  char delimiter = ',';

  /// Relative paths are resolved against `base_dir`.
  static DatasetManifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static DatasetManifest load(const std::filesystem::path& path);
};

/// Reads the manifest's CSV(s), splits (stratified when there is no test file),
/// fits the encoding on the training rows only, and encodes every part.
NcdSplit prepare_split(const DatasetManifest& manifest);

/// Counts per part and per class.
nlohmann::json split_summary(const NcdSplit& split);

/// Classifier-facing batch: unlabeled rows carry the aggregate target C^l.
struct Batch {
  std::vector<std::size_t> indices;  // into the combined pool
  Matrix X;
  std::vector<int> targets;
  std::vector<std::size_t> unlabeled_positions;  // positions within the batch
};

/// Labeled and unlabeled training rows addressed as one index space:
/// [0, n_l) labeled, [n_l, n_l + n_u) unlabeled.
class TrainingPool {
 public:
  TrainingPool(const LabeledSet& labeled, const UnlabeledSet& unlabeled, int num_known);

  [[nodiscard]] std::size_t size() const { return labeled_->rows() + unlabeled_->rows(); }
  [[nodiscard]] std::size_t num_labeled() const { return labeled_->rows(); }
  [[nodiscard]] bool is_unlabeled(std::size_t index) const { return index >= labeled_->rows(); }
  [[nodiscard]] int num_known() const { return num_known_; }
  [[nodiscard]] int dim() const;
  [[nodiscard]] auto row(std::size_t index) const {
    return index < labeled_->rows() ? labeled_->X.row(static_cast<Eigen::Index>(index))
                                    : unlabeled_->X.row(static_cast<Eigen::Index>(index - labeled_->rows()));
  }

  [[nodiscard]] Batch make_batch(const std::vector<std::size_t>& indices) const;
  /// All rows stacked, labeled first.
  [[nodiscard]] Matrix all_rows() const;

 private:
  const LabeledSet* labeled_;
  const UnlabeledSet* unlabeled_;
  int num_known_;
};

/// Shuffled mini-batches without replacement; the last batch of an epoch may
/// be short.
class BatchSampler {
 public:
  BatchSampler(std::size_t rows, std::size_t batch_size, std::uint64_t seed);

  /// Index batches for one full epoch; reshuffles on every call.
  std::vector<std::vector<std::size_t>> next_epoch();
  /// Next batch, starting a new epoch when the current one is exhausted.
  std::vector<std::size_t> next_batch();

  [[nodiscard]] std::size_t batch_size() const { return batch_size_; }
  [[nodiscard]] std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  std::size_t rows_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace tabncd
