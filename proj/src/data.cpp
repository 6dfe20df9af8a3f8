#include "tabncd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "tabncd/errors.hpp"
#include "tabncd/log.hpp"

namespace tabncd {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  out.push_back(trim(cell));
  return out;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "?" || cell == "NA" || cell == "NaN" || cell == "nan" ||
         cell == "null";
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Numeric order when every label parses as a number, lexicographic otherwise.
void sort_labels(std::vector<std::string>& labels) {
  const bool numeric = std::all_of(labels.begin(), labels.end(),
                                   [](const std::string& l) { return parse_double(l).has_value(); });
  if (numeric) {
    std::sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
      return *parse_double(a) < *parse_double(b);
    });
  } else {
    std::sort(labels.begin(), labels.end());
  }
}

ColumnKind parse_kind(const std::string& s) {
  if (s == "continuous" || s == "numeric") return ColumnKind::continuous;
  if (s == "categorical" || s == "nominal") return ColumnKind::categorical;
  throw ConfigError("unknown column kind '" + s + "'");
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<int> ColumnSchema::continuous_dims() const {
  std::vector<int> dims;
  for (const auto& c : columns) {
    if (c.kind == ColumnKind::continuous) dims.push_back(c.offset);
  }
  return dims;
}

std::vector<CategoricalGroup> ColumnSchema::categorical_groups() const {
  std::vector<CategoricalGroup> groups;
  for (const auto& c : columns) {
    if (c.kind == ColumnKind::categorical) groups.push_back({c.offset, c.width});
  }
  return groups;
}

void ColumnSchema::validate() const {
  std::vector<int> owner(static_cast<std::size_t>(std::max(encoded_dim, 0)), -1);
  for (std::size_t i = 0; i < columns.size(); ++i) {
    const auto& c = columns[i];
    if (c.kind == ColumnKind::categorical && c.width < 2) {
      throw ConfigError("categorical column '" + c.name + "' has fewer than 2 levels");
    }
    if (c.kind == ColumnKind::continuous && c.width != 1) {
      throw ConfigError("continuous column '" + c.name + "' must span one encoded column");
    }
    if (c.offset < 0 || c.offset + c.width > encoded_dim) {
      throw ConfigError("column '" + c.name + "' spans past the encoded width");
    }
    for (int k = c.offset; k < c.offset + c.width; ++k) {
      if (owner[static_cast<std::size_t>(k)] != -1) {
        throw ConfigError("column '" + c.name + "' overlaps another column");
      }
      owner[static_cast<std::size_t>(k)] = static_cast<int>(i);
    }
  }
  if (std::find(owner.begin(), owner.end(), -1) != owner.end()) {
    throw ConfigError("encoded columns not covered by any input column");
  }
}

ColumnSchema ColumnSchema::all_continuous(int dims) {
  ColumnSchema s;
  for (int i = 0; i < dims; ++i) {
    EncodedColumn c;
    c.name = "x" + std::to_string(i);
    c.offset = i;
    c.max = 1.0;
    s.columns.push_back(std::move(c));
  }
  s.encoded_dim = dims;
  return s;
}

ColumnKind ColumnKinds::kind_of(const std::string& column) const {
  const auto it = overrides.find(column);
  return it == overrides.end() ? default_kind : it->second;
}

// ---------------------------------------------------------------------------

RawTable read_csv(const std::filesystem::path& path, const std::string& label_column,
                  const ColumnKinds& kinds, char delimiter) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open CSV file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV file " + path.string());
  const auto header = split_line(line, delimiter);

  std::optional<std::size_t> label_idx;
  std::vector<std::size_t> feature_idx;
  RawTable table;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) {
      label_idx = i;
    } else if (std::find(kinds.dropped.begin(), kinds.dropped.end(), header[i]) == kinds.dropped.end()) {
      feature_idx.push_back(i);
      table.feature_names.push_back(header[i]);
    }
  }
  if (!label_idx) throw ConfigError("label column '" + label_column + "' not in " + path.string());
  for (const auto& [name, kind] : kinds.overrides) {
    if (std::find(header.begin(), header.end(), name) == header.end()) {
      throw ConfigError("declared column '" + name + "' not in " + path.string());
    }
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line, delimiter);
    if (cells.size() != header.size()) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": expected " << header.size() << " fields, got "
          << cells.size();
      throw DataError(msg.str());
    }
    bool missing = is_missing(cells[*label_idx]);
    std::vector<std::string> row;
    row.reserve(feature_idx.size());
    for (const auto i : feature_idx) {
      missing = missing || is_missing(cells[i]);
      row.push_back(std::move(cells[i]));
    }
    if (missing) {
      ++table.dropped_missing;
      continue;
    }
    table.cells.push_back(std::move(row));
    table.labels.push_back(std::move(cells[*label_idx]));
  }
  if (table.dropped_missing > 0) {
    log_warn("dropped " + std::to_string(table.dropped_missing) + " rows with missing values from " +
             path.string());
  }
  return table;
}

ColumnSchema fit_schema(const RawTable& table, const std::vector<std::size_t>& rows,
                        const ColumnKinds& kinds) {
  if (rows.empty()) throw DataError("cannot fit preprocessing on zero rows");
  ColumnSchema schema;
  int offset = 0;
  for (std::size_t f = 0; f < table.feature_names.size(); ++f) {
    EncodedColumn col;
    col.name = table.feature_names[f];
    col.kind = kinds.kind_of(col.name);
    col.offset = offset;
    if (col.kind == ColumnKind::continuous) {
      col.min = std::numeric_limits<double>::infinity();
      col.max = -std::numeric_limits<double>::infinity();
      for (const auto r : rows) {
        const auto v = parse_double(table.cells[r][f]);
        if (!v) {
          throw DataError("column '" + col.name + "': non-numeric value '" + table.cells[r][f] + "'");
        }
        col.min = std::min(col.min, *v);
        col.max = std::max(col.max, *v);
      }
      col.width = 1;
    } else {
      std::set<std::string> levels;
      for (const auto r : rows) levels.insert(table.cells[r][f]);
      col.categories.assign(levels.begin(), levels.end());
      col.width = static_cast<int>(col.categories.size());
    }
    offset += col.width;
    schema.columns.push_back(std::move(col));
  }
  schema.encoded_dim = offset;
  schema.validate();
  return schema;
}

Matrix encode_rows(const ColumnSchema& schema, const RawTable& table,
                   const std::vector<std::size_t>& rows, EncodeStats* stats) {
  if (schema.columns.size() != table.feature_names.size()) {
    throw ConfigError("schema has " + std::to_string(schema.columns.size()) + " columns, table has " +
                      std::to_string(table.feature_names.size()));
  }
  Matrix X = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), schema.encoded_dim);
  std::size_t unseen = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& cells = table.cells[rows[i]];
    const auto out_row = static_cast<Eigen::Index>(i);
    for (std::size_t f = 0; f < schema.columns.size(); ++f) {
      const auto& col = schema.columns[f];
      if (col.kind == ColumnKind::continuous) {
        const auto v = parse_double(cells[f]);
        if (!v) throw DataError("column '" + col.name + "': non-numeric value '" + cells[f] + "'");
        const double range = col.max - col.min;
        const double scaled = range > 0.0 ? (*v - col.min) / range : 0.0;
        X(out_row, col.offset) = std::clamp(scaled, -0.05, 1.05);
      } else {
        const auto it = std::lower_bound(col.categories.begin(), col.categories.end(), cells[f]);
        if (it == col.categories.end() || *it != cells[f]) {
          ++unseen;
          continue;
        }
        X(out_row, col.offset + static_cast<int>(it - col.categories.begin())) = 1.0;
      }
    }
  }
  if (unseen > 0) {
    log_warn(std::to_string(unseen) + " categorical cells had levels unseen in training; encoded as all-zero");
  }
  if (stats) stats->unseen_categories += unseen;
  return X;
}

// ---------------------------------------------------------------------------

std::optional<int> ClassPartition::class_id(const std::string& label) const {
  if (const auto it = std::find(known.begin(), known.end(), label); it != known.end()) {
    return static_cast<int>(it - known.begin());
  }
  if (const auto it = std::find(unknown.begin(), unknown.end(), label); it != unknown.end()) {
    return num_known() + static_cast<int>(it - unknown.begin());
  }
  return std::nullopt;
}

const std::string& ClassPartition::class_name(int id) const {
  if (id < 0 || id >= num_classes()) throw ConfigError("class id out of range");
  return id < num_known() ? known[static_cast<std::size_t>(id)]
                          : unknown[static_cast<std::size_t>(id - num_known())];
}

void ClassPartition::validate() const {
  if (known.empty()) throw ConfigError("class partition: no known classes (all classes hidden)");
  if (unknown.empty()) throw ConfigError("class partition: no unknown classes");
  std::set<std::string> seen;
  for (const auto& c : known) {
    if (!seen.insert(c).second) throw ConfigError("class partition: duplicate class '" + c + "'");
  }
  for (const auto& c : unknown) {
    if (!seen.insert(c).second) {
      throw ConfigError("class partition: class '" + c + "' is both known and unknown");
    }
  }
}

// ---------------------------------------------------------------------------

TabularDataset load_csv(const std::filesystem::path& path, const ColumnKinds& kinds,
                        const std::string& label_column, const std::optional<ClassPartition>& partition) {
  const RawTable table = read_csv(path, label_column, kinds);
  TabularDataset ds;
  if (partition) {
    partition->validate();
    ds.partition = *partition;
  } else {
    std::set<std::string> uniq(table.labels.begin(), table.labels.end());
    ds.partition.known.assign(uniq.begin(), uniq.end());
    sort_labels(ds.partition.known);
  }

  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const auto id = ds.partition.class_id(table.labels[r]);
    if (!id) continue;
    rows.push_back(r);
    ds.y.push_back(*id);
    ds.is_labeled.push_back(*id < ds.partition.num_known());
    ds.split.push_back(SplitRole::train);
  }
  ds.schema = fit_schema(table, rows, kinds);
  ds.X = encode_rows(ds.schema, table, rows);
  return ds;
}

// ---------------------------------------------------------------------------

TrainTestIndices stratified_split(const std::vector<int>& labels, double train_fraction,
                                  std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  struct Quota {
    int cls;
    std::size_t take;
    double remainder;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [cls, rows] : by_class) {
    if (rows.size() < 2) {
      throw DataError("class " + std::to_string(cls) + " has fewer than 2 rows; cannot stratify");
    }
    const double exact = train_fraction * static_cast<double>(rows.size());
    const auto take = static_cast<std::size_t>(std::floor(exact));
    quotas.push_back({cls, take, exact - static_cast<double>(take)});
    assigned += take;
  }
  const auto target = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(labels.size())));
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
  for (std::size_t i = 0; assigned < target && i < order.size(); ++i, ++assigned) {
    ++quotas[order[i]].take;
  }

  TrainTestIndices out;
  Rng rng = Rng::derive(seed, 0x5711);
  for (auto& q : quotas) {
    auto rows = by_class[q.cls];
    q.take = std::clamp<std::size_t>(q.take, 1, rows.size() - 1);
    rng.shuffle(std::span<std::size_t>(rows));
    out.train.insert(out.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(q.take));
    out.test.insert(out.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(q.take), rows.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

namespace {

/// Distributes encoded rows into the labeled/unlabeled parts of one side.
void distribute(const Matrix& X, const std::vector<int>& global_y, const std::vector<std::size_t>& ids,
                int num_known, LabeledSet& labeled, UnlabeledSet& unlabeled, std::vector<int>& hidden) {
  std::vector<Eigen::Index> lab_rows;
  std::vector<Eigen::Index> unl_rows;
  for (std::size_t i = 0; i < global_y.size(); ++i) {
    if (global_y[i] < num_known) {
      lab_rows.push_back(static_cast<Eigen::Index>(i));
      labeled.y.push_back(global_y[i]);
      labeled.row_ids.push_back(ids[i]);
    } else {
      unl_rows.push_back(static_cast<Eigen::Index>(i));
      hidden.push_back(global_y[i] - num_known);
      unlabeled.row_ids.push_back(ids[i]);
    }
  }
  labeled.X = X(lab_rows, Eigen::all);
  unlabeled.X = X(unl_rows, Eigen::all);
}

}  // namespace

NcdSplit ncd_split(const TabularDataset& ds, const std::vector<int>& unknown_classes,
                   double train_fraction, std::uint64_t seed) {
  std::set<int> all(ds.y.begin(), ds.y.end());
  std::set<int> hidden(unknown_classes.begin(), unknown_classes.end());
  if (hidden.empty()) throw ConfigError("ncd_split: no unknown classes given");
  for (const int c : hidden) {
    if (!all.contains(c)) throw ConfigError("ncd_split: unknown class " + std::to_string(c) + " not in data");
  }
  if (hidden.size() >= all.size()) throw ConfigError("ncd_split: every class would be hidden");

  // Remap: known classes first, then hidden, each in ascending id order.
  std::map<int, int> remap;
  NcdSplit out;
  auto name_of = [&](int c) {
    return c < ds.partition.num_classes() ? ds.partition.class_name(c) : std::to_string(c);
  };
  for (const int c : all) {
    if (!hidden.contains(c)) {
      remap[c] = static_cast<int>(out.partition.known.size());
      out.partition.known.push_back(name_of(c));
    }
  }
  for (const int c : hidden) {
    remap[c] = static_cast<int>(out.partition.known.size() + out.partition.unknown.size());
    out.partition.unknown.push_back(name_of(c));
  }
  std::vector<int> y(ds.y.size());
  std::transform(ds.y.begin(), ds.y.end(), y.begin(), [&](int c) { return remap.at(c); });

  const auto parts = stratified_split(y, train_fraction, seed);
  auto gather = [&](const std::vector<std::size_t>& rows, LabeledSet& l, UnlabeledSet& u, std::vector<int>& h) {
    std::vector<Eigen::Index> idx(rows.begin(), rows.end());
    std::vector<int> gy;
    for (const auto r : rows) gy.push_back(y[r]);
    distribute(ds.X(idx, Eigen::all), gy, rows, out.partition.num_known(), l, u, h);
  };
  gather(parts.train, out.labeled_train, out.unlabeled_train, out.hidden.train);
  gather(parts.test, out.labeled_test, out.unlabeled_test, out.hidden.test);
  out.schema = ds.schema;
  out.seed = seed;
  return out;
}

// ---------------------------------------------------------------------------

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  DatasetManifest m;
  try {
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() ? path : base_dir / path;
    };
    m.name = j.value("name", "dataset");
    m.train_csv = resolve(j.at("train_csv").get<std::string>());
    if (j.contains("test_csv") && !j.at("test_csv").is_null()) {
      m.test_csv = resolve(j.at("test_csv").get<std::string>());
    }
    m.label_column = j.at("label_column").get<std::string>();
    m.kinds.default_kind = parse_kind(j.value("default_kind", std::string("continuous")));
    if (j.contains("columns")) {
      for (const auto& [name, kind] : j.at("columns").items()) {
        m.kinds.overrides[name] = parse_kind(kind.get<std::string>());
      }
    }
    if (j.contains("categorical_columns")) {
      for (const auto& name : j.at("categorical_columns")) {
        m.kinds.overrides[name.get<std::string>()] = ColumnKind::categorical;
      }
    }
    m.kinds.dropped = j.value("drop_columns", std::vector<std::string>{});
    auto as_strings = [](const nlohmann::json& arr) {
      std::vector<std::string> out;
      for (const auto& v : arr) out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      return out;
    };
    m.partition.known = as_strings(j.at("known_classes"));
    m.partition.unknown = as_strings(j.at("unknown_classes"));
    m.train_fraction = j.value("train_fraction", 0.7);
    m.seed = j.value("seed", std::uint64_t{0});
    const auto delim = j.value("delimiter", std::string(","));
    if (delim.size() != 1) throw ConfigError("manifest: delimiter must be one character");
    m.delimiter = delim[0];
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  m.partition.validate();
  return m;
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

NcdSplit prepare_split(const DatasetManifest& manifest) {
  manifest.partition.validate();
  NcdSplit out;
  out.name = manifest.name;
  out.seed = manifest.seed;
  out.partition = manifest.partition;

  struct Side {
    std::vector<std::size_t> rows;
    std::vector<int> y;
  };
  auto labelled_rows = [&](const RawTable& t) {
    Side s;
    for (std::size_t r = 0; r < t.rows(); ++r) {
      if (const auto id = manifest.partition.class_id(t.labels[r])) {
        s.rows.push_back(r);
        s.y.push_back(*id);
      } else {
        ++out.excluded_rows;
      }
    }
    return s;
  };

  const RawTable train_table = read_csv(manifest.train_csv, manifest.label_column, manifest.kinds, manifest.delimiter);
  out.dropped_missing += train_table.dropped_missing;
  const Side all_train = labelled_rows(train_table);

  Side train;
  Side test;
  std::optional<RawTable> test_table;
  if (manifest.test_csv) {
    test_table = read_csv(*manifest.test_csv, manifest.label_column, manifest.kinds, manifest.delimiter);
    if (test_table->feature_names != train_table.feature_names) {
      throw DataError("train and test CSV columns differ");
    }
    out.dropped_missing += test_table->dropped_missing;
    train = all_train;
    test = labelled_rows(*test_table);
  } else {
    const auto parts = stratified_split(all_train.y, manifest.train_fraction, manifest.seed);
    for (const auto i : parts.train) {
      train.rows.push_back(all_train.rows[i]);
      train.y.push_back(all_train.y[i]);
    }
    for (const auto i : parts.test) {
      test.rows.push_back(all_train.rows[i]);
      test.y.push_back(all_train.y[i]);
    }
  }
  for (int c = 0; c < manifest.partition.num_classes(); ++c) {
    if (std::find(train.y.begin(), train.y.end(), c) == train.y.end()) {
      throw DataError("class '" + manifest.partition.class_name(c) + "' has no training rows");
    }
  }

  out.schema = fit_schema(train_table, train.rows, manifest.kinds);
  EncodeStats stats;
  const Matrix X_train = encode_rows(out.schema, train_table, train.rows, &stats);
  const Matrix X_test = encode_rows(out.schema, test_table ? *test_table : train_table, test.rows, &stats);
  out.unseen_categories = stats.unseen_categories;

  // Row ids: position in the training CSV, test CSV rows offset past it.
  std::vector<std::size_t> test_ids = test.rows;
  if (test_table) {
    for (auto& id : test_ids) id += train_table.rows();
  }
  const int nk = manifest.partition.num_known();
  distribute(X_train, train.y, train.rows, nk, out.labeled_train, out.unlabeled_train, out.hidden.train);
  distribute(X_test, test.y, test_ids, nk, out.labeled_test, out.unlabeled_test, out.hidden.test);
  return out;
}

nlohmann::json split_summary(const NcdSplit& split) {
  using nlohmann::json;
  const auto& p = split.partition;
  auto per_class = [&](const std::vector<int>& ids, int base) {
    json counts = json::object();
    std::map<int, std::size_t> tally;
    for (const int id : ids) ++tally[id + base];
    for (const auto& [id, n] : tally) counts[p.class_name(id)] = n;
    return counts;
  };
  json j;
  j["dataset"] = split.name;
  j["seed"] = split.seed;
  j["known_classes"] = p.known;
  j["unknown_classes"] = p.unknown;
  j["encoded_dim"] = split.schema.encoded_dim;
  j["input_columns"] = split.schema.columns.size();
  j["excluded_rows"] = split.excluded_rows;
  j["dropped_missing_rows"] = split.dropped_missing;
  j["unseen_categories"] = split.unseen_categories;
  j["parts"]["labeled_train"] = {{"total", split.labeled_train.rows()},
                                 {"per_class", per_class(split.labeled_train.y, 0)}};
  j["parts"]["unlabeled_train"] = {{"total", split.unlabeled_train.rows()},
                                   {"per_class", per_class(split.hidden.train, p.num_known())}};
  j["parts"]["labeled_test"] = {{"total", split.labeled_test.rows()},
                                {"per_class", per_class(split.labeled_test.y, 0)}};
  j["parts"]["unlabeled_test"] = {{"total", split.unlabeled_test.rows()},
                                  {"per_class", per_class(split.hidden.test, p.num_known())}};
  return j;
}

// ---------------------------------------------------------------------------

TrainingPool::TrainingPool(const LabeledSet& labeled, const UnlabeledSet& unlabeled, int num_known)
    : labeled_(&labeled), unlabeled_(&unlabeled), num_known_(num_known) {
  if (labeled.rows() + unlabeled.rows() == 0) throw DataError("training pool is empty");
  if (labeled.rows() > 0 && unlabeled.rows() > 0 && labeled.X.cols() != unlabeled.X.cols()) {
    throw ConfigError("labeled and unlabeled feature widths differ");
  }
}

int TrainingPool::dim() const {
  return static_cast<int>(labeled_->rows() > 0 ? labeled_->X.cols() : unlabeled_->X.cols());
}

Batch TrainingPool::make_batch(const std::vector<std::size_t>& indices) const {
  Batch b;
  b.indices = indices;
  b.X.resize(static_cast<Eigen::Index>(indices.size()), dim());
  b.targets.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto idx = indices[i];
    b.X.row(static_cast<Eigen::Index>(i)) = row(idx);
    if (is_unlabeled(idx)) {
      b.targets.push_back(num_known_);
      b.unlabeled_positions.push_back(i);
    } else {
      b.targets.push_back(labeled_->y[idx]);
    }
  }
  return b;
}

Matrix TrainingPool::all_rows() const {
  Matrix X(static_cast<Eigen::Index>(size()), dim());
  if (labeled_->rows() > 0) X.topRows(labeled_->X.rows()) = labeled_->X;
  if (unlabeled_->rows() > 0) X.bottomRows(unlabeled_->X.rows()) = unlabeled_->X;
  return X;
}

BatchSampler::BatchSampler(std::size_t rows, std::size_t batch_size, std::uint64_t seed)
    : rows_(rows), batch_size_(batch_size), rng_(Rng::derive(seed, 0xba7c)) {
  if (rows == 0) throw DataError("BatchSampler: dataset is empty");
  if (batch_size == 0) throw ConfigError("BatchSampler: batch_size must be positive");
  order_.resize(rows_);
  cursor_ = rows_;  // forces a shuffle on first use
}

void BatchSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  rng_.shuffle(std::span<std::size_t>(order_));
  cursor_ = 0;
  ++epoch_;
}

std::vector<std::size_t> BatchSampler::next_batch() {
  if (cursor_ >= rows_) reshuffle();
  const auto end = std::min(rows_, cursor_ + batch_size_);
  std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return batch;
}

std::vector<std::vector<std::size_t>> BatchSampler::next_epoch() {
  if (cursor_ != 0 && cursor_ < rows_) cursor_ = rows_;  // drop a partially consumed epoch
  std::vector<std::vector<std::size_t>> batches;
  do {
    batches.push_back(next_batch());
  } while (cursor_ < rows_);
  return batches;
}

}  // namespace tabncd
