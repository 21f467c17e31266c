#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "tabbench/core/csv.hpp"
#include "tabbench/core/datetime.hpp"
#include "tabbench/core/error.hpp"

namespace tabbench {

enum class FeatureKind { numeric, categorical, ordinal, datetime, identifier };
enum class FeatureRole { input, target, non_predictive, ignored };
enum class TaskKind { binary, multiclass, regression };

/// How a categorical encoder fills missing cells.
enum class CategoricalMissing { own_category, mode };

inline std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::numeric: return "numeric";
    case FeatureKind::categorical: return "categorical";
    case FeatureKind::ordinal: return "ordinal";
    case FeatureKind::datetime: return "datetime";
    case FeatureKind::identifier: return "identifier";
  }
  return "?";
}

inline std::string_view to_string(FeatureRole r) {
  switch (r) {
    case FeatureRole::input: return "input";
    case FeatureRole::target: return "target";
    case FeatureRole::non_predictive: return "non_predictive";
    case FeatureRole::ignored: return "ignored";
  }
  return "?";
}

inline std::string_view to_string(TaskKind t) {
  switch (t) {
    case TaskKind::binary: return "binary";
    case TaskKind::multiclass: return "multiclass";
    case TaskKind::regression: return "regression";
  }
  return "?";
}

inline FeatureKind feature_kind_from_string(std::string_view s) {
  for (auto k : {FeatureKind::numeric, FeatureKind::categorical, FeatureKind::ordinal,
                 FeatureKind::datetime, FeatureKind::identifier}) {
    if (to_string(k) == s) return k;
  }
  throw SchemaError("unknown feature kind '" + std::string(s) + "'");
}

inline FeatureRole feature_role_from_string(std::string_view s) {
  for (auto r : {FeatureRole::input, FeatureRole::target, FeatureRole::non_predictive,
                 FeatureRole::ignored}) {
    if (to_string(r) == s) return r;
  }
  throw SchemaError("unknown feature role '" + std::string(s) + "'");
}

inline TaskKind task_kind_from_string(std::string_view s) {
  for (auto t : {TaskKind::binary, TaskKind::multiclass, TaskKind::regression}) {
    if (to_string(t) == s) return t;
  }
  throw SchemaError("unknown task type '" + std::string(s) + "'");
}

inline bool is_classification(TaskKind t) { return t != TaskKind::regression; }

/// Kinds whose cells are stored as numbers.
inline bool is_numeric_storage(FeatureKind k) {
  return k == FeatureKind::numeric || k == FeatureKind::ordinal || k == FeatureKind::datetime;
}

/// Shortest round-trip decimal representation.
inline std::string format_number(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::numeric;
  FeatureRole role = FeatureRole::input;
  std::size_t cardinality = 0;  // categorical/ordinal only
  CategoricalMissing missing_policy = CategoricalMissing::own_category;

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

/// A cell is missing, a number (numeric/ordinal/datetime-as-epoch-seconds)
/// or text (categorical/identifier).
using Cell = std::variant<std::monostate, double, std::string>;

struct Column {
  FeatureSpec spec;
  std::vector<Cell> cells;

  bool missing(std::size_t row) const { return std::holds_alternative<std::monostate>(cells[row]); }
  double number(std::size_t row) const { return std::get<double>(cells[row]); }
  const std::string& text(std::size_t row) const { return std::get<std::string>(cells[row]); }

  /// Category key for a non-missing cell regardless of storage.
  std::string key(std::size_t row) const {
    if (const auto* d = std::get_if<double>(&cells[row])) return format_number(*d);
    return std::get<std::string>(cells[row]);
  }

  std::size_t missing_count() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const Cell& c) {
      return std::holds_alternative<std::monostate>(c);
    }));
  }

  std::size_t distinct_count() const {
    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < cells.size(); ++r) {
      if (!missing(r)) seen.insert(key(r));
    }
    return seen.size();
  }

  friend bool operator==(const Column&, const Column&) = default;
};

/// Immutable-by-convention table: transforms return new tables.
class DatasetTable {
 public:
  DatasetTable() = default;
  DatasetTable(std::vector<Column> columns, TaskKind task_kind)
      : columns_(std::move(columns)), task_kind_(task_kind) {
    check_invariants();
  }

  std::size_t rows() const noexcept { return columns_.empty() ? 0 : columns_.front().cells.size(); }
  std::size_t cols() const noexcept { return columns_.size(); }
  TaskKind task_kind() const noexcept { return task_kind_; }
  const std::vector<Column>& columns() const noexcept { return columns_; }
  const Column& column(std::size_t i) const { return columns_.at(i); }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (columns_[i].spec.name == name) return i;
    }
    return std::nullopt;
  }

  const Column& column(std::string_view name) const {
    auto i = find(name);
    if (!i) throw SchemaError("no column named '" + std::string(name) + "'");
    return columns_[*i];
  }

  std::size_t target_index() const {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (columns_[i].spec.role == FeatureRole::target) return i;
    }
    throw SchemaError("table has no target column");
  }
  const Column& target() const { return columns_[target_index()]; }

  /// Indices of role = input columns, in table order.
  std::vector<std::size_t> input_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < columns_.size(); ++i) {
      if (columns_[i].spec.role == FeatureRole::input) out.push_back(i);
    }
    return out;
  }

  std::vector<std::string> input_names() const {
    std::vector<std::string> out;
    for (auto i : input_indices()) out.push_back(columns_[i].spec.name);
    return out;
  }

  /// Sorted distinct target labels (numeric order when every label is a
  /// number). Class code = position in this list.
  std::vector<std::string> class_labels() const {
    const Column& t = target();
    std::vector<std::string> labels;
    std::set<std::string> seen;
    bool all_numeric = true;
    for (std::size_t r = 0; r < t.cells.size(); ++r) {
      if (t.missing(r)) continue;
      auto k = t.key(r);
      if (seen.insert(k).second) {
        if (!parse_number(k)) all_numeric = false;
        labels.push_back(std::move(k));
      }
    }
    if (all_numeric) {
      std::sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
        return *parse_number(a) < *parse_number(b);
      });
    } else {
      std::sort(labels.begin(), labels.end());
    }
    return labels;
  }

  std::size_t n_classes() const { return is_classification(task_kind_) ? class_labels().size() : 1; }

  /// Target as doubles: class codes for classification, values for
  /// regression. Missing regression targets become NaN.
  std::vector<double> target_values() const {
    const Column& t = target();
    std::vector<double> y(rows());
    if (is_classification(task_kind_)) {
      const auto labels = class_labels();
      std::unordered_map<std::string, double> code;
      for (std::size_t i = 0; i < labels.size(); ++i) code[labels[i]] = static_cast<double>(i);
      for (std::size_t r = 0; r < y.size(); ++r) y[r] = code.at(t.key(r));
    } else {
      for (std::size_t r = 0; r < y.size(); ++r) {
        y[r] = t.missing(r) ? std::nan("") : t.number(r);
      }
    }
    return y;
  }

  /// Copy with column `index` replaced.
  DatasetTable with_column(std::size_t index, Column column) const {
    auto cols = columns_;
    cols.at(index) = std::move(column);
    return DatasetTable(std::move(cols), task_kind_);
  }

  DatasetTable with_appended(Column column) const {
    auto cols = columns_;
    cols.push_back(std::move(column));
    return DatasetTable(std::move(cols), task_kind_);
  }

  DatasetTable with_role(std::size_t index, FeatureRole role) const {
    auto cols = columns_;
    cols.at(index).spec.role = role;
    return DatasetTable(std::move(cols), task_kind_);
  }

  DatasetTable select_rows(std::span<const std::size_t> rows) const {
    auto cols = columns_;
    for (auto& c : cols) {
      std::vector<Cell> cells;
      cells.reserve(rows.size());
      for (auto r : rows) cells.push_back(c.cells.at(r));
      c.cells = std::move(cells);
    }
    DatasetTable out;
    out.columns_ = std::move(cols);
    out.task_kind_ = task_kind_;
    return out;
  }

  friend bool operator==(const DatasetTable&, const DatasetTable&) = default;

 private:
  void check_invariants() const {
    std::size_t targets = 0;
    std::set<std::string> names;
    for (const auto& c : columns_) {
      if (c.cells.size() != rows()) {
        throw DataError("column '" + c.spec.name + "' has " + std::to_string(c.cells.size()) +
                        " cells, expected " + std::to_string(rows()));
      }
      if (!names.insert(c.spec.name).second) {
        throw SchemaError("duplicate column name '" + c.spec.name + "'");
      }
      if (c.spec.role == FeatureRole::target) ++targets;
      const bool numeric = is_numeric_storage(c.spec.kind);
      for (std::size_t r = 0; r < c.cells.size(); ++r) {
        if (c.missing(r)) continue;
        if (numeric != std::holds_alternative<double>(c.cells[r])) {
          throw DataError("column '" + c.spec.name + "' row " + std::to_string(r) +
                          ": cell storage does not match kind " +
                          std::string(to_string(c.spec.kind)));
        }
      }
    }
    if (!columns_.empty() && targets != 1) {
      throw SchemaError("exactly one target column required, found " + std::to_string(targets));
    }
  }

  std::vector<Column> columns_;
  TaskKind task_kind_ = TaskKind::regression;
};

/// Kind inference result; `identifier_flag` marks numeric columns whose
/// values look like row ids.
struct InferredFeature {
  FeatureSpec spec;
  bool identifier_flag = false;
};

inline bool is_missing_marker(std::string_view s, std::span<const std::string> markers) {
  return std::find(markers.begin(), markers.end(), s) != markers.end();
}

/// Best-effort kind heuristic over raw text cells. Deterministic.
inline InferredFeature infer_feature_kind(const std::string& name,
                                          std::span<const std::string> values,
                                          std::span<const std::string> missing_markers) {
  InferredFeature out;
  out.spec.name = name;
  std::vector<std::string_view> present;
  for (const auto& v : values) {
    if (!is_missing_marker(v, missing_markers)) present.push_back(v);
  }
  std::unordered_set<std::string_view> distinct(present.begin(), present.end());
  const bool all_distinct = !present.empty() && distinct.size() == values.size();

  const bool all_numeric = !present.empty() && std::all_of(present.begin(), present.end(), [](auto s) {
                             return parse_number(s).has_value();
                           });
  if (all_numeric) {
    const bool integer_like = std::all_of(present.begin(), present.end(), [](auto s) {
      const double v = *parse_number(s);
      return v == std::floor(v);
    });
    out.spec.kind = FeatureKind::numeric;
    out.identifier_flag = all_distinct && integer_like;
    return out;
  }
  const bool all_dates = !present.empty() && std::all_of(present.begin(), present.end(), [](auto s) {
                           return datetime::parse_iso8601(s).has_value();
                         });
  if (all_dates) {
    out.spec.kind = FeatureKind::datetime;
    return out;
  }
  if (all_distinct && values.size() > 1) {
    out.spec.kind = FeatureKind::identifier;
    out.spec.role = FeatureRole::non_predictive;
    out.identifier_flag = true;
    return out;
  }
  out.spec.kind = FeatureKind::categorical;
  out.spec.cardinality = distinct.size();
  return out;
}

inline const std::vector<std::string>& default_missing_markers() {
  static const std::vector<std::string> markers{"", "?", "NA"};
  return markers;
}

inline std::vector<InferredFeature> infer_feature_kinds(
    const csv::Document& doc,
    std::span<const std::string> missing_markers = default_missing_markers()) {
  std::vector<InferredFeature> out;
  std::vector<std::string> values(doc.rows.size());
  for (std::size_t c = 0; c < doc.header.size(); ++c) {
    for (std::size_t r = 0; r < doc.rows.size(); ++r) values[r] = doc.rows[r][c];
    out.push_back(infer_feature_kind(doc.header[c], values, missing_markers));
  }
  return out;
}

struct ColumnDecl {
  std::string name;
  FeatureKind kind = FeatureKind::numeric;
  FeatureRole role = FeatureRole::input;

  friend bool operator==(const ColumnDecl&, const ColumnDecl&) = default;
};

/// The parts of a task manifest that govern how a CSV becomes a table.
struct TableSchema {
  std::string target;
  std::optional<TaskKind> task_kind;  // inferred from the target when absent
  std::optional<bool> classification;  // hint used when task_kind is absent
  std::vector<ColumnDecl> columns;
  std::vector<std::string> missing_markers = default_missing_markers();
  bool merge_rare_classes = false;

  friend bool operator==(const TableSchema&, const TableSchema&) = default;
};

inline constexpr std::string_view kMissingCategory = "⟂missing";
inline constexpr std::string_view kMergedRareClass = "⟂rare";
inline constexpr std::size_t kRareClassThreshold = 3;

namespace detail {

inline Cell parse_cell(const std::string& raw, FeatureKind kind, std::size_t row,
                       const std::string& column, std::span<const std::string> markers) {
  if (is_missing_marker(raw, markers)) return std::monostate{};
  switch (kind) {
    case FeatureKind::numeric:
    case FeatureKind::ordinal: {
      auto v = parse_number(raw);
      if (!v) throw TypedCellError(row, column, "cannot parse '" + raw + "' as a number");
      return *v;
    }
    case FeatureKind::datetime: {
      auto v = datetime::parse_iso8601(raw);
      if (!v) throw TypedCellError(row, column, "cannot parse '" + raw + "' as an ISO-8601 date");
      return *v;
    }
    case FeatureKind::categorical:
    case FeatureKind::identifier:
      return raw;
  }
  return std::monostate{};
}

inline void update_cardinality(Column& c) {
  if (c.spec.kind == FeatureKind::categorical || c.spec.kind == FeatureKind::ordinal) {
    c.spec.cardinality = c.distinct_count();
  } else {
    c.spec.cardinality = 0;
  }
}

}  // namespace detail

/// Builds a table from a parsed CSV document. Declared columns come first
/// in declaration order, undeclared ones follow in header order with
/// inferred kinds.
inline DatasetTable table_from_document(const csv::Document& doc, const TableSchema& schema) {
  std::unordered_map<std::string, std::size_t> header_pos;
  for (std::size_t i = 0; i < doc.header.size(); ++i) {
    if (!header_pos.emplace(doc.header[i], i).second) {
      throw SchemaError("duplicate header column '" + doc.header[i] + "'");
    }
  }
  for (const auto& d : schema.columns) {
    if (!header_pos.contains(d.name)) {
      throw SchemaError("manifest column '" + d.name + "' not present in the CSV header");
    }
  }
  if (!header_pos.contains(schema.target)) {
    throw SchemaError("target column '" + schema.target + "' not present in the CSV header");
  }

  std::vector<std::pair<std::size_t, FeatureSpec>> layout;
  std::set<std::string> declared;
  for (const auto& d : schema.columns) {
    if (!declared.insert(d.name).second) throw SchemaError("column '" + d.name + "' declared twice");
    FeatureSpec spec{d.name, d.kind, d.role};
    layout.emplace_back(header_pos[d.name], spec);
  }
  const auto inferred = infer_feature_kinds(doc, schema.missing_markers);
  for (std::size_t i = 0; i < doc.header.size(); ++i) {
    if (declared.contains(doc.header[i])) continue;
    layout.emplace_back(i, inferred[i].spec);
  }

  std::vector<Column> columns;
  for (auto& [pos, spec] : layout) {
    if (spec.name == schema.target) {
      spec.role = FeatureRole::target;
    } else if (spec.role == FeatureRole::target) {
      throw SchemaError("column '" + spec.name + "' has role target but the target is '" +
                        schema.target + "'");
    }
    Column col{spec, {}};
    col.cells.reserve(doc.rows.size());
    for (std::size_t r = 0; r < doc.rows.size(); ++r) {
      col.cells.push_back(
          detail::parse_cell(doc.rows[r][pos], spec.kind, r, spec.name, schema.missing_markers));
    }
    detail::update_cardinality(col);
    columns.push_back(std::move(col));
  }

  // Task kind: declared, or numeric non-integer targets are regression and
  // everything else classification.
  const auto target_it = std::find_if(columns.begin(), columns.end(), [](const Column& c) {
    return c.spec.role == FeatureRole::target;
  });
  Column& target = *target_it;
  TaskKind kind;
  if (schema.task_kind) {
    kind = *schema.task_kind;
  } else if (schema.classification) {
    kind = !*schema.classification           ? TaskKind::regression
           : target.distinct_count() > 2 ? TaskKind::multiclass
                                         : TaskKind::binary;
  } else if (is_numeric_storage(target.spec.kind) && target.spec.kind != FeatureKind::ordinal) {
    kind = TaskKind::regression;
  } else {
    kind = target.distinct_count() > 2 ? TaskKind::multiclass : TaskKind::binary;
  }

  if (is_classification(kind)) {
    if (target.missing_count() > 0) {
      throw DataError("classification target '" + target.spec.name + "' has " +
                      std::to_string(target.missing_count()) + " missing values");
    }
    if (schema.merge_rare_classes) {
      std::map<std::string, std::size_t> counts;
      for (std::size_t r = 0; r < target.cells.size(); ++r) ++counts[target.key(r)];
      for (std::size_t r = 0; r < target.cells.size(); ++r) {
        if (counts[target.key(r)] < kRareClassThreshold) {
          target.cells[r] = std::string(kMergedRareClass);
        }
      }
      if (is_numeric_storage(target.spec.kind)) {
        // Merged label is text; store the whole target as categorical.
        for (auto& cell : target.cells) {
          if (auto* d = std::get_if<double>(&cell)) cell = format_number(*d);
        }
        target.spec.kind = FeatureKind::categorical;
      }
      detail::update_cardinality(target);
    }
    const auto classes = target.distinct_count();
    if (classes < 2) {
      throw DataError("classification target '" + target.spec.name + "' has " +
                      std::to_string(classes) + " distinct class(es); at least 2 required");
    }
    if (kind == TaskKind::binary && classes != 2) {
      throw DataError("binary task but target has " + std::to_string(classes) + " classes");
    }
  } else if (!is_numeric_storage(target.spec.kind)) {
    throw SchemaError("regression target '" + target.spec.name + "' must be numeric");
  }
  return DatasetTable(std::move(columns), kind);
}

inline DatasetTable load_csv_dataset(const std::filesystem::path& path, const TableSchema& schema) {
  return table_from_document(csv::read(path), schema);
}

/// Inverse of table_from_document for the same schema: missing cells are
/// written as the first missing marker, datetimes as ISO-8601.
inline csv::Document to_document(const DatasetTable& table,
                                 std::span<const std::string> missing_markers =
                                     default_missing_markers()) {
  csv::Document doc;
  const std::string missing = missing_markers.empty() ? std::string() : missing_markers.front();
  for (const auto& c : table.columns()) doc.header.push_back(c.spec.name);
  doc.rows.assign(table.rows(), std::vector<std::string>(table.cols()));
  for (std::size_t c = 0; c < table.cols(); ++c) {
    const Column& col = table.column(c);
    for (std::size_t r = 0; r < table.rows(); ++r) {
      if (col.missing(r)) {
        doc.rows[r][c] = missing;
      } else if (col.spec.kind == FeatureKind::datetime) {
        doc.rows[r][c] = datetime::format_iso8601(col.number(r));
      } else {
        doc.rows[r][c] = col.key(r);
      }
    }
  }
  return doc;
}

inline void write_csv(const std::filesystem::path& path, const DatasetTable& table,
                      std::span<const std::string> missing_markers = default_missing_markers()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  csv::write(out, to_document(table, missing_markers));
}

/// Schema that reproduces `table`'s kinds and roles on reload.
inline TableSchema schema_of(const DatasetTable& table) {
  TableSchema s;
  s.target = table.target().spec.name;
  s.task_kind = table.task_kind();
  for (const auto& c : table.columns()) s.columns.push_back({c.spec.name, c.spec.kind, c.spec.role});
  return s;
}

struct Violation {
  std::string code;    // missing-target, rare-class, identifier-input, constant-feature
  std::string column;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool clean() const noexcept { return violations.empty(); }
  bool has(std::string_view code) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.code == code; });
  }
};

/// Data-quality checks that are reported rather than thrown.
inline ValidationReport validate_dataset(const DatasetTable& table) {
  ValidationReport report;
  const Column& target = table.target();
  if (const auto m = target.missing_count(); m > 0) {
    report.violations.push_back({"missing-target", target.spec.name,
                                 std::to_string(m) + " missing target value(s)"});
  }
  if (is_classification(table.task_kind())) {
    std::map<std::string, std::size_t> counts;
    for (std::size_t r = 0; r < table.rows(); ++r) {
      if (!target.missing(r)) ++counts[target.key(r)];
    }
    for (const auto& [label, count] : counts) {
      if (count < kRareClassThreshold) {
        report.violations.push_back({"rare-class", target.spec.name,
                                     "class '" + label + "' occurs " + std::to_string(count) +
                                         " time(s)"});
      }
    }
  }
  for (auto i : table.input_indices()) {
    const Column& c = table.column(i);
    if (c.spec.kind == FeatureKind::identifier) {
      report.violations.push_back({"identifier-input", c.spec.name, "identifier used as input"});
    }
    if (c.distinct_count() <= 1) {
      report.violations.push_back({"constant-feature", c.spec.name, "zero variance"});
    }
  }
  return report;
}

}  // namespace tabbench
