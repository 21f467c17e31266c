#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "tabbench/core/dataset.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/task.hpp"

namespace tabbench {

/// Flips the named columns to role = ignored.
inline DatasetTable drop_features(const DatasetTable& table, const std::vector<std::string>& names) {
  std::vector<std::string> unknown;
  for (const auto& name : names) {
    if (!table.find(name)) unknown.push_back(name);
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
    throw ContractError("drop_features: unknown column(s): " + list);
  }
  DatasetTable out = table;
  for (const auto& name : names) {
    const auto i = *out.find(name);
    if (out.column(i).spec.role == FeatureRole::target) {
      throw ContractError("drop_features: cannot drop the target '" + name + "'");
    }
    out = out.with_role(i, FeatureRole::ignored);
  }
  return out;
}

/// Appends `name` = a - b in seconds; missing when either side is missing.
inline DatasetTable datetime_difference(const DatasetTable& table, const std::string& a, const std::string& b,
                                        std::string name = {}) {
  const Column& ca = table.column(a);
  const Column& cb = table.column(b);
  for (const Column* c : {&ca, &cb}) {
    if (c->spec.kind != FeatureKind::datetime) {
      throw ContractError("datetime_difference: column '" + c->spec.name + "' has kind " +
                          std::string(to_string(c->spec.kind)) + ", expected datetime");
    }
  }
  if (name.empty()) name = a + "_minus_" + b;
  Column out{FeatureSpec{name, FeatureKind::numeric, FeatureRole::input, 0, CategoricalMissing::own_category}, {}};
  out.cells.resize(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    if (!ca.missing(r) && !cb.missing(r)) out.cells[r] = ca.number(r) - cb.number(r);
  }
  return table.with_appended(std::move(out));
}

inline constexpr std::size_t kRatioColumnCap = 20;
inline constexpr double kRatioDenominatorGuard = 1e-12;

/// Appends x_i / x_j for every ordered pair of the given numeric columns
/// (default: all numeric inputs, first `max_columns`).
inline DatasetTable pairwise_ratios(const DatasetTable& table, std::vector<std::string> columns = {},
                                    std::size_t max_columns = kRatioColumnCap) {
  if (columns.empty()) {
    for (auto i : table.input_indices()) {
      if (table.column(i).spec.kind == FeatureKind::numeric) columns.push_back(table.column(i).spec.name);
    }
    if (columns.size() > max_columns) columns.resize(max_columns);
  } else if (columns.size() > max_columns) {
    throw ContractError("pairwise_ratios: " + std::to_string(columns.size()) + " columns exceed the cap of " +
                        std::to_string(max_columns));
  }
  if (columns.size() < 2) throw ContractError("pairwise_ratios: needs at least 2 numeric columns");
  for (const auto& c : columns) {
    if (table.column(c).spec.kind != FeatureKind::numeric) {
      throw ContractError("pairwise_ratios: column '" + c + "' is not numeric");
    }
  }
  auto cols = table.columns();
  for (const auto& ni : columns) {
    for (const auto& nj : columns) {
      if (ni == nj) continue;
      const Column& xi = table.column(ni);
      const Column& xj = table.column(nj);
      Column out{FeatureSpec{ni + "_over_" + nj, FeatureKind::numeric, FeatureRole::input, 0,
                             CategoricalMissing::own_category},
                 {}};
      out.cells.resize(table.rows());
      for (std::size_t r = 0; r < table.rows(); ++r) {
        if (xi.missing(r) || xj.missing(r)) continue;
        const double den = xj.number(r);
        if (std::fabs(den) < kRatioDenominatorGuard) continue;
        out.cells[r] = xi.number(r) / den;
      }
      cols.push_back(std::move(out));
    }
  }
  return DatasetTable(std::move(cols), table.task_kind());
}

/// Reinterprets ordinal or numeric codes as unordered categories (text
/// keys); missing values then take the training mode.
inline DatasetTable ordinal_as_categorical(const DatasetTable& table, const std::vector<std::string>& names) {
  DatasetTable out = table;
  for (const auto& name : names) {
    const auto i = out.find(name);
    if (!i) throw ContractError("ordinal_as_categorical: unknown column '" + name + "'");
    const Column& src = out.column(*i);
    if (src.spec.kind == FeatureKind::categorical) continue;
    if (src.spec.kind != FeatureKind::ordinal && src.spec.kind != FeatureKind::numeric) {
      throw ContractError("ordinal_as_categorical: column '" + name + "' has kind " +
                          std::string(to_string(src.spec.kind)));
    }
    Column c{src.spec, {}};
    c.spec.kind = FeatureKind::categorical;
    c.spec.missing_policy = CategoricalMissing::mode;
    c.cells.resize(src.cells.size());
    for (std::size_t r = 0; r < src.cells.size(); ++r) {
      if (!src.missing(r)) c.cells[r] = src.key(r);
    }
    c.spec.cardinality = c.distinct_count();
    out = out.with_column(*i, std::move(c));
  }
  return out;
}

/// Applies the row-wise transforms of a manifest preprocessing list.
/// Fitted transforms (select_features) are skipped here and handled per
/// split by the pipeline.
inline DatasetTable apply_table_transforms(const DatasetTable& table, const std::vector<TransformSpec>& specs) {
  DatasetTable out = table;
  for (const auto& t : specs) {
    const auto& p = t.params;
    if (t.op == "drop_features") {
      out = drop_features(out, detail::string_list(p, "names"));
    } else if (t.op == "datetime_difference") {
      out = datetime_difference(out, p.at("a").get<std::string>(), p.at("b").get<std::string>(),
                                p.value("name", std::string()));
    } else if (t.op == "pairwise_ratios") {
      out = pairwise_ratios(out, detail::string_list(p, "columns"), p.value("max_columns", kRatioColumnCap));
    } else if (t.op == "ordinal_as_categorical") {
      out = ordinal_as_categorical(out, detail::string_list(p, "columns"));
    } else if (t.op == "select_features") {
      continue;
    } else {
      throw ContractError("unknown preprocessing op '" + t.op + "'");
    }
  }
  return out;
}

/// Feature count requested by a select_features step, if any.
inline std::optional<std::size_t> selected_feature_count(const std::vector<TransformSpec>& specs) {
  std::optional<std::size_t> k;
  for (const auto& t : specs) {
    if (t.op == "select_features") k = t.params.value("k", std::size_t{200});
  }
  return k;
}

}  // namespace tabbench
