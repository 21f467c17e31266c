#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/core/rng.hpp"

namespace tabbench {

enum class SplitKind { grinsztajn_holdout, outer_kfold };

inline std::string_view to_string(SplitKind k) {
  return k == SplitKind::grinsztajn_holdout ? "grinsztajn_holdout" : "outer_kfold";
}

/// Estimation protocol: how rows become train/validation/test partitions.
struct SplitSpec {
  SplitKind kind = SplitKind::grinsztajn_holdout;
  std::uint64_t seed = 0;
  std::size_t repetitions = 1;
  std::size_t k = 0;  // outer_kfold only
  std::size_t train_cap = 10000;
  std::size_t eval_cap = 50000;
  bool stratified = false;

  void validate() const {
    if (train_cap == 0 || eval_cap == 0) throw SchemaError("estimation: caps must be positive");
    if (repetitions == 0) throw SchemaError("estimation: repetitions must be >= 1");
    if (kind == SplitKind::outer_kfold && k < 2) throw SchemaError("estimation: outer_kfold needs k >= 2");
  }

  /// Number of assignments produced per repetition.
  std::size_t folds_per_repetition() const { return kind == SplitKind::outer_kfold ? k : 1; }

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

struct SplitAssignment {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  /// Training plus validation rows; the pool used for inner cross-validation.
  std::vector<std::size_t> pool() const {
    std::vector<std::size_t> out = train;
    out.insert(out.end(), val.begin(), val.end());
    std::sort(out.begin(), out.end());
    return out;
  }

  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

struct InnerFold {
  std::vector<std::size_t> fit;
  std::vector<std::size_t> holdout;
  friend bool operator==(const InnerFold&, const InnerFold&) = default;
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  SplitMix64 rng(seed);
  shuffle(std::span<std::size_t>(perm), rng);
  return perm;
}

inline std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

/// Block b of n items split into k near-equal contiguous blocks.
inline std::pair<std::size_t, std::size_t> block_range(std::size_t n, std::size_t k, std::size_t b) {
  const std::size_t base = n / k, extra = n % k;
  const std::size_t begin = b * base + std::min(b, extra);
  return {begin, begin + base + (b < extra ? 1 : 0)};
}

}  // namespace detail

/// 70% train; of the remaining 30%, 30% validation and 70% test. Counts are
/// floored; caps keep the earliest positions of the shuffled order.
inline SplitAssignment grinsztajn_holdout(std::size_t n, std::uint64_t seed,
                                          std::size_t train_cap = 10000,
                                          std::size_t eval_cap = 50000) {
  const std::size_t n_train = (7 * n) / 10;
  const std::size_t rest = n - n_train;
  const std::size_t n_val = (3 * rest) / 10;
  const std::size_t n_test = rest - n_val;
  if (n < 10 || n_train == 0 || n_val == 0 || n_test == 0) {
    throw SplitError("grinsztajn_holdout: n = " + std::to_string(n) +
                     " is too small to give every partition at least one row");
  }
  const auto perm = detail::shuffled_indices(n, seed);
  auto first = perm.begin();
  SplitAssignment a;
  a.train.assign(first, first + static_cast<std::ptrdiff_t>(std::min(n_train, train_cap)));
  first += static_cast<std::ptrdiff_t>(n_train);
  a.val.assign(first, first + static_cast<std::ptrdiff_t>(std::min(n_val, eval_cap)));
  first += static_cast<std::ptrdiff_t>(n_val);
  a.test.assign(first, first + static_cast<std::ptrdiff_t>(std::min(n_test, eval_cap)));
  a.train = detail::sorted(std::move(a.train));
  a.val = detail::sorted(std::move(a.val));
  a.test = detail::sorted(std::move(a.test));
  return a;
}

/// k folds; fold i tests on block i and carves the first of every 8 remaining rows
/// (12.5%) out as validation. With `stratify_labels`, rows are grouped by
/// class before dealing so each fold holds floor/ceil of every class.
inline std::vector<SplitAssignment> outer_kfold(std::size_t n, std::size_t k, std::uint64_t seed,
                                                std::optional<std::span<const double>> stratify_labels =
                                                    std::nullopt) {
  if (k < 2) throw SplitError("outer_kfold: k must be >= 2, got " + std::to_string(k));
  if (n < k) {
    throw SplitError("outer_kfold: n = " + std::to_string(n) + " rows cannot form k = " +
                     std::to_string(k) + " folds");
  }
  auto perm = detail::shuffled_indices(n, seed);
  std::vector<std::size_t> fold_of(n);
  if (stratify_labels) {
    const auto labels = *stratify_labels;
    if (labels.size() != n) throw ContractError("outer_kfold: label count differs from n");
    std::map<double, std::vector<std::size_t>> groups;
    for (auto i : perm) groups[labels[i]].push_back(i);  // keeps shuffled order per class
    perm.clear();
    for (const auto& [label, rows] : groups) {
      if (rows.size() < k) {
        throw SplitError("outer_kfold: class " + std::to_string(static_cast<long long>(label)) +
                         " has " + std::to_string(rows.size()) + " rows, fewer than k = " +
                         std::to_string(k));
      }
      perm.insert(perm.end(), rows.begin(), rows.end());
    }
    for (std::size_t p = 0; p < n; ++p) fold_of[perm[p]] = p % k;
  } else {
    for (std::size_t b = 0; b < k; ++b) {
      auto [lo, hi] = detail::block_range(n, k, b);
      for (auto p = lo; p < hi; ++p) fold_of[perm[p]] = b;
    }
  }
  std::vector<SplitAssignment> folds(k);
  std::vector<std::size_t> position(k, 0);
  for (auto i : perm) {
    for (std::size_t f = 0; f < k; ++f) {
      if (fold_of[i] == f) {
        folds[f].test.push_back(i);
      } else {
        (position[f]++ % 8 == 0 ? folds[f].val : folds[f].train).push_back(i);
      }
    }
  }
  for (auto& f : folds) {
    if (f.train.empty() || f.val.empty() || f.test.empty()) {
      throw SplitError("outer_kfold: n = " + std::to_string(n) + ", k = " + std::to_string(k) +
                       " leaves an empty train/validation partition");
    }
    f.train = detail::sorted(std::move(f.train));
    f.val = detail::sorted(std::move(f.val));
    f.test = detail::sorted(std::move(f.test));
  }
  return folds;
}

/// Partitions a training pool into k folds for cross-validated selection.
inline std::vector<InnerFold> inner_kfold(std::span<const std::size_t> pool, std::size_t k,
                                          std::uint64_t seed) {
  if (k < 2) throw SplitError("inner_kfold: k must be >= 2, got " + std::to_string(k));
  if (pool.size() < k) {
    throw SplitError("inner_kfold: pool of " + std::to_string(pool.size()) +
                     " rows cannot form k = " + std::to_string(k) + " folds");
  }
  const auto perm = detail::shuffled_indices(pool.size(), seed);
  std::vector<InnerFold> folds(k);
  for (std::size_t b = 0; b < k; ++b) {
    auto [lo, hi] = detail::block_range(pool.size(), k, b);
    for (std::size_t p = 0; p < pool.size(); ++p) {
      ((p >= lo && p < hi) ? folds[b].holdout : folds[b].fit).push_back(pool[perm[p]]);
    }
    folds[b].fit = detail::sorted(std::move(folds[b].fit));
    folds[b].holdout = detail::sorted(std::move(folds[b].holdout));
  }
  return folds;
}

/// Repetition r uses seed spec.seed + r.
struct LabeledSplit {
  std::size_t repetition = 0;
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  SplitAssignment assignment;
};

inline std::vector<LabeledSplit> make_splits(const SplitSpec& spec, std::size_t n,
                                             std::optional<std::span<const double>> labels =
                                                 std::nullopt) {
  spec.validate();
  std::vector<LabeledSplit> out;
  for (std::size_t r = 0; r < spec.repetitions; ++r) {
    const std::uint64_t seed = spec.seed + r;
    if (spec.kind == SplitKind::grinsztajn_holdout) {
      out.push_back({r, 0, seed, grinsztajn_holdout(n, seed, spec.train_cap, spec.eval_cap)});
    } else {
      auto folds = outer_kfold(n, spec.k, seed,
                               spec.stratified ? labels : std::optional<std::span<const double>>{});
      for (std::size_t f = 0; f < folds.size(); ++f) {
        auto& a = folds[f];
        if (a.train.size() > spec.train_cap) a.train.resize(spec.train_cap);
        if (a.val.size() > spec.eval_cap) a.val.resize(spec.eval_cap);
        if (a.test.size() > spec.eval_cap) a.test.resize(spec.eval_cap);
        out.push_back({r, f, seed, std::move(a)});
      }
    }
  }
  return out;
}

inline nlohmann::json to_json(const SplitAssignment& a) {
  return {{"train", a.train}, {"val", a.val}, {"test", a.test}};
}

inline SplitAssignment split_assignment_from_json(const nlohmann::json& j) {
  SplitAssignment a;
  a.train = j.at("train").get<std::vector<std::size_t>>();
  a.val = j.at("val").get<std::vector<std::size_t>>();
  a.test = j.at("test").get<std::vector<std::size_t>>();
  return a;
}

inline nlohmann::json to_json(const SplitSpec& s) {
  nlohmann::json j{{"kind", std::string(to_string(s.kind))},
                   {"seed", s.seed},
                   {"repetitions", s.repetitions},
                   {"train_cap", s.train_cap},
                   {"eval_cap", s.eval_cap},
                   {"stratified", s.stratified}};
  if (s.kind == SplitKind::outer_kfold) j["k"] = s.k;
  return j;
}

inline SplitSpec split_spec_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> allowed{"kind",      "seed",     "repetitions", "k",
                                                "train_cap", "eval_cap", "stratified"};
  if (!j.is_object()) throw SchemaError("estimation: expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw SchemaError("estimation: unknown key '" + key + "'");
    }
  }
  SplitSpec s;
  if (!j.contains("kind")) throw SchemaError("estimation: missing required field 'kind'");
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "grinsztajn_holdout") {
    s.kind = SplitKind::grinsztajn_holdout;
  } else if (kind == "outer_kfold") {
    s.kind = SplitKind::outer_kfold;
  } else {
    throw SchemaError("estimation: unknown kind '" + kind + "'");
  }
  s.seed = j.value("seed", std::uint64_t{0});
  s.repetitions = j.value("repetitions", std::size_t{1});
  s.k = j.value("k", std::size_t{0});
  s.train_cap = j.value("train_cap", std::size_t{10000});
  s.eval_cap = j.value("eval_cap", std::size_t{50000});
  s.stratified = j.value("stratified", false);
  s.validate();
  return s;
}

}  // namespace tabbench
