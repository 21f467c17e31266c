#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tabbench/core/error.hpp"
#include "tabbench/core/rng.hpp"

namespace tabbench {

using json = nlohmann::json;

/// One hyperparameter's search distribution.
struct ParamDistribution {
  enum class Kind { uniform, loguniform, int_uniform, categorical, mixture };

  Kind kind = Kind::uniform;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<json> choices;                         // categorical
  json special;                                      // mixture
  std::shared_ptr<const ParamDistribution> fallback;  // mixture

  static ParamDistribution uniform(double lo, double hi) { return make(Kind::uniform, lo, hi); }
  static ParamDistribution loguniform(double lo, double hi) { return make(Kind::loguniform, lo, hi); }
  static ParamDistribution int_uniform(long long lo, long long hi) {
    return make(Kind::int_uniform, static_cast<double>(lo), static_cast<double>(hi));
  }
  static ParamDistribution categorical(std::vector<json> choices) {
    ParamDistribution d;
    d.kind = Kind::categorical;
    d.choices = std::move(choices);
    d.validate();
    return d;
  }
  static ParamDistribution mixture(json special, ParamDistribution fallback) {
    ParamDistribution d;
    d.kind = Kind::mixture;
    d.special = std::move(special);
    d.fallback = std::make_shared<const ParamDistribution>(std::move(fallback));
    d.validate();
    return d;
  }

  bool continuous() const { return kind == Kind::uniform || kind == Kind::loguniform || kind == Kind::int_uniform; }

  /// Bounds in the transformed (sampling) space: log for loguniform,
  /// half-integer padding for int_uniform.
  std::pair<double, double> transformed_bounds() const {
    switch (kind) {
      case Kind::loguniform: return {std::log(lo), std::log(hi)};
      case Kind::int_uniform: return {lo - 0.5, hi + 0.5};
      default: return {lo, hi};
    }
  }
  double to_transformed(double x) const { return kind == Kind::loguniform ? std::log(x) : x; }

  /// Maps a transformed-space point to a parameter value inside the bounds.
  json from_transformed(double t) const {
    if (kind == Kind::int_uniform) {
      return static_cast<long long>(std::clamp(std::round(t), lo, hi));
    }
    const double x = kind == Kind::loguniform ? std::exp(t) : t;
    return std::clamp(x, lo, hi);
  }

  bool contains(const json& v) const {
    switch (kind) {
      case Kind::uniform:
      case Kind::loguniform:
        return v.is_number() && v.get<double>() >= lo && v.get<double>() <= hi;
      case Kind::int_uniform:
        return v.is_number_integer() && v.get<double>() >= lo && v.get<double>() <= hi;
      case Kind::categorical:
        return std::find(choices.begin(), choices.end(), v) != choices.end();
      case Kind::mixture:
        return v == special || fallback->contains(v);
    }
    return false;
  }

  json sample(SplitMix64& rng) const {
    switch (kind) {
      case Kind::uniform: return rng.uniform(lo, hi);
      case Kind::loguniform: return std::clamp(std::exp(rng.uniform(std::log(lo), std::log(hi))), lo, hi);
      case Kind::int_uniform: {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return static_cast<long long>(lo) + static_cast<long long>(rng.below(span));
      }
      case Kind::categorical: return choices[rng.below(choices.size())];
      case Kind::mixture: return rng.uniform() < 0.5 ? special : fallback->sample(rng);
    }
    return nullptr;
  }

  void validate() const {
    switch (kind) {
      case Kind::uniform:
      case Kind::int_uniform:
        if (!(lo < hi)) throw ContractError("distribution: lo must be < hi");
        if (kind == Kind::int_uniform && (lo != std::floor(lo) || hi != std::floor(hi))) {
          throw ContractError("distribution: int_uniform bounds must be integers");
        }
        break;
      case Kind::loguniform:
        if (!(lo > 0.0)) throw ContractError("distribution: loguniform requires lo > 0");
        if (!(lo < hi)) throw ContractError("distribution: lo must be < hi");
        break;
      case Kind::categorical:
        if (choices.empty()) throw ContractError("distribution: categorical needs at least one choice");
        break;
      case Kind::mixture:
        if (!fallback) throw ContractError("distribution: mixture needs a fallback");
        if (fallback->kind == Kind::mixture) throw ContractError("distribution: nested mixtures are not supported");
        break;
    }
  }

 private:
  static ParamDistribution make(Kind k, double lo, double hi) {
    ParamDistribution d;
    d.kind = k;
    d.lo = lo;
    d.hi = hi;
    d.validate();
    return d;
  }
};

inline std::string_view to_string(ParamDistribution::Kind k) {
  using K = ParamDistribution::Kind;
  switch (k) {
    case K::uniform: return "uniform";
    case K::loguniform: return "loguniform";
    case K::int_uniform: return "int_uniform";
    case K::categorical: return "categorical";
    case K::mixture: return "mixture";
  }
  return "?";
}

inline json to_json(const ParamDistribution& d) {
  json j{{"kind", to_string(d.kind)}};
  switch (d.kind) {
    case ParamDistribution::Kind::categorical: j["choices"] = d.choices; break;
    case ParamDistribution::Kind::mixture:
      j["special"] = d.special;
      j["fallback"] = to_json(*d.fallback);
      break;
    case ParamDistribution::Kind::int_uniform:
      j["lo"] = static_cast<long long>(d.lo);
      j["hi"] = static_cast<long long>(d.hi);
      break;
    default:
      j["lo"] = d.lo;
      j["hi"] = d.hi;
  }
  return j;
}

inline ParamDistribution distribution_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "uniform") return ParamDistribution::uniform(j.at("lo").get<double>(), j.at("hi").get<double>());
  if (kind == "loguniform") return ParamDistribution::loguniform(j.at("lo").get<double>(), j.at("hi").get<double>());
  if (kind == "int_uniform") {
    return ParamDistribution::int_uniform(j.at("lo").get<long long>(), j.at("hi").get<long long>());
  }
  if (kind == "categorical") return ParamDistribution::categorical(j.at("choices").get<std::vector<json>>());
  if (kind == "mixture") return ParamDistribution::mixture(j.at("special"), distribution_from_json(j.at("fallback")));
  throw ContractError("distribution: unknown kind '" + kind + "'");
}

/// Named distributions in declaration order.
class SearchSpace {
 public:
  SearchSpace() = default;
  SearchSpace(std::initializer_list<std::pair<std::string, ParamDistribution>> params) : params_(params) {}

  SearchSpace& add(std::string name, ParamDistribution d) {
    params_.emplace_back(std::move(name), std::move(d));
    return *this;
  }

  const std::vector<std::pair<std::string, ParamDistribution>>& params() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }
  bool empty() const noexcept { return params_.empty(); }

  bool contains(const json& config) const {
    for (const auto& [name, d] : params_) {
      if (!config.contains(name) || !d.contains(config.at(name))) return false;
    }
    return true;
  }

  json to_json() const {
    json j = json::object();
    for (const auto& [name, d] : params_) j[name] = tabbench::to_json(d);
    return j;
  }

  static SearchSpace from_json(const json& j) {
    SearchSpace s;
    for (const auto& [name, d] : j.items()) s.add(name, distribution_from_json(d));
    return s;
  }

 private:
  std::vector<std::pair<std::string, ParamDistribution>> params_;
};

/// Each parameter drawn independently.
inline json sample_random(const SearchSpace& space, SplitMix64& rng) {
  json config = json::object();
  for (const auto& [name, d] : space.params()) config[name] = d.sample(rng);
  return config;
}

namespace spaces {

/// XGBoost-style boosted trees.
inline SearchSpace xgboost() {
  using D = ParamDistribution;
  return {{"learning_rate", D::loguniform(1e-3, 0.7)},  {"max_depth", D::int_uniform(1, 11)},
          {"colsample_bytree", D::uniform(0.5, 1.0)},   {"subsample", D::uniform(0.5, 1.0)},
          {"min_child_weight", D::loguniform(1, 100)},  {"reg_alpha", D::loguniform(1e-8, 100)},
          {"reg_lambda", D::loguniform(1, 4)},          {"gamma", D::loguniform(1e-8, 7)}};
}

/// LightGBM-style boosted trees (leaf-wise growth).
inline SearchSpace lightgbm() {
  using D = ParamDistribution;
  return {{"learning_rate", D::loguniform(1e-3, 0.7)},
          {"max_depth", D::mixture(-1, D::int_uniform(1, 11))},
          {"min_data_in_leaf", D::categorical({20, 50, 100, 500, 1000, 2000})},
          {"num_leaves", D::int_uniform(2, 2047)},
          {"lambda_l2", D::loguniform(1e-4, 10.0)},
          {"feature_fraction", D::uniform(0.5, 1.0)},
          {"bagging_fraction", D::uniform(0.5, 1.0)},
          {"min_sum_hessian_in_leaf", D::loguniform(1e-4, 100.0)}};
}

inline SearchSpace mlp() {
  using D = ParamDistribution;
  return {{"learning_rate", D::loguniform(1e-5, 1e-2)}, {"weight_decay", D::loguniform(1e-6, 1e-3)},
          {"n_layers", D::int_uniform(1, 6)},          {"layer_size", D::int_uniform(64, 1024)},
          {"dropout", D::uniform(0.0, 0.5)},           {"cat_embedding_size", D::int_uniform(1, 512)}};
}

}  // namespace spaces

}  // namespace tabbench
