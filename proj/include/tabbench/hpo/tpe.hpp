#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <numeric>
#include <span>
#include <vector>

#include "tabbench/core/rng.hpp"
#include "tabbench/hpo/space.hpp"
#include "tabbench/preprocess/normal.hpp"

namespace tabbench {

struct TpeOptions {
  double gamma = 0.25;
  std::size_t n_candidates = 24;
  double min_bandwidth_fraction = 0.01;
};

/// A completed observation as TPE sees it: configuration and objective
/// only. Test scores never reach the sampler.
struct Observation {
  json config;
  double objective = 0.0;
};

namespace tpe_detail {

/// Truncated Gaussian mixture over an interval of the transformed space:
/// one kernel per observation plus a wide prior kernel at the midpoint,
/// all weighted equally. The shared Scott's-rule bandwidth is floored at
/// range / min(100, n + 1), and never below `min_bandwidth_fraction`.
class ParzenEstimator {
 public:
  ParzenEstimator(std::vector<double> points, double a, double b, const TpeOptions& opt) : a_(a), b_(b) {
    const double range = b - a;
    double sigma = range;
    if (points.size() >= 2) {
      const double n = static_cast<double>(points.size());
      const double mean = std::accumulate(points.begin(), points.end(), 0.0) / n;
      double ss = 0.0;
      for (double p : points) ss += (p - mean) * (p - mean);
      const double sd = std::sqrt(ss / (n - 1.0));
      sigma = 1.06 * sd * std::pow(n, -0.2);
    }
    const double floor_fraction =
        std::max(opt.min_bandwidth_fraction, 1.0 / std::min(100.0, 1.0 + static_cast<double>(points.size())));
    sigma = std::clamp(sigma, floor_fraction * range, range);
    for (double p : points) add(p, sigma);
    add(0.5 * (a + b), range);
  }

  double sample(SplitMix64& rng) const {
    const auto& k = kernels_[rng.below(kernels_.size())];
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double t = k.mu + k.sigma * rng.normal();
      if (t >= a_ && t <= b_) return t;
    }
    return std::clamp(k.mu, a_, b_);
  }

  double log_pdf(double t) const {
    double s = 0.0;
    for (const auto& k : kernels_) s += normal_pdf((t - k.mu) / k.sigma) / (k.sigma * k.mass);
    return std::log(s / static_cast<double>(kernels_.size()));
  }

  /// Log probability of the bin [lo, hi] (integer parameters).
  double log_mass(double lo, double hi) const {
    double s = 0.0;
    for (const auto& k : kernels_) {
      s += (normal_cdf((hi - k.mu) / k.sigma) - normal_cdf((lo - k.mu) / k.sigma)) / k.mass;
    }
    return std::log(std::max(s / static_cast<double>(kernels_.size()), std::numeric_limits<double>::min()));
  }

 private:
  struct Kernel {
    double mu, sigma, mass;
  };
  void add(double mu, double sigma) {
    const double mass = normal_cdf((b_ - mu) / sigma) - normal_cdf((a_ - mu) / sigma);
    kernels_.push_back({mu, sigma, std::max(mass, 1e-300)});
  }
  double a_, b_;
  std::vector<Kernel> kernels_;
};

/// Per-parameter density built from observed values of one distribution.
class ParamDensity {
 public:
  ParamDensity(const ParamDistribution& d, const std::vector<json>& values, const TpeOptions& opt) : dist_(&d) {
    using K = ParamDistribution::Kind;
    if (d.kind == K::categorical) {
      probs_.assign(d.choices.size(), 1.0);
      for (const auto& v : values) {
        const auto it = std::find(d.choices.begin(), d.choices.end(), v);
        if (it != d.choices.end()) probs_[static_cast<std::size_t>(it - d.choices.begin())] += 1.0;
      }
      const double total = std::accumulate(probs_.begin(), probs_.end(), 0.0);
      for (double& p : probs_) p /= total;
    } else if (d.kind == K::mixture) {
      std::vector<json> rest;
      double specials = 0.0;
      for (const auto& v : values) {
        if (v == d.special) specials += 1.0;
        else rest.push_back(v);
      }
      p_special_ = (specials + 1.0) / (static_cast<double>(values.size()) + 2.0);
      inner_ = std::make_shared<ParamDensity>(*d.fallback, rest, opt);
    } else {
      std::vector<double> pts;
      for (const auto& v : values) pts.push_back(d.to_transformed(v.get<double>()));
      const auto [a, b] = d.transformed_bounds();
      parzen_.emplace(std::move(pts), a, b, opt);
    }
  }

  json sample(SplitMix64& rng) const {
    using K = ParamDistribution::Kind;
    if (dist_->kind == K::categorical) {
      double u = rng.uniform(), acc = 0.0;
      for (std::size_t i = 0; i < probs_.size(); ++i) {
        acc += probs_[i];
        if (u < acc) return dist_->choices[i];
      }
      return dist_->choices.back();
    }
    if (dist_->kind == K::mixture) return rng.uniform() < p_special_ ? dist_->special : inner_->sample(rng);
    return dist_->from_transformed(parzen_->sample(rng));
  }

  double log_density(const json& v) const {
    using K = ParamDistribution::Kind;
    if (dist_->kind == K::categorical) {
      const auto it = std::find(dist_->choices.begin(), dist_->choices.end(), v);
      return std::log(probs_[static_cast<std::size_t>(it - dist_->choices.begin())]);
    }
    if (dist_->kind == K::mixture) {
      if (v == dist_->special) return std::log(p_special_);
      return std::log(1.0 - p_special_) + inner_->log_density(v);
    }
    if (dist_->kind == K::int_uniform) {
      const double k = v.get<double>();
      return parzen_->log_mass(k - 0.5, k + 0.5);
    }
    return parzen_->log_pdf(dist_->to_transformed(v.get<double>()));
  }

 private:
  const ParamDistribution* dist_;
  std::vector<double> probs_;
  double p_special_ = 0.5;
  std::shared_ptr<ParamDensity> inner_;
  std::optional<ParzenEstimator> parzen_;
};

}  // namespace tpe_detail

/// Tree-structured Parzen estimator suggestion. The best ceil(gamma * n)
/// observations form the good set; candidates drawn from the good density
/// are scored by sum over parameters of log good(x) - log bad(x). With all
/// objectives equal the ratio carries no information and the suggestion is
/// a random draw.
inline json tpe_suggest(std::span<const Observation> history, const SearchSpace& space, SplitMix64& rng,
                        const TpeOptions& opt = {}) {
  if (history.empty()) throw ContractError("tpe_suggest: empty history");
  const bool all_equal = std::all_of(history.begin(), history.end(),
                                     [&](const Observation& o) { return o.objective == history.front().objective; });
  if (all_equal && history.size() > 1) return sample_random(space, rng);

  std::vector<std::size_t> order(history.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return history[a].objective < history[b].objective; });
  const auto n_good = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(opt.gamma * static_cast<double>(history.size()))));

  std::vector<tpe_detail::ParamDensity> good, bad;
  for (const auto& [name, dist] : space.params()) {
    std::vector<json> gv, bv;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& cfg = history[order[i]].config;
      if (!cfg.contains(name)) continue;
      (i < n_good ? gv : bv).push_back(cfg.at(name));
    }
    good.emplace_back(dist, gv, opt);
    bad.emplace_back(dist, bv, opt);
  }

  json best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < opt.n_candidates; ++c) {
    json candidate = json::object();
    double score = 0.0;
    std::size_t p = 0;
    for (const auto& [name, dist] : space.params()) {
      const json v = good[p].sample(rng);
      score += good[p].log_density(v) - bad[p].log_density(v);
      candidate[name] = v;
      ++p;
    }
    if (score > best_score || best.is_null()) {
      best_score = score;
      best = std::move(candidate);
    }
  }
  return best;
}

}  // namespace tabbench
