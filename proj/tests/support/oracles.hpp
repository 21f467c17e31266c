#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

namespace tabbench::testing {

/// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
inline double auc_pairs(const std::vector<double>& y, const std::vector<double>& s) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[i] != 1.0 || y[j] != 0.0) continue;
      pairs += 1.0;
      good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return good / pairs;
}

/// p = P(min(W+, W-) <= observed) over all 2^n equally likely sign flips.
inline double enumerated_wilcoxon_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  }
  std::vector<double> abs_d;
  for (double v : d) abs_d.push_back(std::fabs(v));
  // Average ranks by brute-force counting.
  std::vector<double> ranks(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    double below = 0, equal = 0;
    for (double v : abs_d) {
      below += v < abs_d[i];
      equal += v == abs_d[i];
    }
    ranks[i] = below + (equal + 1) / 2;
  }
  double wp = 0, wm = 0;
  for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? wp : wm) += ranks[i];
  const double w = std::min(wp, wm);
  const std::size_t n = d.size();
  double hits = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double p = 0, m = 0;
    for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1 ? p : m) += ranks[i];
    hits += std::min(p, m) <= w + 1e-9;
  }
  return hits / std::ldexp(1.0, static_cast<int>(n));
}

/// Step-down by hand: walk p-values from smallest, reject while
/// p_(i) <= alpha / (m - i), stop at the first acceptance.
inline std::vector<bool> holm_by_hand(const std::vector<double>& p, double alpha) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  std::vector<bool> reject(m, false);
  for (std::size_t i = 0; i < m; ++i) {
    if (p[order[i]] > alpha / static_cast<double>(m - i)) break;
    reject[order[i]] = true;
  }
  return reject;
}

/// Exhaustive scan of every split point of a single feature, using the
/// second-order gain with L2 penalty.
inline std::pair<double, double> best_split_oracle(const std::vector<double>& x, const std::vector<double>& g,
                                                   const std::vector<double>& h, double lambda) {
  std::vector<double> values(x);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  double best_gain = -1e300, best_threshold = 0.0;
  for (std::size_t i = 0; i + 1 < values.size(); ++i) {
    const double t = 0.5 * (values[i] + values[i + 1]);
    double gl = 0, hl = 0, gr = 0, hr = 0;
    for (std::size_t r = 0; r < x.size(); ++r) {
      (x[r] < t ? gl : gr) += g[r];
      (x[r] < t ? hl : hr) += h[r];
    }
    const double gain = 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) -
                                (gl + gr) * (gl + gr) / (hl + hr + lambda));
    if (gain > best_gain) {
      best_gain = gain;
      best_threshold = t;
    }
  }
  return {best_threshold, best_gain};
}

}  // namespace tabbench::testing
