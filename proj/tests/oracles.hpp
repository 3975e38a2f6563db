#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance binary. Deliberately naive: enumeration, O(m^2) formulas and
// brute-force scans, sharing no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace oracle {

inline double mwu_statistic(std::span<const double> x, std::span<const double> y) {
  double u = 0.0;
  for (double a : x)
    for (double b : y) u += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return u;
}

// Two-sided exact p by enumerating every assignment of the pooled values to
// the first group: min(1, 2 min(P(U <= u), P(U >= u))).
inline double mwu_enumeration_p(std::span<const double> x, std::span<const double> y) {
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  const std::size_t n = pooled.size(), n1 = x.size();
  const double u_obs = mwu_statistic(x, y);
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(n1), true);
  double total = 0, le = 0, ge = 0;
  do {
    std::vector<double> a, b;
    for (std::size_t i = 0; i < n; ++i) (pick[i] ? a : b).push_back(pooled[i]);
    const double u = mwu_statistic(a, b);
    total += 1;
    if (u <= u_obs + 1e-9) le += 1;
    if (u >= u_obs - 1e-9) ge += 1;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return std::min(1.0, 2.0 * std::min(le, ge) / total);
}

// Monte-Carlo permutation p: share of relabelings with |U - mean| at least
// the observed distance.
inline double mwu_permutation_p(std::span<const double> x, std::span<const double> y, std::size_t shuffles,
                                std::uint64_t seed) {
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  // Midranks by counting: rank = #less + (#equal + 1) / 2.
  std::vector<double> ranks(pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    double less = 0, equal = 0;
    for (double v : pooled) {
      less += v < pooled[i];
      equal += v == pooled[i];
    }
    ranks[i] = less + (equal + 1.0) / 2.0;
  }
  const std::size_t n1 = x.size();
  const double n1d = static_cast<double>(n1);
  const double centre = 0.5 * static_cast<double>(x.size() * y.size());
  const double obs = std::abs(mwu_statistic(x, y) - centre);
  std::mt19937_64 gen(seed);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < shuffles; ++s) {
    std::shuffle(ranks.begin(), ranks.end(), gen);
    double r1 = 0;
    for (std::size_t i = 0; i < n1; ++i) r1 += ranks[i];
    const double u = r1 - n1d * (n1d + 1.0) / 2.0;
    if (std::abs(u - centre) >= obs - 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(shuffles);
}

// BY adjustment straight from its definition, O(m^2).
inline std::vector<double> by_direct(std::span<const double> p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  double c = 0.0;
  for (std::size_t k = 1; k <= m; ++k) c += 1.0 / static_cast<double>(k);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    double best = 1.0;
    for (std::size_t j = i; j < m; ++j)
      best = std::min(best, static_cast<double>(m) * c * p[order[j]] / static_cast<double>(j + 1));
    out[order[i]] = best;
  }
  return out;
}

inline double gini_of(const std::vector<double>& counts) {
  double n = 0, s = 0;
  for (double c : counts) n += c;
  if (n == 0) return 0.0;
  for (double c : counts) s += (c / n) * (c / n);
  return 1.0 - s;
}

struct RootSplit {
  double decrease = -1.0;  // parent impurity minus weighted child impurity
  std::vector<std::pair<std::size_t, double>> optima;  // (column, threshold) within 1e-12 of the best
};

// Scans every column of `pool` and every cut between distinct values of the
// weighted rows. columns[c][r] holds the value of column c at row r.
inline RootSplit best_root_split(const std::vector<std::vector<double>>& columns, std::span<const int> labels,
                                 std::span<const std::uint32_t> weights, std::span<const std::size_t> pool,
                                 int n_classes) {
  std::vector<double> parent(static_cast<std::size_t>(n_classes), 0.0);
  double n = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    parent[static_cast<std::size_t>(labels[r])] += weights[r];
    n += weights[r];
  }
  const double g_parent = gini_of(parent);
  struct Candidate {
    std::size_t col;
    double thr;
    double dec;
  };
  std::vector<Candidate> all;
  for (std::size_t c : pool) {
    std::vector<double> values;
    for (std::size_t r = 0; r < labels.size(); ++r)
      if (weights[r] > 0) values.push_back(columns[c][r]);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t k = 0; k + 1 < values.size(); ++k) {
      const double thr = 0.5 * (values[k] + values[k + 1]);
      std::vector<double> left(parent.size(), 0.0), right(parent.size(), 0.0);
      double nl = 0, nr = 0;
      for (std::size_t r = 0; r < labels.size(); ++r) {
        if (weights[r] == 0) continue;
        if (columns[c][r] <= values[k]) {
          left[static_cast<std::size_t>(labels[r])] += weights[r];
          nl += weights[r];
        } else {
          right[static_cast<std::size_t>(labels[r])] += weights[r];
          nr += weights[r];
        }
      }
      all.push_back({c, thr, g_parent - (nl / n) * gini_of(left) - (nr / n) * gini_of(right)});
    }
  }
  RootSplit out;
  for (const auto& cand : all) out.decrease = std::max(out.decrease, cand.dec);
  for (const auto& cand : all)
    if (cand.dec >= out.decrease - 1e-12) out.optima.push_back({cand.col, cand.thr});
  return out;
}

// Ordinal-pattern entropy by explicit pattern counting; ties ranked by position.
inline double permutation_entropy(std::span<const double> x, std::size_t m, std::size_t tau) {
  std::map<std::vector<std::size_t>, double> counts;
  const std::size_t span = (m - 1) * tau;
  double total = 0;
  for (std::size_t i = 0; i + span < x.size(); ++i) {
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[i + a * tau] < x[i + b * tau]; });
    counts[idx] += 1;
    total += 1;
  }
  double h = 0;
  for (const auto& [pattern, c] : counts) h -= (c / total) * std::log(c / total);
  return h;
}

}  // namespace oracle
