#pragma once

// Random market generators. Preference values for each man are drawn on
// (0, 1] with neighbouring values at least min_gap apart, so that the gap
// and mu_min are both bounded below by min_gap.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "decmatch/market.hpp"
#include "decmatch/rng.hpp"

namespace decmatch {

namespace detail {

inline void check_gap(int n, double min_gap) {
  if (n < 1) throw std::invalid_argument("generator: n must be >= 1");
  if (!(min_gap > 0.0)) throw std::invalid_argument("generator: min_gap must be > 0");
  if (n * min_gap > 1.0) {
    throw std::invalid_argument("generator: min_gap = " + std::to_string(min_gap) +
                                " is infeasible for n = " + std::to_string(n) +
                                " (needs n * min_gap <= 1)");
  }
}

/// n values in [min_gap, 1], descending, consecutive ones >= min_gap apart.
inline std::vector<double> spaced_values(int n, double min_gap, Rng& rng) {
  const double slack = 1.0 - n * min_gap;
  std::vector<double> u(n);
  for (double& v : u) v = slack * uniform01(rng);
  std::sort(u.begin(), u.end());
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = min_gap * (i + 1) + u[i];
  std::reverse(out.begin(), out.end());
  return out;
}

inline std::vector<int> shuffled(int n, Rng& rng) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[uniform_int(rng, i + 1)]);
  return p;
}

/// Moves k in front of every index greater than k, keeping the others in
/// their shuffled order.
inline void lift_above_later(std::vector<int>& order, int k) {
  order.erase(std::find(order.begin(), order.end(), k));
  auto first_later = std::find_if(order.begin(), order.end(), [k](int j) { return j > k; });
  order.insert(first_later, k);
}

}  // namespace detail

/// Market satisfying the sequential preference condition under the identity
/// orderings: man k values woman k above every woman j > k, and woman k
/// ranks man k above every man j > k. Its unique stable matching is the
/// identity.
inline Market gen_hierarchical(int n, std::uint64_t seed, double min_gap = 0.1,
                               RewardDist dist = {}) {
  detail::check_gap(n, min_gap);
  Rng rng(derive_seed(seed, 0, stream::kMarket));
  Matrix mu(n, n);
  for (int k = 0; k < n; ++k) {
    const auto values = detail::spaced_values(n, min_gap, rng);
    auto order = detail::shuffled(n, rng);  // order[i] gets the i-th largest value
    detail::lift_above_later(order, k);
    for (int i = 0; i < n; ++i) mu(k, order[i]) = values[i];
  }
  std::vector<std::vector<int>> ranks(n);
  for (int k = 0; k < n; ++k) {
    ranks[k] = detail::shuffled(n, rng);
    detail::lift_above_later(ranks[k], k);
  }
  return Market::create(std::move(mu), std::move(ranks), dist);
}

/// Market with uniformly random preference orders on both sides and
/// gap >= min_gap.
inline Market gen_general(int n, std::uint64_t seed, double min_gap = 0.1,
                          RewardDist dist = {}) {
  detail::check_gap(n, min_gap);
  Rng rng(derive_seed(seed, 0, stream::kMarket));
  Matrix mu(n, n);
  for (int m = 0; m < n; ++m) {
    const auto values = detail::spaced_values(n, min_gap, rng);
    const auto order = detail::shuffled(n, rng);
    for (int i = 0; i < n; ++i) mu(m, order[i]) = values[i];
  }
  std::vector<std::vector<int>> ranks(n);
  for (int w = 0; w < n; ++w) ranks[w] = detail::shuffled(n, rng);
  return Market::create(std::move(mu), std::move(ranks), dist);
}

}  // namespace decmatch
