#pragma once

// UCB gap estimation. Each man keeps, privately, how often he was matched
// to each woman and the rewards he collected there; confidence intervals
// around the empirical means give an estimate of his preference gap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace decmatch {

struct UcbState {
  std::vector<std::int64_t> matches;  // N_mw: rounds matched to w
  std::vector<double> reward_sum;     // M_mw: rewards collected at w
  std::int64_t t = 0;                 // rounds observed so far

  explicit UcbState(int n = 0) : matches(n, 0), reward_sum(n, 0.0) {}

  int size() const noexcept { return static_cast<int>(matches.size()); }
  double mean(int w) const {
    return matches[w] > 0 ? reward_sum[w] / static_cast<double>(matches[w]) : 0.0;
  }
};

/// Records one round. Counters move only when the proposal was accepted.
inline UcbState ucb_update(UcbState state, int w, bool matched, double reward) {
  ++state.t;
  if (matched) {
    ++state.matches[w];
    state.reward_sum[w] += reward;
  }
  return state;
}

struct UcbBounds {
  std::vector<double> upper;
  std::vector<double> lower;
};

/// U = min(1, mean + sqrt(2 log t / N)), L = max(0, mean - sqrt(2 log t / N));
/// an arm never matched gets the vacuous interval [0, 1].
inline UcbBounds ucb_bounds(const UcbState& state, std::int64_t t) {
  const int n = state.size();
  UcbBounds b{std::vector<double>(n, 1.0), std::vector<double>(n, 0.0)};
  const double log_t = std::log(static_cast<double>(std::max<std::int64_t>(t, 1)));
  for (int w = 0; w < n; ++w) {
    if (state.matches[w] == 0) continue;
    const double width = std::sqrt(2.0 * log_t / static_cast<double>(state.matches[w]));
    b.upper[w] = std::min(1.0, state.mean(w) + width);
    b.lower[w] = std::max(0.0, state.mean(w) - width);
  }
  return b;
}

/// Per-arm gap estimates max(0, L_w - min_w' U_w').
inline std::vector<double> ucb_arm_gaps(const UcbState& state, std::int64_t t) {
  const auto b = ucb_bounds(state, t);
  const double min_upper = *std::min_element(b.upper.begin(), b.upper.end());
  std::vector<double> gaps(state.size());
  for (int w = 0; w < state.size(); ++w) gaps[w] = std::max(0.0, b.lower[w] - min_upper);
  return gaps;
}

/// min_w of the per-arm estimates. The arm attaining min_w' U_w' always
/// contributes L_w - U_w <= 0, so this value is 0 for every state; it is
/// kept as the reference formula.
inline double ucb_gap(const UcbState& state, std::int64_t t) {
  const auto gaps = ucb_arm_gaps(state, t);
  return *std::min_element(gaps.begin(), gaps.end());
}

/// Separation estimate used to tune the mixing rate: arms are sorted by
/// empirical mean and each adjacent pair contributes max(0, L_hi - U_lo);
/// the result is the smallest such lower bound on a pairwise gap.
inline double ucb_separation(const UcbState& state, std::int64_t t) {
  const int n = state.size();
  if (n < 2) return 0.0;
  const auto b = ucb_bounds(state, t);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int c) { return state.mean(a) > state.mean(c); });
  double sep = 1.0;
  for (int i = 0; i + 1 < n; ++i) {
    sep = std::min(sep, std::max(0.0, b.lower[order[i]] - b.upper[order[i + 1]]));
  }
  return sep;
}

}  // namespace decmatch
