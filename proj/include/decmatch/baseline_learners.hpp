#pragma once

// Learners that exploit weak acyclicity of the stable matching game:
// complete-information best-response dynamics from good states, the
// constructive better-response path from arbitrary states, and the
// episode-based sample experimentation learner for unknown preferences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "decmatch/market.hpp"
#include "decmatch/rng.hpp"
#include "decmatch/ucb.hpp"

namespace decmatch {

/// A man is unsatisfied when his best response beats his payoff by more
/// than this.
inline constexpr double kImprovementTol = 1e-12;

// ---------------------------------------------------------------------------
// Complete-information dynamics on pure profiles (the sink action allowed).

/// Lowest-index maximizer of v_mw over women.
inline int best_response(const Market& market, std::span<const int> actions, int m) {
  const auto v = gradient(market, actions, m);
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// max_w v_mw - u_m; the sink action earns 0.
inline double improvement(const Market& market, std::span<const int> actions, int m) {
  const auto v = gradient(market, actions, m);
  const double best = *std::max_element(v.begin(), v.end());
  const double own = actions[m] == kNoProposal ? 0.0 : v[actions[m]];
  return best - own;
}

inline bool is_unsatisfied(const Market& market, std::span<const int> actions, int m) {
  return improvement(market, actions, m) > kImprovementTol;
}

inline std::vector<int> unsatisfied_men(const Market& market, std::span<const int> actions) {
  std::vector<int> out;
  for (int m = 0; m < market.size(); ++m) {
    if (is_unsatisfied(market, actions, m)) out.push_back(m);
  }
  return out;
}

/// Proposes to someone and no higher-ranked man proposes to the same woman.
inline bool is_matched(const Market& market, std::span<const int> actions, int m) {
  const int w = actions[m];
  if (w == kNoProposal) return false;
  for (int k : market.women_rank()[w]) {
    if (k == m) return true;
    if (actions[k] == w) return false;
  }
  return false;
}

/// Every matched man is at a best response.
inline bool is_good_state(const Market& market, std::span<const int> actions) {
  detail::check_size(market, static_cast<int>(actions.size()));
  for (int m = 0; m < market.size(); ++m) {
    if (is_matched(market, actions, m) && is_unsatisfied(market, actions, m)) return false;
  }
  return true;
}

/// Chooses which men update in a step, given the current profile and the
/// unsatisfied men. The returned set must contain at least one of them.
using UpdaterSchedule =
    std::function<std::vector<int>(std::span<const int>, const std::vector<int>&)>;

/// Every unsatisfied man updates at once.
inline UpdaterSchedule simultaneous_updates() {
  return [](std::span<const int>, const std::vector<int>& unsat) { return unsat; };
}

/// Only the lowest-index unsatisfied man updates.
inline UpdaterSchedule sequential_updates() {
  return [](std::span<const int>, const std::vector<int>& unsat) {
    return std::vector<int>{unsat.front()};
  };
}

/// A uniformly random subset of all men, redrawn until it contains an
/// unsatisfied man. `rng` must outlive the schedule.
inline UpdaterSchedule random_updates(Rng& rng) {
  return [&rng](std::span<const int> actions, const std::vector<int>& unsat) {
    const int n = static_cast<int>(actions.size());
    for (;;) {
      std::vector<int> subset;
      for (int m = 0; m < n; ++m) {
        if (bernoulli(rng, 0.5)) subset.push_back(m);
      }
      const bool hits = std::any_of(subset.begin(), subset.end(), [&](int m) {
        return std::find(unsat.begin(), unsat.end(), m) != unsat.end();
      });
      if (hits) return subset;
    }
  };
}

struct ResponsePath {
  std::vector<PureProfile> profiles;  // profiles.front() is the start
  std::vector<double> potentials;     // Phi of each profile
  bool converged = false;             // last profile has no unsatisfied man

  std::size_t steps() const noexcept { return profiles.empty() ? 0 : profiles.size() - 1; }
};

namespace detail {
inline void append(ResponsePath& path, const Market& market, const WomanCardinal& lambda,
                   PureProfile profile) {
  path.potentials.push_back(potential(market, profile, lambda));
  path.profiles.push_back(std::move(profile));
}
}  // namespace detail

/// Best-response dynamics from a good state. Selected men that are already
/// satisfied keep their action. Along the path Phi strictly increases and
/// the path ends at a pure NE within n^2 steps; `max_steps` only guards
/// against misuse with a schedule that violates the contract.
inline ResponsePath best_response_path(const Market& market, PureProfile start,
                                       const UpdaterSchedule& schedule,
                                       std::size_t max_steps = 0) {
  if (!is_good_state(market, start)) {
    throw std::invalid_argument("best_response_path: start is not a good state");
  }
  const int n = market.size();
  if (max_steps == 0) max_steps = static_cast<std::size_t>(4 * n * n + 4);
  const auto lambda = WomanCardinal::canonical(market);
  ResponsePath path;
  detail::append(path, market, lambda, std::move(start));
  while (path.steps() < max_steps) {
    const PureProfile& cur = path.profiles.back();
    const auto unsat = unsatisfied_men(market, cur);
    if (unsat.empty()) {
      path.converged = true;
      return path;
    }
    const auto movers = schedule(cur, unsat);
    PureProfile next = cur;
    bool moved = false;
    for (int m : movers) {
      if (!is_unsatisfied(market, cur, m)) continue;
      next[m] = best_response(market, cur, m);
      moved = true;
    }
    if (!moved) throw std::logic_error("updater schedule selected no unsatisfied man");
    detail::append(path, market, lambda, std::move(next));
  }
  path.converged = unsatisfied_men(market, path.profiles.back()).empty();
  return path;
}

/// Better-response path from any pure profile: matched men that want to
/// deviate move one at a time (lowest index first) until the state is good,
/// then sequential best responses finish the path. Length <= 2 n^2.
inline ResponsePath weak_acyclicity_witness(const Market& market, PureProfile start) {
  detail::check_size(market, static_cast<int>(start.size()));
  const int n = market.size();
  const auto lambda = WomanCardinal::canonical(market);
  const std::size_t guard = static_cast<std::size_t>(8 * n * n + 8);
  ResponsePath path;
  detail::append(path, market, lambda, std::move(start));
  while (path.steps() < guard) {
    const PureProfile& cur = path.profiles.back();
    int mover = kUnmatched;
    for (int m = 0; m < n && mover == kUnmatched; ++m) {
      if (is_matched(market, cur, m) && is_unsatisfied(market, cur, m)) mover = m;
    }
    if (mover == kUnmatched) break;
    PureProfile next = cur;
    next[mover] = best_response(market, cur, mover);
    detail::append(path, market, lambda, std::move(next));
  }
  auto tail = best_response_path(market, path.profiles.back(), sequential_updates());
  for (std::size_t i = 1; i < tail.profiles.size(); ++i) {
    path.profiles.push_back(std::move(tail.profiles[i]));
    path.potentials.push_back(tail.potentials[i]);
  }
  path.converged = tail.converged;
  return path;
}

// ---------------------------------------------------------------------------
// Sample experimentation learner.

struct TrialParams {
  double eps = 0.01;    // exploration probability
  double delta = 0.05;  // improvement tolerance
  double omega = 0.5;   // inertia
  std::int64_t tau = 0; // episode length; 0 selects default_episode_length

  /// 200 n^2 ceil(1 / eps).
  static std::int64_t default_episode_length(int n, double eps) {
    return static_cast<std::int64_t>(200) * n * n *
           static_cast<std::int64_t>(std::ceil(1.0 / eps));
  }

  /// Largest exploration rate allowed by the convergence guarantee:
  /// min((1 - p) / n, delta / (4 n), (gap - delta) / (4 n)).
  static double max_eps(int n, double gap, double delta, double p) {
    return std::min({(1.0 - p) / n, delta / (4.0 * n), (gap - delta) / (4.0 * n)});
  }
};

/// Throws std::invalid_argument unless delta in (0, gap) and eps is within
/// the bound of TrialParams::max_eps.
inline void validate_convergence_params(const TrialParams& params, int n, double gap,
                                        double p) {
  if (!(params.delta > 0.0 && params.delta < gap)) {
    throw std::invalid_argument("trial: delta must lie in (0, gap) = (0, " +
                                std::to_string(gap) + ")");
  }
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("trial: p must lie in (0, 1)");
  const double bound = TrialParams::max_eps(n, gap, params.delta, p);
  if (params.eps > bound) {
    throw std::invalid_argument("trial: eps = " + std::to_string(params.eps) +
                                " exceeds the bound " + std::to_string(bound));
  }
}

struct TrialLearnerState {
  int man = 0;
  int baseline = 0;
  std::int64_t episode = 1;
  std::int64_t tau = 1;
  double eps = 0.0;
  double delta = 0.0;
  double omega = 0.0;
  std::vector<double> sums;          // reward collected per woman this episode
  std::vector<std::int64_t> counts;  // proposals per woman this episode
  std::int64_t rounds = 0;           // rounds played this episode

  static TrialLearnerState initial(int man, int n, int baseline, const TrialParams& params) {
    if (!(params.eps >= 0.0 && params.eps <= 1.0)) throw std::invalid_argument("trial: eps");
    if (!(params.omega >= 0.0 && params.omega <= 1.0)) throw std::invalid_argument("trial: omega");
    if (!(params.delta > 0.0)) throw std::invalid_argument("trial: delta must be > 0");
    TrialLearnerState s;
    s.man = man;
    s.baseline = baseline;
    s.tau = params.tau > 0 ? params.tau : TrialParams::default_episode_length(n, params.eps);
    s.eps = params.eps;
    s.delta = params.delta;
    s.omega = params.omega;
    s.sums.assign(n, 0.0);
    s.counts.assign(n, 0);
    return s;
  }

  bool episode_done() const noexcept { return rounds >= tau; }
};

/// Baseline with probability 1 - eps, otherwise a uniform woman (which may
/// again be the baseline).
inline int trial_act(const TrialLearnerState& state, Rng& rng) {
  if (state.eps > 0.0 && uniform01(rng) < state.eps) {
    return uniform_int(rng, static_cast<int>(state.counts.size()));
  }
  return state.baseline;
}

/// Records one round. A rejected proposal counts as a play with reward 0.
inline void trial_record(TrialLearnerState& state, int w, bool accepted, double reward) {
  ++state.counts[w];
  if (accepted) state.sums[w] += reward;
  ++state.rounds;
}

struct EpisodeReport {
  std::int64_t episode = 0;
  std::vector<double> utilities;  // NaN for women not played this episode
  std::vector<int> candidates;    // women beating the baseline by delta
  int old_baseline = 0;
  int new_baseline = 0;
};

/// Closes the episode: candidates are the played women whose average beats
/// the baseline's by delta; one is drawn uniformly and adopted with
/// probability 1 - omega. An unplayed baseline certifies nothing.
inline EpisodeReport trial_end_episode(TrialLearnerState& state, Rng& rng) {
  if (state.rounds != state.tau) {
    throw std::logic_error("trial_end_episode: episode has " + std::to_string(state.rounds) +
                           " of " + std::to_string(state.tau) + " rounds");
  }
  const int n = static_cast<int>(state.counts.size());
  EpisodeReport report;
  report.episode = state.episode;
  report.old_baseline = state.baseline;
  report.utilities.assign(n, std::numeric_limits<double>::quiet_NaN());
  for (int w = 0; w < n; ++w) {
    if (state.counts[w] > 0) report.utilities[w] = state.sums[w] / static_cast<double>(state.counts[w]);
  }
  const double base = report.utilities[state.baseline];
  if (!std::isnan(base)) {
    for (int w = 0; w < n; ++w) {
      if (!std::isnan(report.utilities[w]) && report.utilities[w] >= base + state.delta) {
        report.candidates.push_back(w);
      }
    }
  }
  if (!report.candidates.empty()) {
    const int pick = report.candidates[uniform_int(rng, static_cast<int>(report.candidates.size()))];
    if (!bernoulli(rng, state.omega)) state.baseline = pick;
  }
  report.new_baseline = state.baseline;
  std::fill(state.sums.begin(), state.sums.end(), 0.0);
  std::fill(state.counts.begin(), state.counts.end(), 0);
  state.rounds = 0;
  ++state.episode;
  return report;
}

}  // namespace decmatch
