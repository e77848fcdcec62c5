#pragma once

// Round-by-round market process: proposals, acceptance by the women,
// reward draws, per-man feedback, and the learners that drive it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "decmatch/baseline_learners.hpp"
#include "decmatch/equilibrium.hpp"
#include "decmatch/exp_learner.hpp"
#include "decmatch/generators.hpp"
#include "decmatch/market.hpp"
#include "decmatch/monotone.hpp"
#include "decmatch/rng.hpp"

namespace decmatch {

enum class FeedbackMode { kStandard, kWaitingList };

inline const char* to_string(FeedbackMode mode) {
  return mode == FeedbackMode::kStandard ? "standard" : "waiting-list";
}

inline FeedbackMode feedback_mode_from_string(const std::string& s) {
  if (s == "standard") return FeedbackMode::kStandard;
  if (s == "waiting-list") return FeedbackMode::kWaitingList;
  throw std::invalid_argument("unknown feedback mode '" + s + "'");
}

struct RoundOutcome {
  PureProfile proposals;
  Matching matches;                              // partial in general
  std::vector<std::optional<double>> rewards;    // present exactly for matched men
  std::optional<std::vector<int>> waitlist;      // waiting-list mode only
};

/// Each woman accepts her highest-ranked proposer. Rewards are drawn from
/// `env` in increasing woman order. In waiting-list mode every proposing man
/// also gets the number of strictly higher-ranked men proposing to the same
/// woman; sink actions get 0.
inline RoundOutcome resolve_round(const Market& market, std::span<const int> proposals,
                                  Rng& env, FeedbackMode mode = FeedbackMode::kStandard) {
  const int n = market.size();
  detail::check_size(market, static_cast<int>(proposals.size()));
  for (int w : proposals) {
    if (w != kNoProposal && (w < 0 || w >= n)) {
      throw std::out_of_range("resolve_round: proposal out of range");
    }
  }
  const auto top = top_proposers(market, proposals);
  std::vector<int> partner(n, kUnmatched);
  for (int w = 0; w < n; ++w) {
    if (top[w] != kUnmatched) partner[top[w]] = w;
  }
  RoundOutcome out{PureProfile(proposals.begin(), proposals.end()), Matching(partner),
                   std::vector<std::optional<double>>(n), std::nullopt};
  for (int w = 0; w < n; ++w) {
    if (top[w] != kUnmatched) out.rewards[top[w]] = market.sample_reward(top[w], w, env);
  }
  if (mode == FeedbackMode::kWaitingList) {
    std::vector<int> counts(n, 0);
    for (int m = 0; m < n; ++m) {
      const int w = proposals[m];
      if (w == kNoProposal) continue;
      for (int k = 0; k < n; ++k) {
        if (proposals[k] == w && market.prefers(w, k, m)) ++counts[m];
      }
    }
    out.waitlist = std::move(counts);
  }
  return out;
}

/// What man m may observe about a round. A rejected man sees no reward.
struct ManFeedback {
  std::int64_t t = 0;
  int proposal = kNoProposal;
  bool accepted = false;
  std::optional<double> reward;
  std::optional<int> waitlist;
};

inline ManFeedback feedback_for(const RoundOutcome& round, std::int64_t t, int m) {
  ManFeedback fb;
  fb.t = t;
  fb.proposal = round.proposals.at(m);
  fb.accepted = round.rewards.at(m).has_value();
  if (fb.accepted) fb.reward = round.rewards[m];
  if (round.waitlist) fb.waitlist = (*round.waitlist)[m];
  return fb;
}

// ---------------------------------------------------------------------------
// Run configuration.

enum class LearnerKind { kExp, kTrial, kBestResponse, kMonotone };

inline const char* to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::kExp: return "exp";
    case LearnerKind::kTrial: return "trial";
    case LearnerKind::kBestResponse: return "best-response";
    case LearnerKind::kMonotone: return "monotone";
  }
  return "unknown";
}

inline LearnerKind learner_kind_from_string(const std::string& s) {
  if (s == "exp") return LearnerKind::kExp;
  if (s == "trial") return LearnerKind::kTrial;
  if (s == "best-response") return LearnerKind::kBestResponse;
  if (s == "monotone") return LearnerKind::kMonotone;
  throw std::invalid_argument("unknown learner kind '" + s + "'");
}

struct GeneratorSpec {
  std::string kind = "hierarchical";  // hierarchical | general | example1
  int n = 3;
  std::uint64_t seed = 0;
  double min_gap = 0.1;
  double example_eps = 0.1;
  RewardDist reward;
};

inline Market make_market(const GeneratorSpec& g) {
  if (g.kind == "hierarchical") return gen_hierarchical(g.n, g.seed, g.min_gap, g.reward);
  if (g.kind == "general") return gen_general(g.n, g.seed, g.min_gap, g.reward);
  if (g.kind == "example1") return example1_market(g.example_eps).market.with_reward_dist(g.reward);
  throw std::invalid_argument("unknown generator '" + g.kind + "'");
}

struct ExpConfig {
  ScheduleKind schedule = ScheduleKind::kTheorem3;
  std::optional<double> mixing_constant;  // M; derived from c when absent
  std::optional<double> gap_constant;     // c; derived from the market when absent
  double alpha = 0.75, beta = 1.0 / 3.0, eta_scale = 1.0, gamma_scale = 1.0;  // custom
  bool gap_oracle = false;
};

struct TrialConfig {
  double eps = 0.01;
  double delta = 0.05;
  double omega = 0.5;
  std::vector<std::int64_t> tau;  // empty: default; one entry: shared; n entries: per man
  bool theorem6 = false;
  double p = 0.9;
  bool diagnostics = false;
};

enum class UpdateRule { kSimultaneous, kSequential, kRandom };

struct BestResponseConfig {
  bool random_start = false;  // false: every man starts on the sink action
  UpdateRule updates = UpdateRule::kSimultaneous;
};

struct MonotoneConfig {
  double beta = 0.0;  // 0 selects n mu_max (certified monotone)
  double step = 0.0;  // 0 selects the largest admissible step
};

struct RunConfig {
  std::variant<Market, GeneratorSpec> market = GeneratorSpec{};
  LearnerKind learner = LearnerKind::kExp;
  ExpConfig exp;
  TrialConfig trial;
  BestResponseConfig best_response;
  MonotoneConfig monotone;
  std::int64_t horizon = 1000;
  int replications = 1;
  std::uint64_t seed = 0;
  FeedbackMode feedback = FeedbackMode::kStandard;
};

inline Market resolve_market(const RunConfig& cfg) {
  if (const auto* m = std::get_if<Market>(&cfg.market)) return *m;
  return make_market(std::get<GeneratorSpec>(cfg.market));
}

/// The unique stable matching when it can be established: by enumeration
/// for n <= kMaxEnumerationSize, otherwise via the sequential preference
/// condition.
inline std::optional<Matching> unique_stable_matching(const Market& market) {
  if (market.size() <= kMaxEnumerationSize) {
    auto all = enumerate_stable_matchings(market);
    if (all.size() == 1) return all.front();
    return std::nullopt;
  }
  if (satisfies_sequential_preference(market)) return Matching::identity(market.size());
  return std::nullopt;
}

inline ScheduleSpec make_schedule(const ExpConfig& cfg, const Market& market,
                                  std::int64_t horizon) {
  switch (cfg.schedule) {
    case ScheduleKind::kLocal: return ScheduleSpec::local();
    case ScheduleKind::kCustom:
      return ScheduleSpec::custom(cfg.alpha, cfg.beta, cfg.eta_scale, cfg.gamma_scale);
    case ScheduleKind::kTheorem3: break;
  }
  if (cfg.mixing_constant) {
    return ScheduleSpec::theorem3_with_constant(*cfg.mixing_constant, horizon);
  }
  double c = 0.0;
  if (cfg.gap_constant) {
    c = *cfg.gap_constant;
  } else if (auto target = unique_stable_matching(market)) {
    c = market.hierarchical_constant(target->partners());
  } else {
    c = market.local_constant();
  }
  return ScheduleSpec::theorem3(market.size(), c, std::max<std::int64_t>(horizon, 2));
}

// ---------------------------------------------------------------------------
// Trajectories.

struct RoundMetrics {
  std::optional<std::int64_t> regret;  // cumulative; only with a unique stable matching
  bool stable = false;                 // proposals form a stable perfect matching
  std::optional<double> dist;          // L1 distance to the nearest pure NE, n <= 8
  std::optional<double> eta;
  std::optional<double> gamma;         // mean over men
};

struct EpisodeRecord {
  int man = 0;
  EpisodeReport report;
  /// Utility of each woman against the other men's baselines at the start
  /// of the episode, for comparison with report.utilities.
  std::vector<double> expected;
};

struct Trajectory {
  int replication = 0;
  std::uint64_t seed = 0;
  std::vector<RoundOutcome> rounds;
  std::vector<RoundMetrics> metrics;
  std::vector<EpisodeRecord> episodes;  // trial learner with diagnostics only
  std::vector<std::string> warnings;
};

/// L1 distance between profile rows and a pure profile; a sink row counts as
/// the zero vector.
inline double l1_to_pure(const Matrix& x, std::span<const int> target) {
  double d = 0.0;
  for (std::size_t m = 0; m < x.rows(); ++m) {
    for (std::size_t w = 0; w < x.cols(); ++w) {
      const double t = target[m] == static_cast<int>(w) ? 1.0 : 0.0;
      d += std::abs(x(m, w) - t);
    }
  }
  return d;
}

inline Matrix one_hot(std::span<const int> actions, int n) {
  Matrix x(n, n, 0.0);
  for (int m = 0; m < n; ++m) {
    if (actions[m] != kNoProposal) x(m, actions[m]) = 1.0;
  }
  return x;
}

inline bool proposals_stable(const Market& market, std::span<const int> proposals) {
  const int n = market.size();
  std::vector<char> seen(n, 0);
  for (int w : proposals) {
    if (w == kNoProposal || seen[w]) return false;
    seen[w] = 1;
  }
  return is_stable(market, Matching(PureProfile(proposals.begin(), proposals.end())));
}

namespace detail {

struct MetricContext {
  std::optional<Matching> target;
  std::vector<Matching> stable;  // all stable matchings, n <= 8
  bool enumerated = false;
  std::int64_t regret = 0;

  explicit MetricContext(const Market& market) {
    if (market.size() <= kMaxEnumerationSize) {
      stable = enumerate_stable_matchings(market);
      enumerated = true;
      if (stable.size() == 1) target = stable.front();
    } else if (satisfies_sequential_preference(market)) {
      target = Matching::identity(market.size());
    }
  }

  RoundMetrics measure(const Market& market, std::span<const int> proposals,
                       const Matrix& profile) {
    RoundMetrics rm;
    if (target) {
      if (!std::equal(proposals.begin(), proposals.end(), target->partners().begin())) ++regret;
      rm.regret = regret;
    }
    rm.stable = proposals_stable(market, proposals);
    if (enumerated) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& s : stable) best = std::min(best, l1_to_pure(profile, s.partners()));
      rm.dist = best;
    }
    return rm;
  }
};

inline std::vector<Rng> man_streams(std::uint64_t master, int replication, int n) {
  std::vector<Rng> out;
  out.reserve(n);
  for (int m = 0; m < n; ++m) {
    out.emplace_back(derive_seed(master, replication, stream::kManBase + m));
  }
  return out;
}

inline std::vector<double> baseline_utilities(const Market& market, std::span<const int> baselines,
                                              int m) {
  return gradient(market, baselines, m);
}

}  // namespace detail

/// Throws std::invalid_argument when the configuration is inconsistent with
/// the market.
inline void validate_run_config(const RunConfig& cfg, const Market& market) {
  if (cfg.horizon < 1) throw std::invalid_argument("run: horizon must be >= 1");
  if (cfg.replications < 1) throw std::invalid_argument("run: replications must be >= 1");
  const int n = market.size();
  if (cfg.learner == LearnerKind::kTrial) {
    const auto& t = cfg.trial;
    if (!(t.eps > 0.0 && t.eps < 1.0)) throw std::invalid_argument("trial: eps must lie in (0, 1)");
    if (!(t.omega > 0.0 && t.omega < 1.0)) throw std::invalid_argument("trial: omega must lie in (0, 1)");
    if (!(t.delta > 0.0)) throw std::invalid_argument("trial: delta must be > 0");
    if (!t.tau.empty() && t.tau.size() != 1 && static_cast<int>(t.tau.size()) != n) {
      throw std::invalid_argument("trial: tau must be a scalar or have one entry per man");
    }
    for (auto v : t.tau) {
      if (v < 1) throw std::invalid_argument("trial: tau must be >= 1");
    }
    if (t.theorem6) {
      validate_convergence_params({t.eps, t.delta, t.omega, 0}, n, market.gap(), t.p);
    }
  }
  if (cfg.learner == LearnerKind::kMonotone && cfg.monotone.beta < 0.0) {
    throw std::invalid_argument("monotone: beta must be >= 0");
  }
}

/// One replication. Replication r seeds every stream from
/// derive_seed(cfg.seed, r, stream id); each man owns one stream.
inline Trajectory run_replication(const RunConfig& cfg, const Market& market, int replication) {
  validate_run_config(cfg, market);
  const int n = market.size();
  const std::int64_t T = cfg.horizon;
  Trajectory traj;
  traj.replication = replication;
  traj.seed = derive_seed(cfg.seed, replication, stream::kEnvironment);
  traj.rounds.reserve(static_cast<std::size_t>(T));
  traj.metrics.reserve(static_cast<std::size_t>(T));
  Rng env(traj.seed);
  Rng init(derive_seed(cfg.seed, replication, stream::kInit));
  auto rngs = detail::man_streams(cfg.seed, replication, n);
  detail::MetricContext ctx(market);
  PureProfile proposals(n, kNoProposal);

  auto play = [&](std::int64_t t, const Matrix& profile, std::optional<double> eta,
                  std::optional<double> gamma) -> const RoundOutcome& {
    traj.rounds.push_back(resolve_round(market, proposals, env, cfg.feedback));
    RoundMetrics rm = ctx.measure(market, proposals, profile);
    rm.eta = eta;
    rm.gamma = gamma;
    traj.metrics.push_back(rm);
    (void)t;
    return traj.rounds.back();
  };

  switch (cfg.learner) {
    case LearnerKind::kExp: {
      const ScheduleSpec schedule = make_schedule(cfg.exp, market, T);
      std::vector<ExpLearner> men;
      for (int m = 0; m < n; ++m) {
        men.emplace_back(m, n, schedule);
        if (cfg.exp.gap_oracle) men.back().enable_gap_oracle(T);
      }
      Matrix profile(n, n);
      for (std::int64_t t = 1; t <= T; ++t) {
        double gamma_sum = 0.0;
        for (int m = 0; m < n; ++m) {
          const auto x = men[m].strategy();
          const double g = men[m].gamma();
          gamma_sum += g;
          std::copy(x.begin(), x.end(), profile.row(m).begin());
          proposals[m] = sample_index(rngs[m], adjust(x, g));
        }
        const auto& round = play(t, profile, schedule.eta(static_cast<double>(t)), gamma_sum / n);
        for (int m = 0; m < n; ++m) {
          const auto fb = feedback_for(round, t, m);
          men[m].observe({fb.proposal, fb.accepted, fb.reward.value_or(0.0)});
        }
      }
      break;
    }
    case LearnerKind::kTrial: {
      const auto& tc = cfg.trial;
      std::vector<TrialLearnerState> men;
      for (int m = 0; m < n; ++m) {
        TrialParams params{tc.eps, tc.delta, tc.omega, 0};
        if (tc.tau.size() == 1) params.tau = tc.tau.front();
        if (static_cast<int>(tc.tau.size()) == n && n > 1) params.tau = tc.tau[m];
        men.push_back(TrialLearnerState::initial(m, n, uniform_int(init, n), params));
      }
      std::vector<std::vector<double>> expected(n);
      auto snapshot = [&](int m) {
        PureProfile base(n);
        for (int k = 0; k < n; ++k) base[k] = men[k].baseline;
        expected[m] = detail::baseline_utilities(market, base, m);
      };
      if (tc.diagnostics) {
        for (int m = 0; m < n; ++m) snapshot(m);
      }
      for (std::int64_t t = 1; t <= T; ++t) {
        for (int m = 0; m < n; ++m) proposals[m] = trial_act(men[m], rngs[m]);
        PureProfile base(n);
        for (int m = 0; m < n; ++m) base[m] = men[m].baseline;
        const auto& round = play(t, one_hot(base, n), std::nullopt, std::nullopt);
        for (int m = 0; m < n; ++m) {
          const auto fb = feedback_for(round, t, m);
          trial_record(men[m], fb.proposal, fb.accepted, fb.reward.value_or(0.0));
          if (men[m].episode_done()) {
            auto report = trial_end_episode(men[m], rngs[m]);
            if (tc.diagnostics) {
              traj.episodes.push_back({m, std::move(report), expected[m]});
              snapshot(m);
            }
          }
        }
      }
      break;
    }
    case LearnerKind::kBestResponse: {
      if (cfg.best_response.random_start) {
        for (int m = 0; m < n; ++m) proposals[m] = uniform_int(init, n);
        if (!is_good_state(market, proposals)) {
          traj.warnings.push_back("random start is not a good state; convergence is not guaranteed");
        }
      }
      for (std::int64_t t = 1; t <= T; ++t) {
        const PureProfile current = proposals;
        play(t, one_hot(current, n), std::nullopt, std::nullopt);
        const auto unsat = unsatisfied_men(market, current);
        if (unsat.empty()) continue;
        std::vector<int> movers;
        switch (cfg.best_response.updates) {
          case UpdateRule::kSimultaneous: movers = unsat; break;
          case UpdateRule::kSequential: movers = {unsat.front()}; break;
          case UpdateRule::kRandom: movers = random_updates(init)(current, unsat); break;
        }
        for (int m : movers) {
          if (is_unsatisfied(market, current, m)) proposals[m] = best_response(market, current, m);
        }
      }
      break;
    }
    case LearnerKind::kMonotone: {
      const double beta = cfg.monotone.beta > 0.0 ? cfg.monotone.beta : n * market.mu_max();
      const RegularizedGame game(market, beta);
      if (!game.monotone_certified()) {
        traj.warnings.push_back("beta <= n mu_max / 2: game not certified monotone");
      }
      const double step = cfg.monotone.step > 0.0 ? cfg.monotone.step : max_solver_step(game);
      Matrix x = MixedProfile::uniform(n).matrix();
      for (std::int64_t t = 1; t <= T; ++t) {
        for (int m = 0; m < n; ++m) proposals[m] = sample_index(rngs[m], x.row(m));
        play(t, x, std::nullopt, std::nullopt);
        const Matrix f = regularized_field(game, x);
        for (int m = 0; m < n; ++m) {
          std::vector<double> y(n);
          for (int w = 0; w < n; ++w) y[w] = x(m, w) + step * f(m, w);
          const auto p = simplex_project(y);
          std::copy(p.begin(), p.end(), x.row(m).begin());
        }
      }
      break;
    }
  }
  return traj;
}

/// All replications, in order.
inline std::vector<Trajectory> run(const RunConfig& cfg) {
  const Market market = resolve_market(cfg);
  validate_run_config(cfg, market);
  std::vector<Trajectory> out;
  out.reserve(cfg.replications);
  for (int r = 0; r < cfg.replications; ++r) out.push_back(run_replication(cfg, market, r));
  return out;
}

// ---------------------------------------------------------------------------
// Summary statistics.

/// Fraction of stable rounds among the last ceil(T / 10).
inline double stability_rate_last_decade(const Trajectory& traj) {
  const std::size_t T = traj.metrics.size();
  if (T == 0) return 0.0;
  const std::size_t len = (T + 9) / 10;
  std::size_t hits = 0;
  for (std::size_t i = T - len; i < T; ++i) hits += traj.metrics[i].stable ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(len);
}

/// Least-squares slope b of R(t) = a + b log t over t = 1, 2, 4, ..., T.
inline std::optional<double> regret_log_slope(std::span<const double> regret) {
  std::vector<double> xs, ys;
  for (std::size_t t = 1; t <= regret.size(); t *= 2) {
    xs.push_back(std::log(static_cast<double>(t)));
    ys.push_back(regret[t - 1]);
  }
  if (xs.size() < 2) return std::nullopt;
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

/// Mean cumulative regret across replications; empty when no replication
/// tracks regret.
inline std::vector<double> mean_regret_curve(std::span<const Trajectory> trajs) {
  if (trajs.empty() || trajs.front().metrics.empty() || !trajs.front().metrics.front().regret) {
    return {};
  }
  const std::size_t T = trajs.front().metrics.size();
  std::vector<double> mean(T, 0.0);
  for (const auto& tr : trajs) {
    for (std::size_t i = 0; i < T; ++i) mean[i] += static_cast<double>(*tr.metrics[i].regret);
  }
  for (double& v : mean) v /= static_cast<double>(trajs.size());
  return mean;
}

/// max over pairs of the reward second moment.
inline double reward_sigma2(const Market& market) {
  double s = 0.0;
  for (int m = 0; m < market.size(); ++m) {
    for (int w = 0; w < market.size(); ++w) {
      s = std::max(s, reward_second_moment(market.reward_dist(), market.mu(m, w)));
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Local convergence probe.

/// First t >= 1 with 1/eta(t+1) - 1/eta(t) <= c / (ln(n^2 / (2c)) + 3),
/// found by bisection; the left side is nonincreasing for the supported
/// schedules (eta = s t^-alpha with alpha <= 1).
inline std::int64_t local_start_round(const ScheduleSpec& schedule, int n, double c) {
  const double bound = c / (std::log(n * n / (2.0 * c)) + 3.0);
  auto ok = [&](std::int64_t t) {
    return schedule.inverse_eta_increment(static_cast<double>(t)) <= bound;
  };
  if (ok(1)) return 1;
  std::int64_t lo = 1, hi = 2;
  while (!ok(hi)) {
    lo = hi;
    if (hi > (std::int64_t{1} << 61)) throw std::domain_error("local_start_round: no valid t0");
    hi *= 2;
  }
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

/// 41 n exp(-c t eta(t+1)).
inline double local_envelope(const ScheduleSpec& s, int n, double c, std::int64_t t) {
  const double a = static_cast<double>(t);
  return 41.0 * n * std::exp(-c * a * s.eta(a + 1.0));
}

/// 2 n exp(3 - c t eta(t+1)), the envelope reached at the end of the proof.
inline double local_envelope_proof(const ScheduleSpec& s, int n, double c, std::int64_t t) {
  const double a = static_cast<double>(t);
  return 2.0 * n * std::exp(3.0 - c * a * s.eta(a + 1.0));
}

struct ProbeOptions {
  double radius = 0.0;  // 0 selects c / (250 n^2)
  ScheduleSpec schedule = ScheduleSpec::local();
  std::int64_t rounds = 1000;  // rounds played after t0
  int replications = 100;
  std::uint64_t seed = 0;
  std::optional<std::int64_t> start_round;  // overrides the computed t0
};

struct ProbeReplication {
  bool within_envelope = true;
  std::int64_t violations = 0;
  double final_distance = 0.0;
  double max_ratio = 0.0;  // max over t of distance / envelope
  double log_distance_slope = 0.0;  // slope of log distance against t eta(t+1)
};

struct ProbeReport {
  double c = 0.0;
  double radius = 0.0;
  std::int64_t t0 = 0;
  std::vector<ProbeReplication> replications;
  std::vector<std::string> warnings;
  double envelope_violation_fraction = 0.0;
  double proof_envelope_violation_fraction = 0.0;
};

/// Scores putting every man within radius of x_star once the logit is
/// taken at step size eta(t0): D / eta(t0) on his partner and 0 elsewhere,
/// with D = ln(2 n (n - 1) / radius).
inline std::vector<double> local_initial_scores(int n, int partner, double eta0, double radius) {
  std::vector<double> s(n, 0.0);
  if (n > 1) s[partner] = std::log(2.0 * n * (n - 1) / radius) / eta0;
  return s;
}

/// Runs EXP learners started within `radius` of the pure NE x_star at round
/// t0 and tracks |X^{t+1} - X*|_1 against the envelope for t >= t0.
inline ProbeReport local_convergence_probe(const Market& market, const Matching& x_star,
                                           const ProbeOptions& opts) {
  const int n = market.size();
  if (!x_star.is_perfect() || x_star.size() != n) {
    throw std::invalid_argument("probe: x_star must be a perfect matching");
  }
  if (!is_pure_ne(market, x_star.partners()).certified()) {
    throw std::invalid_argument("probe: x_star is not a pure NE");
  }
  if (opts.rounds < 1 || opts.replications < 1) {
    throw std::invalid_argument("probe: rounds and replications must be >= 1");
  }
  ProbeReport rep;
  rep.c = market.local_constant();
  const double admissible = rep.c / (250.0 * n * n);
  rep.radius = opts.radius > 0.0 ? opts.radius : admissible;
  if (rep.radius > admissible) {
    rep.warnings.push_back("radius exceeds c / (250 n^2); outside the theorem's hypothesis");
  }
  rep.t0 = opts.start_round ? *opts.start_round : local_start_round(opts.schedule, n, rep.c);
  const double eta0 = opts.schedule.eta(static_cast<double>(rep.t0));
  std::int64_t proof_violations = 0;
  for (int r = 0; r < opts.replications; ++r) {
    Rng env(derive_seed(opts.seed, r, stream::kEnvironment));
    auto rngs = detail::man_streams(opts.seed, r, n);
    std::vector<ExpLearner> men;
    for (int m = 0; m < n; ++m) {
      men.emplace_back(m, n, opts.schedule, rep.t0);
      men.back().set_scores(local_initial_scores(n, x_star.woman_of(m), eta0, rep.radius));
    }
    ProbeReplication pr;
    std::vector<double> xs, ys;
    bool proof_ok = true;
    PureProfile proposals(n);
    for (std::int64_t k = 0; k < opts.rounds; ++k) {
      const std::int64_t t = rep.t0 + k;
      for (int m = 0; m < n; ++m) proposals[m] = men[m].act(rngs[m]);
      const auto round = resolve_round(market, proposals, env);
      for (int m = 0; m < n; ++m) {
        const auto fb = feedback_for(round, t, m);
        men[m].observe({fb.proposal, fb.accepted, fb.reward.value_or(0.0)});
      }
      double d = 0.0;
      for (int m = 0; m < n; ++m) {
        const auto x = men[m].strategy();
        for (int w = 0; w < n; ++w) d += std::abs(x[w] - (w == x_star.woman_of(m) ? 1.0 : 0.0));
      }
      const double env41 = local_envelope(opts.schedule, n, rep.c, t);
      if (d > env41) {
        pr.within_envelope = false;
        ++pr.violations;
      }
      if (d > local_envelope_proof(opts.schedule, n, rep.c, t)) proof_ok = false;
      pr.max_ratio = std::max(pr.max_ratio, d / env41);
      pr.final_distance = d;
      if (d > 0.0) {
        const double a = static_cast<double>(t);
        xs.push_back(a * opts.schedule.eta(a + 1.0));
        ys.push_back(std::log(d));
      }
    }
    if (xs.size() >= 2) {
      const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
      const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
      double sxy = 0.0, sxx = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
      }
      pr.log_distance_slope = sxx > 0.0 ? sxy / sxx : 0.0;
    }
    if (!proof_ok) ++proof_violations;
    rep.replications.push_back(pr);
  }
  const auto bad = std::count_if(rep.replications.begin(), rep.replications.end(),
                                 [](const ProbeReplication& p) { return !p.within_envelope; });
  rep.envelope_violation_fraction = static_cast<double>(bad) / opts.replications;
  rep.proof_envelope_violation_fraction = static_cast<double>(proof_violations) / opts.replications;
  return rep;
}

}  // namespace decmatch
