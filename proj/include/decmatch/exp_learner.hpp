#pragma once

// Exponential-weights learner for one man. Each round he proposes from a
// mixture of the logit of his scores and the uniform distribution, observes
// only whether he was accepted and the reward, and adds the importance
// weighted reward to the score of the woman he proposed to.

#include <algorithm>
#include <cmath>
#include <cstdint>
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

/// Mixing rates are clamped below 1 by this margin.
inline constexpr double kMixingCeiling = 1.0 - 1e-9;

enum class ScheduleKind { kTheorem3, kLocal, kCustom };

inline const char* to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kTheorem3: return "theorem3";
    case ScheduleKind::kLocal: return "local";
    case ScheduleKind::kCustom: return "custom";
  }
  return "unknown";
}

inline ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "theorem3") return ScheduleKind::kTheorem3;
  if (s == "local") return ScheduleKind::kLocal;
  if (s == "custom") return ScheduleKind::kCustom;
  throw std::invalid_argument("unknown schedule kind '" + s + "'");
}

/// Step size eta(t) and mixing rate gamma(t).
///
///   theorem3: eta = 1/sqrt(t), gamma = M log(max(t, 2)) / t
///   local:    eta = t^(-3/4),  gamma = t^(-1/3)
///   custom:   eta = eta_scale t^(-alpha), gamma = gamma_scale t^(-beta)
///
/// gamma is always clamped to kMixingCeiling.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::kTheorem3;
  double mixing_constant = 1.0;  // M
  double gap_constant = 0.0;     // c used to derive M, 0 when M was given
  std::int64_t horizon = 0;
  double alpha = 0.75;
  double beta = 1.0 / 3.0;
  double eta_scale = 1.0;
  double gamma_scale = 1.0;

  /// M = (4n / c) log T.
  static ScheduleSpec theorem3(int n, double c, std::int64_t horizon) {
    if (!(c > 0.0)) throw std::invalid_argument("schedule: c must be > 0");
    if (horizon < 2) throw std::invalid_argument("schedule: horizon must be >= 2");
    ScheduleSpec s;
    s.kind = ScheduleKind::kTheorem3;
    s.gap_constant = c;
    s.horizon = horizon;
    s.mixing_constant = 4.0 * n / c * std::log(static_cast<double>(horizon));
    return s;
  }

  /// theorem3 shape with an explicit M.
  static ScheduleSpec theorem3_with_constant(double mixing_constant, std::int64_t horizon = 0) {
    if (!(mixing_constant > 0.0)) throw std::invalid_argument("schedule: M must be > 0");
    ScheduleSpec s;
    s.kind = ScheduleKind::kTheorem3;
    s.mixing_constant = mixing_constant;
    s.horizon = horizon;
    return s;
  }

  static ScheduleSpec local() {
    ScheduleSpec s;
    s.kind = ScheduleKind::kLocal;
    s.alpha = 0.75;
    s.beta = 1.0 / 3.0;
    return s;
  }

  static ScheduleSpec custom(double alpha, double beta, double eta_scale = 1.0,
                             double gamma_scale = 1.0) {
    if (!(alpha >= 0.0) || !(beta > 0.0) || !(eta_scale > 0.0) || !(gamma_scale > 0.0)) {
      throw std::invalid_argument("schedule: custom exponents and scales must be positive");
    }
    ScheduleSpec s;
    s.kind = ScheduleKind::kCustom;
    s.alpha = alpha;
    s.beta = beta;
    s.eta_scale = eta_scale;
    s.gamma_scale = gamma_scale;
    return s;
  }

  /// eta(t) = eta_coefficient() * t^-eta_exponent() for every kind.
  double eta_exponent() const {
    switch (kind) {
      case ScheduleKind::kTheorem3: return 0.5;
      case ScheduleKind::kLocal: return 0.75;
      case ScheduleKind::kCustom: return alpha;
    }
    return 0.0;
  }
  double eta_coefficient() const { return kind == ScheduleKind::kCustom ? eta_scale : 1.0; }

  /// 1/eta(t+1) - 1/eta(t), without the cancellation of the direct form.
  double inverse_eta_increment(double t) const {
    const double a = eta_exponent();
    return std::pow(t, a) / eta_coefficient() * std::expm1(a * std::log1p(1.0 / t));
  }

  double eta(double t) const {
    switch (kind) {
      case ScheduleKind::kTheorem3: return 1.0 / std::sqrt(t);
      case ScheduleKind::kLocal: return std::pow(t, -0.75);
      case ScheduleKind::kCustom: return eta_scale * std::pow(t, -alpha);
    }
    return 0.0;
  }

  double gamma(double t) const {
    double g = 0.0;
    switch (kind) {
      case ScheduleKind::kTheorem3:
        g = mixing_constant * std::log(std::max(t, 2.0)) / t;
        break;
      case ScheduleKind::kLocal: g = std::pow(t, -1.0 / 3.0); break;
      case ScheduleKind::kCustom: g = gamma_scale * std::pow(t, -beta); break;
    }
    return std::min(g, kMixingCeiling);
  }
};

struct ExpLearnerState {
  int man = 0;
  std::vector<double> scores;  // raw cumulative estimates, not eta-scaled
  std::int64_t t = 1;          // round about to be played
  ScheduleSpec schedule;

  static ExpLearnerState initial(int man, int n, ScheduleSpec schedule,
                                 std::int64_t start_round = 1) {
    if (start_round < 1) throw std::invalid_argument("exp learner: rounds start at 1");
    return {man, std::vector<double>(n, 0.0), start_round, schedule};
  }
};

/// softmax(eta * scores) with max-subtraction. Adding a constant to every
/// score leaves the result unchanged.
inline std::vector<double> softmax(std::span<const double> scores, double eta) {
  std::vector<double> out(scores.size());
  const double top = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(eta * (scores[i] - top));
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

/// X^t: the logit of the previous round's scores at step size eta(t).
inline std::vector<double> logit_strategy(const ExpLearnerState& state) {
  return softmax(state.scores, state.schedule.eta(static_cast<double>(state.t)));
}

/// (1 - gamma) x + gamma / n. Every entry of the result is >= gamma / n.
inline std::vector<double> adjust(std::span<const double> x, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("adjust: gamma must lie in (0, 1]");
  }
  const double floor = gamma / static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (1.0 - gamma) * x[i] + floor;
  return out;
}

/// Importance-weighted gradient estimate: reward / x_hat at the woman
/// proposed to when accepted, zero everywhere else.
inline std::vector<double> make_estimate(int n, int proposed, bool accepted, double reward,
                                         double x_hat) {
  if (!(x_hat > 0.0)) throw std::invalid_argument("make_estimate: x_hat must be > 0");
  if (proposed < 0 || proposed >= n) throw std::out_of_range("make_estimate: woman index");
  std::vector<double> v(n, 0.0);
  if (accepted) v[proposed] = reward / x_hat;
  return v;
}

/// What the engine tells one man about his own proposal.
struct ExpFeedback {
  int proposal = 0;
  bool accepted = false;
  double reward = 0.0;
};

/// One learner update: scores += estimate, t += 1. mixing_rate is the
/// gamma that produced this round's proposal.
inline ExpLearnerState exp_step(ExpLearnerState state, const ExpFeedback& fb,
                                double mixing_rate) {
  const auto x_hat = adjust(logit_strategy(state), mixing_rate);
  const int n = static_cast<int>(state.scores.size());
  const auto v = make_estimate(n, fb.proposal, fb.accepted, fb.reward, x_hat[fb.proposal]);
  for (int w = 0; w < n; ++w) state.scores[w] += v[w];
  ++state.t;
  return state;
}

inline ExpLearnerState exp_step(ExpLearnerState state, const ExpFeedback& fb) {
  const double g = state.schedule.gamma(static_cast<double>(state.t));
  return exp_step(std::move(state), fb, g);
}

/// Mixing rate driven by the man's own UCB statistics instead of a known c.
/// While no positive separation is certified the rate is
/// min(kMixingCeiling, log t / sqrt t).
struct GapOracle {
  UcbState ucb;
  std::int64_t horizon = 2;

  double mixing(std::int64_t t) const {
    const double td = static_cast<double>(std::max<std::int64_t>(t, 2));
    const double sep = ucb_separation(ucb, t);
    double lowest_mean = std::numeric_limits<double>::infinity();
    for (int w = 0; w < ucb.size(); ++w) {
      if (ucb.matches[w] > 0) lowest_mean = std::min(lowest_mean, ucb.mean(w));
    }
    const double c_hat = std::min(sep, lowest_mean) / 8.0;
    if (!(c_hat > 0.0) || !std::isfinite(c_hat)) {
      return std::min(kMixingCeiling, std::log(td) / std::sqrt(td));
    }
    const double m_hat = 4.0 * ucb.size() / c_hat *
                         std::log(static_cast<double>(std::max<std::int64_t>(horizon, 2)));
    return std::min(kMixingCeiling, m_hat * std::log(td) / td);
  }
};

/// Stateful wrapper: state, optional gap oracle, and the adjusted strategy
/// of the current round.
class ExpLearner {
 public:
  ExpLearner(int man, int n, ScheduleSpec schedule, std::int64_t start_round = 1)
      : state_(ExpLearnerState::initial(man, n, schedule, start_round)) {}

  void enable_gap_oracle(std::int64_t horizon) {
    oracle_ = GapOracle{UcbState(static_cast<int>(state_.scores.size())), horizon};
  }

  /// Overwrites the scores, e.g. to start near a given profile.
  void set_scores(std::vector<double> scores) { state_.scores = std::move(scores); }

  const ExpLearnerState& state() const noexcept { return state_; }
  double eta() const { return state_.schedule.eta(static_cast<double>(state_.t)); }
  double gamma() const {
    return oracle_ ? oracle_->mixing(state_.t)
                   : state_.schedule.gamma(static_cast<double>(state_.t));
  }
  std::vector<double> strategy() const { return logit_strategy(state_); }
  std::vector<double> adjusted() const { return adjust(strategy(), gamma()); }

  int act(Rng& rng) {
    const auto x_hat = adjusted();
    return sample_index(rng, x_hat);
  }

  void observe(const ExpFeedback& fb) {
    const double g = gamma();
    if (oracle_) oracle_->ucb = ucb_update(std::move(oracle_->ucb), fb.proposal, fb.accepted, fb.reward);
    state_ = exp_step(std::move(state_), fb, g);
  }

 private:
  ExpLearnerState state_;
  std::optional<GapOracle> oracle_;
};

/// Cumulative count of rounds whose proposal profile differs from target.
inline std::vector<std::int64_t> stable_regret(std::span<const PureProfile> proposals,
                                               const Matching& target) {
  std::vector<std::int64_t> out;
  out.reserve(proposals.size());
  std::int64_t r = 0;
  for (const auto& p : proposals) {
    if (p != target.partners()) ++r;
    out.push_back(r);
  }
  return out;
}

}  // namespace decmatch
