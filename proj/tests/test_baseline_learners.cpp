#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "decmatch/baseline_learners.hpp"
#include "decmatch/equilibrium.hpp"
#include "decmatch/generators.hpp"
#include "decmatch/ucb.hpp"
#include "oracles.hpp"

using namespace decmatch;

namespace {

TrialLearnerState trial_state(int n, int baseline, double eps, double delta = 0.1,
                              double omega = 0.5, std::int64_t tau = 10) {
  return TrialLearnerState::initial(0, n, baseline, {eps, delta, omega, tau});
}

/// Random pure profile with sink actions, repaired into a good state by
/// sending every matched man that wants to deviate to the sink.
PureProfile random_good_state(const Market& mk, std::mt19937_64& rng) {
  const int n = mk.size();
  std::uniform_int_distribution<int> d(-1, n - 1);
  PureProfile a(n);
  for (int& v : a) v = d(rng);
  for (bool changed = true; changed;) {
    changed = false;
    for (int m = 0; m < n; ++m) {
      if (is_matched(mk, a, m) && is_unsatisfied(mk, a, m)) {
        a[m] = kNoProposal;
        changed = true;
      }
    }
  }
  return a;
}

}  // namespace

TEST(TrialAct, EpsZeroAlwaysBaseline) {
  auto st = trial_state(4, 2, 0.0);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(trial_act(st, rng), 2);
}

TEST(TrialAct, BaselineFrequency) {
  const double eps = 0.3;
  const int n = 4;
  auto st = trial_state(n, 1, eps);
  Rng rng(2);
  const int draws = 100000;
  int hits = 0;
  for (int i = 0; i < draws; ++i) hits += trial_act(st, rng) == 1;
  const double p = 1.0 - eps + eps / n;
  EXPECT_NEAR(static_cast<double>(hits) / draws, p, 3.0 * std::sqrt(p * (1 - p) / draws));
}

TEST(TrialAct, EpsOneUniform) {
  auto st = trial_state(5, 0, 1.0);
  Rng rng(3);
  const int draws = 100000;
  std::vector<int> c(5, 0);
  for (int i = 0; i < draws; ++i) ++c[trial_act(st, rng)];
  double chi2 = 0.0;
  for (int v : c) chi2 += std::pow(v - draws / 5.0, 2) / (draws / 5.0);
  EXPECT_LT(chi2, 18.47);  // 0.999 quantile, 4 degrees of freedom
}

TEST(TrialEpisode, EqualUtilitiesKeepBaseline) {
  auto st = trial_state(3, 0, 0.5, 0.1, 0.5, 6);
  Rng rng(4);
  for (int w : {0, 1, 2, 0, 1, 2}) trial_record(st, w, true, 0.5);
  const auto rep = trial_end_episode(st, rng);
  EXPECT_TRUE(rep.candidates.empty());
  EXPECT_EQ(st.baseline, 0);
  EXPECT_EQ(st.episode, 2);
  EXPECT_EQ(st.rounds, 0);
  EXPECT_EQ(std::accumulate(st.counts.begin(), st.counts.end(), std::int64_t{0}), 0);
}

TEST(TrialEpisode, BetterArmAdoptedWithProbabilityOneMinusOmega) {
  const double omega = 0.3;
  Rng rng(5);
  const int trials = 20000;
  int switched = 0;
  for (int i = 0; i < trials; ++i) {
    auto st = trial_state(2, 0, 0.5, 0.1, omega, 4);
    trial_record(st, 0, true, 0.2);
    trial_record(st, 0, true, 0.2);
    trial_record(st, 1, true, 0.4);  // baseline + 2 delta
    trial_record(st, 1, true, 0.4);
    const auto rep = trial_end_episode(st, rng);
    EXPECT_EQ(rep.candidates, (std::vector<int>{1}));
    switched += st.baseline == 1;
  }
  EXPECT_NEAR(static_cast<double>(switched) / trials, 1.0 - omega,
              3.0 * std::sqrt(omega * (1 - omega) / trials));
}

TEST(TrialEpisode, RejectionsCountAsZeroAndUnplayedExcluded) {
  auto st = trial_state(3, 0, 0.5, 0.1, 0.01, 4);
  Rng rng(6);
  trial_record(st, 0, true, 0.5);
  trial_record(st, 0, true, 0.5);
  trial_record(st, 1, true, 0.9);
  trial_record(st, 1, false, 0.0);  // average 0.45: not a candidate
  const auto rep = trial_end_episode(st, rng);
  EXPECT_DOUBLE_EQ(rep.utilities[1], 0.45);
  EXPECT_TRUE(std::isnan(rep.utilities[2]));
  EXPECT_TRUE(rep.candidates.empty());
}

TEST(TrialEpisode, RequiresFullEpisode) {
  auto st = trial_state(2, 0, 0.5, 0.1, 0.5, 3);
  Rng rng(7);
  trial_record(st, 0, true, 0.5);
  EXPECT_THROW(trial_end_episode(st, rng), std::logic_error);
}

TEST(TrialParams, DefaultsAndConvergenceBounds) {
  EXPECT_EQ(TrialParams::default_episode_length(3, 0.01), 200 * 9 * 100);
  EXPECT_EQ(TrialParams::default_episode_length(2, 0.3), 200 * 4 * 4);
  EXPECT_DOUBLE_EQ(TrialParams::max_eps(3, 0.2, 0.1, 0.9), std::min({0.1 / 3, 0.1 / 12, 0.1 / 12}));
  EXPECT_NO_THROW(validate_convergence_params({0.008, 0.1, 0.5, 0}, 3, 0.2, 0.9));
  EXPECT_THROW(validate_convergence_params({0.008, 0.2, 0.5, 0}, 3, 0.2, 0.9), std::invalid_argument);
  EXPECT_THROW(validate_convergence_params({0.05, 0.1, 0.5, 0}, 3, 0.2, 0.9), std::invalid_argument);
}

TEST(TrialDynamics, NeBaselinesAreAbsorbingWithoutExploration) {
  // Deterministic rewards, eps = 0: every man only ever plays his baseline.
  const Market mk = gen_general(4, 3, 0.1, {RewardKind::kDeterministic, 10.0});
  const Matching ne = deferred_acceptance(mk);
  std::vector<TrialLearnerState> men;
  for (int m = 0; m < 4; ++m) men.push_back(TrialLearnerState::initial(m, 4, ne.woman_of(m), {0.0, 0.05, 0.5, 20}));
  Rng rng(8);
  for (int t = 0; t < 2000; ++t) {
    std::vector<int> a(4);
    for (int m = 0; m < 4; ++m) a[m] = trial_act(men[m], rng);
    const auto top = top_proposers(mk, a);
    for (int m = 0; m < 4; ++m) {
      const bool acc = top[a[m]] == m;
      trial_record(men[m], a[m], acc, acc ? mk.mu(m, a[m]) : 0.0);
      if (men[m].episode_done()) trial_end_episode(men[m], rng);
    }
  }
  for (int m = 0; m < 4; ++m) EXPECT_EQ(men[m].baseline, ne.woman_of(m));
}

TEST(BestResponse, Example1Case) {
  const auto ex = example1_market(0.1);
  // m2 on w3 and m3 on w2; m1 tops w2's list so his values are (2, 1, 0).
  const std::vector<int> a = {kNoProposal, 2, 1};
  EXPECT_EQ(gradient(ex.market, a, 0), (std::vector<double>{2.0, 1.0, 0.0}));
  EXPECT_EQ(best_response(ex.market, a, 0), 0);
}

TEST(BestResponse, EmptyProfilePicksTopWoman) {
  const Market mk = gen_hierarchical(4, 2);
  const std::vector<int> empty(4, kNoProposal);
  for (int m = 0; m < 4; ++m) EXPECT_EQ(best_response(mk, empty, m), men_preference_order(mk, m)[0]);
}

TEST(BestResponse, PureNeIsFixed) {
  std::mt19937_64 rng(3);
  const Market mk = oracle::random_market(5, rng);
  const auto s = deferred_acceptance(mk);
  for (int m = 0; m < 5; ++m) EXPECT_EQ(best_response(mk, s.partners(), m), s.woman_of(m));
  EXPECT_TRUE(unsatisfied_men(mk, s.partners()).empty());
}

TEST(BestResponsePath, StartAtNeHasNoSteps) {
  std::mt19937_64 rng(4);
  const Market mk = oracle::random_market(4, rng);
  const auto path = best_response_path(mk, deferred_acceptance(mk).partners(), simultaneous_updates());
  EXPECT_EQ(path.steps(), 0u);
  EXPECT_TRUE(path.converged);
}

TEST(BestResponsePath, RefusesBadStart) {
  const Market mk = Market::create(Matrix::from_rows({{0.9, 0.4}, {0.3, 0.8}}), {{1, 0}, {0, 1}});
  // m0 alone at w1 is matched but prefers the free w0.
  EXPECT_FALSE(is_good_state(mk, std::vector<int>{1, kNoProposal}));
  EXPECT_THROW(best_response_path(mk, {1, kNoProposal}, simultaneous_updates()), std::invalid_argument);
}

TEST(BestResponsePath, FromEmptyReachesStableMatching) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 6;
    const Market mk = oracle::random_market(n, rng);
    const auto path = best_response_path(mk, PureProfile(n, kNoProposal), simultaneous_updates());
    ASSERT_TRUE(path.converged);
    EXPECT_LE(path.steps(), static_cast<std::size_t>(n * n));
    EXPECT_TRUE(oracle::stable(mk, path.profiles.back()));
  }
}

TEST(BestResponsePath, PropertyRandomUpdaters) {
  std::mt19937_64 rng(6);
  Rng sched_rng(7);
  const auto random_sched = random_updates(sched_rng);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 6;
    const Market mk = oracle::random_market(n, rng);
    const auto start = random_good_state(mk, rng);
    const auto& sched = trial % 3 == 0 ? random_sched : trial % 3 == 1 ? simultaneous_updates() : sequential_updates();
    const auto path = best_response_path(mk, start, sched);
    ASSERT_TRUE(path.converged);
    EXPECT_LE(path.steps(), static_cast<std::size_t>(n * n));
    for (std::size_t i = 1; i < path.potentials.size(); ++i) {
      EXPECT_GT(path.potentials[i], path.potentials[i - 1]);
    }
    EXPECT_TRUE(is_pure_ne(mk, path.profiles.back()).certified());
  }
}

TEST(WeakAcyclicity, AllOnFirstWomanReachesStableMatching) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 5;
    const Market mk = oracle::random_market(n, rng);
    const auto path = weak_acyclicity_witness(mk, PureProfile(n, 0));
    ASSERT_TRUE(path.converged);
    EXPECT_LE(path.steps(), static_cast<std::size_t>(2 * n * n));
    EXPECT_TRUE(oracle::stable(mk, path.profiles.back()));
  }
}

TEST(WeakAcyclicity, PropertyArbitraryStarts) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 6;
    const Market mk = oracle::random_market(n, rng);
    std::uniform_int_distribution<int> d(-1, n - 1);
    PureProfile start(n);
    for (int& v : start) v = d(rng);
    const auto path = weak_acyclicity_witness(mk, start);
    ASSERT_TRUE(path.converged);
    EXPECT_LE(path.steps(), static_cast<std::size_t>(2 * n * n));
    EXPECT_TRUE(is_pure_ne(mk, path.profiles.back()).certified());
    // Every step is a strict improvement for the man who moved.
    for (std::size_t i = 1; i < path.profiles.size(); ++i) {
      const auto& prev = path.profiles[i - 1];
      const auto& next = path.profiles[i];
      for (int m = 0; m < n; ++m) {
        if (prev[m] != next[m]) {
          EXPECT_TRUE(is_unsatisfied(mk, prev, m));
        }
      }
    }
  }
}

TEST(WeakAcyclicity, NeStartIsEmptyPath) {
  std::mt19937_64 rng(10);
  const Market mk = oracle::random_market(4, rng);
  EXPECT_EQ(weak_acyclicity_witness(mk, deferred_acceptance(mk).partners()).steps(), 0u);
}

TEST(Ucb, NoMatchesGivesZeroGap) {
  const UcbState s(3);
  EXPECT_EQ(ucb_gap(s, 10), 0.0);
  const auto b = ucb_bounds(s, 10);
  EXPECT_EQ(b.upper, (std::vector<double>{1, 1, 1}));
  EXPECT_EQ(b.lower, (std::vector<double>{0, 0, 0}));
}

TEST(Ucb, TwoArmClosedForm) {
  UcbState s(2);
  s.matches = {4000, 4000};
  s.reward_sum = {3600, 400};
  s.t = 10000;
  const double width = std::sqrt(2.0 * std::log(10000.0) / 4000.0);
  const auto gaps = ucb_arm_gaps(s, 10000);
  EXPECT_NEAR(gaps[0], 0.8 - 2.0 * width, 1e-12);
  EXPECT_EQ(gaps[1], 0.0);
  EXPECT_EQ(ucb_gap(s, 10000), 0.0);
  EXPECT_NEAR(ucb_separation(s, 10000), 0.8 - 2.0 * width, 1e-12);
}

TEST(Ucb, CountersMoveOnlyOnMatches) {
  UcbState s(2);
  s = ucb_update(std::move(s), 0, false, 0.0);
  s = ucb_update(std::move(s), 1, true, 0.7);
  EXPECT_EQ(s.t, 2);
  EXPECT_EQ(s.matches, (std::vector<std::int64_t>{0, 1}));
  EXPECT_DOUBLE_EQ(s.mean(1), 0.7);
}

TEST(Ucb, GapNonnegativeAndMeansConsistent) {
  Rng rng(11);
  UcbState s(3);
  const double mu[3] = {0.2, 0.5, 0.85};
  for (int i = 0; i < 30000; ++i) {
    const int w = i % 3;
    s = ucb_update(std::move(s), w, true, bernoulli(rng, mu[w]) ? 1.0 : 0.0);
    if (i % 997 == 0) {
      EXPECT_GE(ucb_gap(s, s.t), 0.0);
    }
  }
  for (int w = 0; w < 3; ++w) {
    EXPECT_NEAR(s.mean(w), mu[w], 3.0 * std::sqrt(mu[w] * (1 - mu[w]) / s.matches[w]));
  }
}
