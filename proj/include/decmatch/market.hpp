#pragma once

// Market instance and the stable matching game defined over it.
//
// Men choose women; man m values woman w at mu(m, w) > 0 and woman w ranks
// men through women_rank[w] (most preferred first). In the stable matching
// game every man holds a distribution over women, and his payoff is the
// expected value of being accepted:
//
//   u_m(x) = sum_w mu(m, w) * prod_{k >_w m} (1 - x(k, w)) * x(m, w).
//
// The coefficient of x(m, w) above is the gradient v_mw(x); it does not
// depend on row m.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "decmatch/matrix.hpp"
#include "decmatch/rng.hpp"

namespace decmatch {

/// Marker for "man is not matched" and for the sink action "no proposal".
inline constexpr int kUnmatched = -1;
inline constexpr int kNoProposal = -1;

/// Absolute tolerance for simplex membership and payoff equality checks.
inline constexpr double kSimplexTol = 1e-12;

/// A pure profile: one woman index (or kNoProposal) per man.
using PureProfile = std::vector<int>;

enum class RewardKind { kBernoulli, kBeta, kDeterministic };

/// Reward distribution shared by every pair; its mean is always mu(m, w).
/// Beta uses shape (mu * concentration, (1 - mu) * concentration).
struct RewardDist {
  RewardKind kind = RewardKind::kBernoulli;
  double concentration = 10.0;

  friend bool operator==(const RewardDist&, const RewardDist&) = default;
};

inline std::string to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::kBernoulli: return "bernoulli";
    case RewardKind::kBeta: return "beta";
    case RewardKind::kDeterministic: return "deterministic";
  }
  return "unknown";
}

inline RewardKind reward_kind_from_string(const std::string& s) {
  if (s == "bernoulli") return RewardKind::kBernoulli;
  if (s == "beta") return RewardKind::kBeta;
  if (s == "deterministic") return RewardKind::kDeterministic;
  throw std::invalid_argument("unknown reward kind '" + s + "'");
}

/// Second moment E[r^2] of one reward draw with mean `mean`.
inline double reward_second_moment(const RewardDist& dist, double mean) {
  switch (dist.kind) {
    case RewardKind::kBernoulli: return mean;
    case RewardKind::kDeterministic: return mean * mean;
    case RewardKind::kBeta: {
      const double var = mean * (1.0 - mean) / (dist.concentration + 1.0);
      return var + mean * mean;
    }
  }
  return 0.0;
}

/// Complete-information market. Immutable after construction.
class Market {
 public:
  /// Validates and builds a market. Throws std::invalid_argument when mu is
  /// not n x n positive and tie-free per man, when some women_rank[w] is not
  /// a permutation, or when a stochastic reward kind meets mu > 1.
  static Market create(Matrix mu, std::vector<std::vector<int>> women_rank,
                       RewardDist dist = {}) {
    Market mk;
    const std::size_t n = mu.rows();
    if (n == 0) throw std::invalid_argument("market: n must be positive");
    if (mu.cols() != n) throw std::invalid_argument("market: mu must be n x n");
    if (women_rank.size() != n) {
      throw std::invalid_argument("market: women_rank must have n rows");
    }
    for (double v : mu.data()) {
      if (!std::isfinite(v) || v <= 0.0) {
        throw std::invalid_argument("market: every mu entry must be > 0");
      }
    }
    mk.rank_pos_.assign(n * n, -1);
    for (std::size_t w = 0; w < n; ++w) {
      if (women_rank[w].size() != n) {
        throw std::invalid_argument("market: women_rank rows must have n entries");
      }
      for (std::size_t pos = 0; pos < n; ++pos) {
        const int m = women_rank[w][pos];
        if (m < 0 || static_cast<std::size_t>(m) >= n ||
            mk.rank_pos_[w * n + m] != -1) {
          throw std::invalid_argument("market: women_rank[" + std::to_string(w) +
                                      "] is not a permutation");
        }
        mk.rank_pos_[w * n + m] = static_cast<int>(pos);
      }
    }
    mk.gap_ = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < n; ++m) {
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
          mk.gap_ = std::min(mk.gap_, std::abs(mu(m, a) - mu(m, b)));
        }
      }
    }
    if (!(mk.gap_ > 0.0)) {
      throw std::invalid_argument("market: men's preferences must be tie-free");
    }
    const auto [lo, hi] = std::minmax_element(mu.data().begin(), mu.data().end());
    mk.mu_min_ = *lo;
    mk.mu_max_ = *hi;
    if (dist.kind != RewardKind::kDeterministic && mk.mu_max_ > 1.0) {
      throw std::invalid_argument(
          "market: " + to_string(dist.kind) + " rewards require mu <= 1");
    }
    if (dist.kind == RewardKind::kBeta && !(dist.concentration > 0.0)) {
      throw std::invalid_argument("market: beta concentration must be > 0");
    }
    mk.n_ = static_cast<int>(n);
    mk.mu_ = std::move(mu);
    mk.women_rank_ = std::move(women_rank);
    mk.dist_ = dist;
    return mk;
  }

  int size() const noexcept { return n_; }
  double mu(int m, int w) const { return mu_(m, w); }
  const Matrix& mu() const noexcept { return mu_; }
  const std::vector<std::vector<int>>& women_rank() const noexcept {
    return women_rank_;
  }
  const RewardDist& reward_dist() const noexcept { return dist_; }

  /// Position of man m in woman w's list; 0 is her favourite.
  int rank_of(int w, int m) const {
    return rank_pos_[static_cast<std::size_t>(w) * n_ + m];
  }
  /// True iff woman w strictly prefers man k to man m (k >_w m).
  bool prefers(int w, int k, int m) const { return rank_of(w, k) < rank_of(w, m); }

  /// min over men and distinct women of |mu(m,w) - mu(m,w')|; +inf when n = 1.
  double gap() const noexcept { return gap_; }
  double mu_min() const noexcept { return mu_min_; }
  double mu_max() const noexcept { return mu_max_; }

  /// c = min(gap, mu_min) / 8, the local-convergence constant.
  double local_constant() const noexcept { return std::min(gap_, mu_min_) / 8.0; }

  /// c = min(gap, min_k mu(k, target[k])) / 8 for a perfect target matching.
  double hierarchical_constant(std::span<const int> target) const {
    double lo = gap_;
    for (int m = 0; m < n_; ++m) lo = std::min(lo, mu_(m, target[m]));
    return lo / 8.0;
  }

  /// Same market with mu divided by mu_max, so that mu lies in (0, 1].
  Market normalized() const {
    Matrix scaled = mu_;
    for (double& v : scaled.data()) v /= mu_max_;
    return create(std::move(scaled), women_rank_, dist_);
  }

  Market with_reward_dist(RewardDist dist) const {
    return create(mu_, women_rank_, dist);
  }

  /// One reward draw for the pair (m, w).
  double sample_reward(int m, int w, Rng& rng) const {
    const double mean = mu_(m, w);
    switch (dist_.kind) {
      case RewardKind::kDeterministic: return mean;
      case RewardKind::kBernoulli: return bernoulli(rng, mean) ? 1.0 : 0.0;
      case RewardKind::kBeta: {
        if (mean >= 1.0) return 1.0;
        std::gamma_distribution<double> ga(mean * dist_.concentration, 1.0);
        std::gamma_distribution<double> gb((1.0 - mean) * dist_.concentration, 1.0);
        const double a = ga(rng);
        const double b = gb(rng);
        return (a + b) > 0.0 ? a / (a + b) : mean;
      }
    }
    return mean;
  }

  friend bool operator==(const Market& a, const Market& b) {
    return a.mu_ == b.mu_ && a.women_rank_ == b.women_rank_ && a.dist_ == b.dist_;
  }

 private:
  Market() = default;

  int n_ = 0;
  Matrix mu_;
  std::vector<std::vector<int>> women_rank_;
  std::vector<int> rank_pos_;
  RewardDist dist_;
  double gap_ = 0.0;
  double mu_min_ = 0.0;
  double mu_max_ = 0.0;
};

/// Injective partial map man -> woman.
class Matching {
 public:
  Matching() = default;
  explicit Matching(std::vector<int> partner) : partner_(std::move(partner)) {
    const int n = size();
    std::vector<char> taken(partner_.size(), 0);
    for (int w : partner_) {
      if (w == kUnmatched) continue;
      if (w < 0 || w >= n) throw std::invalid_argument("matching: woman out of range");
      if (taken[w]) throw std::invalid_argument("matching: woman matched twice");
      taken[w] = 1;
    }
  }

  static Matching identity(int n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    return Matching(std::move(p));
  }

  int size() const noexcept { return static_cast<int>(partner_.size()); }
  int woman_of(int m) const { return partner_.at(m); }
  int man_of(int w) const {
    for (int m = 0; m < size(); ++m) {
      if (partner_[m] == w) return m;
    }
    return kUnmatched;
  }
  bool is_perfect() const noexcept {
    return std::none_of(partner_.begin(), partner_.end(),
                        [](int w) { return w == kUnmatched; });
  }
  const std::vector<int>& partners() const noexcept { return partner_; }

  friend bool operator==(const Matching&, const Matching&) = default;
  friend auto operator<=>(const Matching&, const Matching&) = default;

 private:
  std::vector<int> partner_;
};

/// One probability vector over women per man.
class MixedProfile {
 public:
  MixedProfile() = default;

  /// Throws std::invalid_argument unless every row is a probability vector
  /// (entries >= 0, sum within kSimplexTol of 1).
  explicit MixedProfile(Matrix x) : x_(std::move(x)) {
    if (x_.rows() != x_.cols() || x_.rows() == 0) {
      throw std::invalid_argument("profile: must be a non-empty n x n matrix");
    }
    for (std::size_t m = 0; m < x_.rows(); ++m) {
      double sum = 0.0;
      for (double v : x_.row(m)) {
        if (!(v >= 0.0)) throw std::invalid_argument("profile: negative entry");
        sum += v;
      }
      if (std::abs(sum - 1.0) > kSimplexTol) {
        throw std::invalid_argument("profile: row " + std::to_string(m) +
                                    " does not sum to 1");
      }
    }
  }

  static MixedProfile uniform(int n) {
    return MixedProfile(Matrix(n, n, 1.0 / n));
  }

  /// 0/1 profile of a pure action vector; the sink action is not allowed.
  static MixedProfile from_pure(std::span<const int> actions) {
    const std::size_t n = actions.size();
    Matrix x(n, n, 0.0);
    for (std::size_t m = 0; m < n; ++m) {
      if (actions[m] < 0 || static_cast<std::size_t>(actions[m]) >= n) {
        throw std::invalid_argument("profile: pure action out of range");
      }
      x(m, actions[m]) = 1.0;
    }
    return MixedProfile(std::move(x));
  }

  static MixedProfile from_matching(const Matching& matching) {
    return from_pure(matching.partners());
  }

  int size() const noexcept { return static_cast<int>(x_.rows()); }
  double operator()(int m, int w) const { return x_(m, w); }
  std::span<const double> row(int m) const { return x_.row(m); }
  const Matrix& matrix() const noexcept { return x_; }

  bool is_pure() const {
    return std::all_of(x_.data().begin(), x_.data().end(),
                       [](double v) { return v == 0.0 || v == 1.0; });
  }

  /// Action vector when the profile is pure.
  std::optional<PureProfile> to_pure() const {
    if (!is_pure()) return std::nullopt;
    PureProfile out(x_.rows());
    for (std::size_t m = 0; m < x_.rows(); ++m) {
      const auto r = row(static_cast<int>(m));
      out[m] = static_cast<int>(std::find(r.begin(), r.end(), 1.0) - r.begin());
    }
    return out;
  }

 private:
  Matrix x_;
};

/// Women's ordinal ranks encoded as cardinal values lambda(w, m).
class WomanCardinal {
 public:
  /// lambda(w, m) = (n - rank_w(m)) / n.
  static WomanCardinal canonical(const Market& market) {
    const int n = market.size();
    Matrix lam(n, n);
    for (int w = 0; w < n; ++w) {
      for (int m = 0; m < n; ++m) {
        lam(w, m) = static_cast<double>(n - market.rank_of(w, m)) / n;
      }
    }
    return WomanCardinal(std::move(lam));
  }

  /// Validates that lambda is positive and strictly order-consistent.
  static WomanCardinal create(const Market& market, Matrix lambda) {
    const int n = market.size();
    if (static_cast<int>(lambda.rows()) != n || static_cast<int>(lambda.cols()) != n) {
      throw std::invalid_argument("lambda: must be n x n");
    }
    for (int w = 0; w < n; ++w) {
      for (int k = 0; k < n; ++k) {
        if (!(lambda(w, k) > 0.0)) throw std::invalid_argument("lambda: entries must be > 0");
        for (int m = 0; m < n; ++m) {
          if (market.prefers(w, k, m) && !(lambda(w, k) > lambda(w, m))) {
            throw std::invalid_argument("lambda: inconsistent with women_rank");
          }
        }
      }
    }
    return WomanCardinal(std::move(lambda));
  }

  double operator()(int w, int m) const { return lambda_(w, m); }

 private:
  explicit WomanCardinal(Matrix lambda) : lambda_(std::move(lambda)) {}
  Matrix lambda_;
};

namespace detail {
inline void check_man(const Market& market, int m) {
  if (m < 0 || m >= market.size()) throw std::out_of_range("man index out of range");
}
inline void check_size(const Market& market, int n) {
  if (n != market.size()) throw std::invalid_argument("profile size does not match market");
}
}  // namespace detail

/// v_mw(x) for every woman w. Independent of row m of x.
inline std::vector<double> gradient(const Market& market, const MixedProfile& x, int m) {
  detail::check_man(market, m);
  detail::check_size(market, x.size());
  const int n = market.size();
  std::vector<double> v(n);
  for (int w = 0; w < n; ++w) {
    double free = 1.0;
    for (int k : market.women_rank()[w]) {
      if (k == m) break;
      free *= 1.0 - x(k, w);
    }
    v[w] = market.mu(m, w) * free;
  }
  return v;
}

/// v_mw for a pure profile: mu(m, w) when no higher-ranked man proposes to w.
inline std::vector<double> gradient(const Market& market, std::span<const int> actions, int m) {
  detail::check_man(market, m);
  detail::check_size(market, static_cast<int>(actions.size()));
  const int n = market.size();
  std::vector<double> v(n);
  for (int w = 0; w < n; ++w) {
    bool blocked = false;
    for (int k : market.women_rank()[w]) {
      if (k == m) break;
      if (actions[k] == w) {
        blocked = true;
        break;
      }
    }
    v[w] = blocked ? 0.0 : market.mu(m, w);
  }
  return v;
}

inline double payoff(const Market& market, const MixedProfile& x, int m) {
  const auto v = gradient(market, x, m);
  double u = 0.0;
  for (int w = 0; w < market.size(); ++w) u += x(m, w) * v[w];
  return u;
}

/// Payoff under a pure profile; 0 for the sink action.
inline double payoff(const Market& market, std::span<const int> actions, int m) {
  const auto v = gradient(market, actions, m);
  return actions[m] == kNoProposal ? 0.0 : v[actions[m]];
}

namespace detail {
inline void require_perfect(const Market& market, const Matching& matching) {
  if (matching.size() != market.size() || !matching.is_perfect()) {
    throw std::invalid_argument("stability is defined for perfect matchings only");
  }
}
}  // namespace detail

/// True iff m and w strictly prefer each other to their partners.
inline bool is_blocking_pair(const Market& market, const Matching& matching, int m, int w) {
  detail::require_perfect(market, matching);
  detail::check_man(market, m);
  detail::check_man(market, w);
  const int current = matching.woman_of(m);
  if (current == w) return false;
  const int rival = matching.man_of(w);
  return market.mu(m, w) > market.mu(m, current) && market.prefers(w, m, rival);
}

inline bool is_stable(const Market& market, const Matching& matching) {
  detail::require_perfect(market, matching);
  const int n = market.size();
  std::vector<int> husband(n);
  for (int m = 0; m < n; ++m) husband[matching.woman_of(m)] = m;
  for (int m = 0; m < n; ++m) {
    const double own = market.mu(m, matching.woman_of(m));
    for (int w = 0; w < n; ++w) {
      if (market.mu(m, w) > own && market.prefers(w, m, husband[w])) return false;
    }
  }
  return true;
}

/// Women sorted from most to least preferred by man m; ties to lower index.
inline std::vector<int> men_preference_order(const Market& market, int m) {
  std::vector<int> order(market.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return market.mu(m, a) > market.mu(m, b);
  });
  return order;
}

/// Men-proposing deferred acceptance.
inline Matching deferred_acceptance(const Market& market) {
  const int n = market.size();
  std::vector<std::vector<int>> order(n);
  for (int m = 0; m < n; ++m) order[m] = men_preference_order(market, m);
  std::vector<int> next(n, 0);
  std::vector<int> husband(n, kUnmatched);
  std::vector<int> free_men(n);
  std::iota(free_men.rbegin(), free_men.rend(), 0);
  while (!free_men.empty()) {
    const int m = free_men.back();
    free_men.pop_back();
    const int w = order[m][next[m]++];
    const int h = husband[w];
    if (h == kUnmatched) {
      husband[w] = m;
    } else if (market.prefers(w, m, h)) {
      husband[w] = m;
      free_men.push_back(h);
    } else {
      free_men.push_back(m);
    }
  }
  std::vector<int> partner(n);
  for (int w = 0; w < n; ++w) partner[husband[w]] = w;
  return Matching(std::move(partner));
}

/// Highest-ranked proposer to each woman, or kUnmatched when nobody proposes.
inline std::vector<int> top_proposers(const Market& market, std::span<const int> actions) {
  const int n = market.size();
  std::vector<int> top(n, kUnmatched);
  for (int m = 0; m < static_cast<int>(actions.size()); ++m) {
    const int w = actions[m];
    if (w == kNoProposal) continue;
    if (top[w] == kUnmatched || market.prefers(w, m, top[w])) top[w] = m;
  }
  return top;
}

/// Phi(x) = sum_w lambda(w, top proposer to w); 0 for women without proposals.
inline double potential(const Market& market, std::span<const int> actions,
                        const WomanCardinal& lambda) {
  detail::check_size(market, static_cast<int>(actions.size()));
  const auto top = top_proposers(market, actions);
  double phi = 0.0;
  for (int w = 0; w < market.size(); ++w) {
    if (top[w] != kUnmatched) phi += lambda(w, top[w]);
  }
  return phi;
}

inline double potential(const Market& market, const MixedProfile& x,
                        const WomanCardinal& lambda) {
  const auto actions = x.to_pure();
  if (!actions) throw std::invalid_argument("potential: profile must be pure");
  return potential(market, *actions, lambda);
}

/// Sequential preference condition under the identity orderings: m_k prefers
/// w_k to every w_j with j > k, and w_k prefers m_k to every m_j with j > k.
inline bool satisfies_sequential_preference(const Market& market) {
  const int n = market.size();
  for (int k = 0; k < n; ++k) {
    for (int j = k + 1; j < n; ++j) {
      if (!(market.mu(k, k) > market.mu(k, j))) return false;
      if (!market.prefers(k, k, j)) return false;
    }
  }
  return true;
}

}  // namespace decmatch
