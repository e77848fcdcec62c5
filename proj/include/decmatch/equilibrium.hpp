#pragma once

// Equilibrium certificates for the stable matching game: exhaustive stable
// matching enumeration, pure and mixed NE checks, and the decentralized
// rounding of a mixed NE to a stable matching.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "decmatch/market.hpp"

namespace decmatch {

/// x(m, w) above this counts as a fractional proposal.
inline constexpr double kSupportThreshold = 1e-9;
/// Default certification tolerance.
inline constexpr double kCertificateTol = 1e-9;
/// Largest market accepted by the n! enumeration.
inline constexpr int kMaxEnumerationSize = 8;

enum class NeKind { kPure, kMixed };

inline const char* to_string(NeKind kind) {
  return kind == NeKind::kPure ? "pure" : "mixed";
}

struct NECertificate {
  MixedProfile profile;
  NeKind kind = NeKind::kPure;
  double max_violation = 0.0;
  double tol = kCertificateTol;

  bool certified() const noexcept { return max_violation <= tol; }
};

/// Every perfect matching that passes is_stable, in lexicographic order of
/// the men's partner vectors. Refuses markets larger than max_n.
inline std::vector<Matching> enumerate_stable_matchings(const Market& market,
                                                        int max_n = kMaxEnumerationSize) {
  const int n = market.size();
  if (n > max_n) {
    throw std::domain_error("enumerate_stable_matchings: n = " + std::to_string(n) +
                            " exceeds the enumeration limit " + std::to_string(max_n));
  }
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<Matching> out;
  do {
    Matching candidate(perm);
    if (is_stable(market, candidate)) out.push_back(std::move(candidate));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

/// Pure NE check: the largest gain max_w v_mw(x) - u_m(x) over all men.
/// Best responses are searched over pure strategies only, which suffices
/// because payoffs are linear in a man's own row.
inline NECertificate is_pure_ne(const Market& market, std::span<const int> actions,
                                double tol = kCertificateTol) {
  detail::check_size(market, static_cast<int>(actions.size()));
  NECertificate cert{MixedProfile::from_pure(actions), NeKind::kPure, 0.0, tol};
  for (int m = 0; m < market.size(); ++m) {
    const auto v = gradient(market, actions, m);
    const double best = *std::max_element(v.begin(), v.end());
    cert.max_violation = std::max(cert.max_violation, best - v[actions[m]]);
  }
  return cert;
}

inline NECertificate is_pure_ne(const Market& market, const MixedProfile& x,
                                double tol = kCertificateTol) {
  const auto actions = x.to_pure();
  if (!actions) throw std::invalid_argument("is_pure_ne: profile is not pure");
  return is_pure_ne(market, *actions, tol);
}

/// Support-equality certificate. On the support of x_m every v_mw(x) must
/// equal u_m(x); off the support v_mw(x) may not exceed it. max_violation is
/// the largest residual of either kind.
inline NECertificate verify_mixed_ne(const Market& market, const MixedProfile& x,
                                     double tol = kCertificateTol,
                                     double support_threshold = kSupportThreshold) {
  detail::check_size(market, x.size());
  NECertificate cert{x, x.is_pure() ? NeKind::kPure : NeKind::kMixed, 0.0, tol};
  for (int m = 0; m < market.size(); ++m) {
    const auto v = gradient(market, x, m);
    double u = 0.0;
    for (int w = 0; w < market.size(); ++w) u += x(m, w) * v[w];
    for (int w = 0; w < market.size(); ++w) {
      const double residual =
          x(m, w) > support_threshold ? std::abs(v[w] - u) : std::max(0.0, v[w] - u);
      cert.max_violation = std::max(cert.max_violation, residual);
    }
  }
  return cert;
}

/// Edges (m, w) with x(m, w) above the threshold.
inline std::vector<std::pair<int, int>> support_graph(
    const MixedProfile& x, double support_threshold = kSupportThreshold) {
  std::vector<std::pair<int, int>> edges;
  for (int m = 0; m < x.size(); ++m) {
    for (int w = 0; w < x.size(); ++w) {
      if (x(m, w) > support_threshold) edges.emplace_back(m, w);
    }
  }
  return edges;
}

/// The least preferred woman among those a man proposes to. Needs only the
/// man's own row and his own preference values.
inline int round_row(std::span<const double> mu_row, std::span<const double> x_row,
                     double support_threshold = kSupportThreshold) {
  int choice = kUnmatched;
  for (std::size_t w = 0; w < x_row.size(); ++w) {
    if (x_row[w] <= support_threshold) continue;
    if (choice == kUnmatched || mu_row[w] < mu_row[choice]) choice = static_cast<int>(w);
  }
  return choice;
}

struct RoundingResult {
  Matching matching;
  /// Some woman had no fractional proposal (or the input was not an NE), so
  /// only the induced submarket is matched.
  bool partial = false;
};

/// Each man keeps his least preferred woman in support. When every woman
/// has support and x is a mixed NE the result is a stable matching. Otherwise
/// a pair (m, w_m) is kept only when m is w_m's favourite among her
/// supporters, which is the rounding of the induced submarket.
inline RoundingResult round_mixed_to_pure(const Market& market, const MixedProfile& x,
                                          double support_threshold = kSupportThreshold) {
  detail::check_size(market, x.size());
  const int n = market.size();
  std::vector<int> choice(n);
  for (int m = 0; m < n; ++m) {
    choice[m] = round_row(market.mu().row(m), x.row(m), support_threshold);
  }
  std::vector<int> favourite(n, kUnmatched);
  for (int m = 0; m < n; ++m) {
    for (int w = 0; w < n; ++w) {
      if (x(m, w) <= support_threshold) continue;
      if (favourite[w] == kUnmatched || market.prefers(w, m, favourite[w])) favourite[w] = m;
    }
  }
  bool partial = std::find(favourite.begin(), favourite.end(), kUnmatched) != favourite.end();
  std::vector<int> partner(n, kUnmatched);
  for (int m = 0; m < n; ++m) {
    if (choice[m] != kUnmatched && favourite[choice[m]] == m) {
      partner[m] = choice[m];
    } else {
      partial = true;
    }
  }
  return {Matching(std::move(partner)), partial};
}

struct Example1 {
  Market market;
  MixedProfile equilibrium;
};

/// Three men, three women, and a mixed NE supported on seven edges (two
/// 4-cycles sharing (m2, w2)). eps must lie in (0, 1).
inline Example1 example1_market(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("example1: eps must lie in (0, 1)");
  const Matrix mu = Matrix::from_rows({{2.0, 1.0, eps}, {3.0, 4.0, 5.0}, {eps, 12.0, 6.0}});
  // w1: m2 > m1 > m3, w2: m1 > m2 > m3, w3: m3 > m2 > m1.
  std::vector<std::vector<int>> ranks = {{1, 0, 2}, {0, 1, 2}, {2, 1, 0}};
  Market market = Market::create(mu, std::move(ranks), {RewardKind::kDeterministic, 10.0});

  const double r21 = mu(1, 0) / mu(1, 1);
  const double r12 = mu(0, 1) / mu(0, 0);
  const double r23 = (mu(1, 1) * mu(2, 2)) / (mu(1, 0) * mu(2, 1));
  const double r3 = mu(1, 0) / mu(1, 2);
  Matrix x(3, 3, 0.0);
  x(0, 0) = r21;
  x(0, 1) = 1.0 - r21;
  x(1, 0) = 1.0 - r12;
  x(1, 1) = 1.0 - r23;
  x(1, 2) = r12 + r23 - 1.0;
  x(2, 1) = r3;
  x(2, 2) = 1.0 - r3;
  return {std::move(market), MixedProfile(std::move(x))};
}

}  // namespace decmatch
