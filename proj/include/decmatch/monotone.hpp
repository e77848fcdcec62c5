#pragma once

// Waiting-list feedback game. A rejected man also learns how many men ranked
// above him proposed to the same woman, which makes his expected perceived
// payoff bilinear:
//
//   u_m(x) = sum_w mu(m, w) (1 - sum_{k >_w m} x(k, w)) x(m, w).
//
// With the regularizer U_m = u_m - (beta / 2) |x_m|^2 the game is monotone
// once beta > n mu_max / 2.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "decmatch/market.hpp"

namespace decmatch {

/// Pivot tolerance of the semidefinite factorization.
inline constexpr double kPivotTol = 1e-10;

class RegularizedGame {
 public:
  RegularizedGame(Market market, double beta) : market_(std::move(market)), beta_(beta) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
      throw std::invalid_argument("regularized game: beta must be finite and >= 0");
    }
  }

  const Market& market() const noexcept { return market_; }
  double beta() const noexcept { return beta_; }
  int size() const noexcept { return market_.size(); }

  /// beta > n mu_max / 2.
  bool monotone_certified() const noexcept {
    return beta_ > market_.size() * market_.mu_max() / 2.0;
  }

 private:
  Market market_;
  double beta_;
};

/// Total mass of men ranked above m proposing to w.
inline double competing_mass(const Market& market, const Matrix& x, int m, int w) {
  double s = 0.0;
  for (int k : market.women_rank()[w]) {
    if (k == m) break;
    s += x(k, w);
  }
  return s;
}

inline double simplified_payoff(const Market& market, const MixedProfile& x, int m) {
  detail::check_man(market, m);
  detail::check_size(market, x.size());
  double u = 0.0;
  for (int w = 0; w < market.size(); ++w) {
    u += market.mu(m, w) * (1.0 - competing_mass(market, x.matrix(), m, w)) * x(m, w);
  }
  return u;
}

/// Regularized payoff U_m(x).
inline double regularized_payoff(const RegularizedGame& game, const MixedProfile& x, int m) {
  double sq = 0.0;
  for (double v : x.row(m)) sq += v * v;
  return simplified_payoff(game.market(), x, m) - 0.5 * game.beta() * sq;
}

/// F(x)(m, w) = mu(m, w) (1 - sum_{k >_w m} x(k, w)) - beta x(m, w). Accepts
/// any n x n matrix so that it can be evaluated off the simplex.
inline Matrix regularized_field(const RegularizedGame& game, const Matrix& x) {
  const Market& market = game.market();
  const int n = market.size();
  if (static_cast<int>(x.rows()) != n || static_cast<int>(x.cols()) != n) {
    throw std::invalid_argument("regularized_field: profile must be n x n");
  }
  Matrix f(n, n);
  for (int m = 0; m < n; ++m) {
    for (int w = 0; w < n; ++w) {
      f(m, w) = market.mu(m, w) * (1.0 - competing_mass(market, x, m, w)) - game.beta() * x(m, w);
    }
  }
  return f;
}

inline Matrix regularized_field(const RegularizedGame& game, const MixedProfile& x) {
  return regularized_field(game, x.matrix());
}

/// Q^w in woman w's preference basis: basis[i] is the man she ranks i-th.
struct QMatrix {
  int w = 0;
  std::vector<int> basis;
  Matrix q;
};

/// Q^w = A^T + A + 2 beta I with A(m, k) = mu(m, w) [k >_w m], permuted so
/// that A is strictly lower triangular.
inline QMatrix build_q(const RegularizedGame& game, int w) {
  const Market& market = game.market();
  detail::check_man(market, w);
  const int n = market.size();
  QMatrix out{w, market.women_rank()[w], Matrix(n, n, 0.0)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        out.q(i, j) = 2.0 * game.beta();
      } else {
        // Row man is the lower ranked of the two in A's nonzero entry.
        const int lower = out.basis[std::max(i, j)];
        out.q(i, j) = market.mu(lower, w);
      }
    }
  }
  return out;
}

struct PsdResult {
  bool psd = false;
  double min_pivot = 0.0;  // smallest pivot met before stopping
  int rank = 0;
};

/// Symmetric LDL^T with diagonal pivoting. A pivot below -tol, or a
/// remaining block with no usable pivot but an entry above tol, proves that
/// the matrix is not positive semidefinite.
inline PsdResult is_psd(const Matrix& input, double tol = kPivotTol) {
  const int n = static_cast<int>(input.rows());
  if (static_cast<int>(input.cols()) != n) throw std::invalid_argument("is_psd: matrix must be square");
  Matrix a = input;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > tol * (1.0 + std::abs(a(i, j)))) {
        throw std::invalid_argument("is_psd: matrix must be symmetric");
      }
    }
  }
  std::vector<int> rest(n);
  std::iota(rest.begin(), rest.end(), 0);
  PsdResult res{true, std::numeric_limits<double>::infinity(), 0};
  while (!rest.empty()) {
    auto it = std::max_element(rest.begin(), rest.end(),
                               [&](int p, int q) { return a(p, p) < a(q, q); });
    const int p = *it;
    const double d = a(p, p);
    res.min_pivot = std::min(res.min_pivot, d);
    if (d < -tol) {
      res.psd = false;
      return res;
    }
    if (d <= tol) {
      for (int i : rest) {
        for (int j : rest) {
          if (std::abs(a(i, j)) > tol) {
            res.psd = false;
            return res;
          }
        }
      }
      return res;
    }
    rest.erase(it);
    ++res.rank;
    for (int i : rest) {
      const double l = a(i, p) / d;
      for (int j : rest) a(i, j) -= l * a(p, j);
    }
  }
  if (n == 0) res.min_pivot = 0.0;
  return res;
}

struct IdentitySides {
  double lhs = 0.0;  // (x' - x)^T (F(x') - F(x))
  double rhs = 0.0;  // -1/2 sum_w d_w^T Q^w d_w
};

inline IdentitySides monotone_identity_check(const RegularizedGame& game, const MixedProfile& x,
                                             const MixedProfile& xp) {
  const int n = game.size();
  detail::check_size(game.market(), x.size());
  detail::check_size(game.market(), xp.size());
  const Matrix f = regularized_field(game, x);
  const Matrix fp = regularized_field(game, xp);
  IdentitySides out;
  for (int m = 0; m < n; ++m) {
    for (int w = 0; w < n; ++w) out.lhs += (xp(m, w) - x(m, w)) * (fp(m, w) - f(m, w));
  }
  for (int w = 0; w < n; ++w) {
    const QMatrix q = build_q(game, w);
    std::vector<double> d(n);
    for (int i = 0; i < n; ++i) d[i] = xp(q.basis[i], w) - x(q.basis[i], w);
    double quad = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) quad += d[i] * q.q(i, j) * d[j];
    }
    out.rhs -= 0.5 * quad;
  }
  return out;
}

/// Euclidean projection onto the probability simplex (sort and threshold).
inline std::vector<double> simplex_project(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("simplex_project: empty vector");
  for (double e : v) {
    if (!std::isfinite(e)) throw std::invalid_argument("simplex_project: non-finite entry");
  }
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cum += u[i];
    const double t = (cum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::max(v[i] - theta, 0.0);
    total += out[i];
  }
  // Renormalize rounding drift so the result passes the simplex check.
  for (double& e : out) e /= total;
  return out;
}

/// max_m [max_w F(m, w) - <x_m, F_m>] for a field F evaluated at x.
inline double variational_residual(const Matrix& field, const Matrix& x) {
  double r = 0.0;
  for (std::size_t m = 0; m < x.rows(); ++m) {
    const auto f = field.row(m);
    const auto xm = x.row(m);
    double inner = 0.0;
    for (std::size_t w = 0; w < f.size(); ++w) inner += xm[w] * f[w];
    r = std::max(r, *std::max_element(f.begin(), f.end()) - inner);
  }
  return r;
}

/// Residual of x in the regularized game.
inline double residual_regularized(const RegularizedGame& game, const MixedProfile& x) {
  return variational_residual(regularized_field(game, x), x.matrix());
}

/// Residual of x in the unregularized waiting-list game.
inline double residual_simplified(const Market& market, const MixedProfile& x) {
  return residual_regularized(RegularizedGame(market, 0.0), x);
}

/// 1 / (2 beta + n mu_max).
inline double max_solver_step(const RegularizedGame& game) {
  return 1.0 / (2.0 * game.beta() + game.size() * game.market().mu_max());
}

struct SolverLogRow {
  int iter = 0;
  double residual_regularized = 0.0;
  double residual_simplified = 0.0;
  double dist_prev = 0.0;  // L1 distance to the previous iterate
};

struct SolverOptions {
  double step = 0.0;  // 0 selects max_solver_step
  int iterations = 10000;
  double tol = 1e-10;  // stop once the regularized residual is at most tol
};

struct SolverResult {
  MixedProfile profile;
  int iterations = 0;
  double residual_regularized = 0.0;
  double residual_simplified = 0.0;
  bool converged = false;
  std::vector<std::string> warnings;
  std::vector<SolverLogRow> log;  // row 0 is the starting point
};

/// Simultaneous projected gradient ascent x_m <- P(x_m + step F_m(x)).
/// Runs for a game that is not certified monotone but records a warning.
inline SolverResult solve_eps_ne(const RegularizedGame& game, const MixedProfile& x0,
                                 SolverOptions opts = {}) {
  const int n = game.size();
  detail::check_size(game.market(), x0.size());
  const double bound = max_solver_step(game);
  if (opts.step == 0.0) opts.step = bound;
  if (!(opts.step > 0.0) || opts.step > bound * (1.0 + 1e-12)) {
    throw std::invalid_argument("solve_eps_ne: step must lie in (0, " + std::to_string(bound) + "]");
  }
  if (opts.iterations < 0) throw std::invalid_argument("solve_eps_ne: iterations must be >= 0");
  SolverResult res;
  res.profile = x0;
  if (!game.monotone_certified()) {
    res.warnings.push_back("beta <= n mu_max / 2: game not certified monotone");
  }
  Matrix x = x0.matrix();
  auto record = [&](int iter, double dist) {
    const MixedProfile p(x);
    res.residual_regularized = residual_regularized(game, p);
    res.residual_simplified = residual_simplified(game.market(), p);
    res.log.push_back({iter, res.residual_regularized, res.residual_simplified, dist});
  };
  record(0, 0.0);
  int it = 0;
  while (res.residual_regularized > opts.tol && it < opts.iterations) {
    const Matrix f = regularized_field(game, x);
    Matrix next(n, n);
    double dist = 0.0;
    for (int m = 0; m < n; ++m) {
      std::vector<double> y(n);
      for (int w = 0; w < n; ++w) y[w] = x(m, w) + opts.step * f(m, w);
      const auto p = simplex_project(y);
      for (int w = 0; w < n; ++w) {
        next(m, w) = p[w];
        dist += std::abs(p[w] - x(m, w));
      }
    }
    x = std::move(next);
    ++it;
    record(it, dist);
  }
  res.iterations = it;
  res.converged = res.residual_regularized <= opts.tol;
  res.profile = MixedProfile(std::move(x));
  return res;
}

/// Largest unilateral gain at a pure profile under the simplified payoff.
/// Pure deviations suffice because the payoff is linear in a man's own row.
inline double simplified_pure_gain(const Market& market, std::span<const int> actions) {
  const MixedProfile x = MixedProfile::from_pure(actions);
  double gain = 0.0;
  for (int m = 0; m < market.size(); ++m) {
    const double own = simplified_payoff(market, x, m);
    for (int w = 0; w < market.size(); ++w) {
      const double dev = market.mu(m, w) * (1.0 - competing_mass(market, x.matrix(), m, w));
      gain = std::max(gain, dev - own);
    }
  }
  return gain;
}

}  // namespace decmatch
