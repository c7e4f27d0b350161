#pragma once

// LASSO mode argmin |Ax - y|^2/2 + |x|_1: polar direction search and FISTA.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "lassogeom/partition.hpp"
#include "lassogeom/problem.hpp"

namespace lassogeom {

enum class LassoMethod { polar, fista };

inline std::string to_string(LassoMethod m) { return m == LassoMethod::polar ? "polar" : "fista"; }

struct LassoSolution {
  Vec x;
  double objective = 0.0;
  LassoMethod method = LassoMethod::polar;
  // polar
  std::optional<double> best_beta;
  // fista
  int iterations = 0;
  double final_step = 0.0;
  double residual = 0.0;
  bool converged = true;
};

inline double lasso_objective(const ProblemInstance& prob, const Vec& x) {
  if (x.size() != prob.p) {
    throw std::invalid_argument("lasso_objective: x must have p entries");
  }
  return 0.5 * (prob.A * x - prob.y).squaredNorm() + x.lpNorm<1>();
}

/// Largest violation of 0 in the subdifferential of the objective at x.
inline double lasso_optimality_residual(const ProblemInstance& prob, const Vec& x) {
  const Vec g = prob.A.transpose() * (prob.A * x - prob.y);
  double res = 0.0;
  for (int i = 0; i < prob.p; ++i) {
    const double r = x(i) != 0.0 ? std::abs(g(i) + (x(i) > 0.0 ? 1.0 : -1.0)) : std::max(0.0, std::abs(g(i)) - 1.0);
    res = std::max(res, r);
  }
  return res;
}

/// Sweep N uniform directions; among those with beta <= 0 keep the first
/// maximizing beta^2 and return l = -(beta / |A theta|) theta, else 0.
inline LassoSolution lasso_polar(const ProblemInstance& prob, std::int64_t N, std::uint64_t seed,
                                 const MonteCarloOptions& opt = {}) {
  if (N < 1) throw std::invalid_argument("lasso_polar: N must be >= 1");
  struct Best {
    bool found = false;
    double beta2 = -1.0;
    double beta = 0.0;
    double a = 0.0;
    Vec theta;
  };
  const int p = prob.p;
  auto parts = detail::run_chunks<Best>(N, opt.chunk_size, opt.threads,
                                        [&](std::uint64_t chunk, std::int64_t b, std::int64_t e) {
                                          Rng rng = detail::chunk_rng(seed, chunk);
                                          Best best;
                                          for (std::int64_t i = b; i < e; ++i) {
                                            const Vec theta = uniform_direction(p, rng);
                                            const DirectionStats st = direction_stats(prob, theta);
                                            if (!st.beta || *st.beta > 0.0) continue;
                                            const double b2 = *st.beta * *st.beta;
                                            if (!best.found || b2 > best.beta2) {
                                              best = {true, b2, *st.beta, st.norm_A_theta, st.theta};
                                            }
                                          }
                                          return best;
                                        });
  Best best;
  for (const Best& b : parts) {
    if (b.found && (!best.found || b.beta2 > best.beta2)) best = b;
  }
  LassoSolution sol;
  sol.method = LassoMethod::polar;
  if (best.found) {
    sol.x = -(best.beta / best.a) * best.theta;
    sol.best_beta = best.beta;
  } else {
    sol.x = Vec::Zero(p);
  }
  sol.objective = lasso_objective(prob, sol.x);
  return sol;
}

/// Accelerated proximal gradient with step 1/|A|^2, stopped when the
/// subgradient residual drops to tol.
inline LassoSolution lasso_fista(const ProblemInstance& prob, int max_iter = 100000, double tol = 1e-10) {
  if (max_iter < 1) throw std::invalid_argument("lasso_fista: max_iter must be >= 1");
  const int p = prob.p;
  LassoSolution sol;
  sol.method = LassoMethod::fista;
  const double L = prob.op_norm * prob.op_norm;
  if (L == 0.0) {
    sol.x = Vec::Zero(p);
    sol.objective = lasso_objective(prob, sol.x);
    sol.iterations = 1;
    sol.residual = lasso_optimality_residual(prob, sol.x);
    sol.converged = sol.residual <= tol;
    return sol;
  }
  const double step = 1.0 / L;
  const Mat AtA = prob.A.transpose() * prob.A;
  const Vec Aty = prob.A.transpose() * prob.y;
  auto soft = [&](const Vec& v) {
    Vec out(p);
    for (int i = 0; i < p; ++i) {
      const double m = std::abs(v(i)) - step;
      out(i) = m > 0.0 ? std::copysign(m, v(i)) : 0.0;
    }
    return out;
  };
  Vec x = Vec::Zero(p);
  Vec z = x;
  double t = 1.0;
  int it = 0;
  double res = std::numeric_limits<double>::infinity();
  for (it = 1; it <= max_iter; ++it) {
    const Vec x_new = soft(z - step * (AtA * z - Aty));
    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = x_new + ((t - 1.0) / t_new) * (x_new - x);
    // Restart momentum when the objective goes up.
    if (lasso_objective(prob, x_new) > lasso_objective(prob, x)) {
      z = x_new;
      t = 1.0;
    } else {
      t = t_new;
    }
    x = x_new;
    res = lasso_optimality_residual(prob, x);
    if (res <= tol) break;
  }
  sol.x = x;
  sol.objective = lasso_objective(prob, x);
  sol.iterations = std::min(it, max_iter);
  sol.final_step = step;
  sol.residual = res;
  sol.converged = res <= tol;
  return sol;
}

}  // namespace lassogeom
