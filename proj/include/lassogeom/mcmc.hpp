#pragma once

// Metropolis-Hastings chains targeting c (Laplace independent sampler and
// Gaussian random walk) with the criterion |x - l|_2 <= q r(theta, l).

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lassogeom/lasso.hpp"
#include "lassogeom/partition.hpp"
#include "lassogeom/problem.hpp"
#include "lassogeom/radial.hpp"
#include "lassogeom/shifted.hpp"

namespace lassogeom {

enum class ChainKind { independent_laplace, random_walk };

inline std::string to_string(ChainKind k) {
  return k == ChainKind::independent_laplace ? "is" : "rw";
}

struct ChainConfig {
  ChainKind kind = ChainKind::random_walk;
  std::int64_t n_iter = 1;
  double rw_variance = 0.5;
  double q = 5.0;
  std::uint64_t seed = 0;
  std::optional<Vec> init;
  std::optional<Vec> shift_l;
  /// Partition-function value used for the independent sampler's TV rate.
  std::optional<double> z_for_tv;
};

struct ChainDiagnosis {
  std::vector<bool> criterion;
  std::optional<std::int64_t> first_hit;
  std::optional<std::int64_t> last_violation;
  double satisfaction_rate = 0.0;
  Vec running_mean;
  double mean_norm = 0.0;
  double acceptance_rate = 0.0;
  /// 1 - Z/2^p for the independent sampler when Z is known.
  std::optional<double> tv_constant;
};

struct ChainStep {
  std::int64_t t = 0;
  const Vec* x = nullptr;
  double norm_x = 0.0;
  double q_times_r = 0.0;
  bool criterion = false;
};

/// (1 - z/2^p)^t.
inline double tv_bound(std::int64_t t, double z, int p) {
  const double cap = std::ldexp(1.0, p);
  if (!(z > 0.0) || !(z < cap)) {
    throw std::domain_error("tv_bound: z must lie in (0, 2^p)");
  }
  if (t < 0) throw std::invalid_argument("tv_bound: t must be >= 0");
  return std::pow(1.0 - z / cap, static_cast<double>(t));
}

/// q r(theta, l) for the direction of x - l; +inf when x = l.
inline double criterion_radius(const ProblemInstance& prob, const Vec& x, const Vec& l, bool shifted, double q) {
  const Vec d = x - l;
  if (!(d.norm() > 0.0)) return std::numeric_limits<double>::infinity();
  if (shifted) {
    return q * mode_radius_shifted(build_shift_context(prob, l, d), prob.p);
  }
  return q * mode_radius(direction_stats(prob, d), prob.p);
}

/// Runs the chain for n_iter transitions; step t (1-based) sees the state
/// after the t-th transition.
inline ChainDiagnosis run_chain(const ProblemInstance& prob, const ChainConfig& cfg,
                                const std::function<void(const ChainStep&)>& on_step = {}) {
  if (cfg.n_iter < 1) throw std::invalid_argument("run_chain: n_iter must be >= 1");
  if (!(cfg.rw_variance > 0.0)) throw std::invalid_argument("run_chain: rw_variance must be > 0");
  if (!(cfg.q > 0.0)) throw std::invalid_argument("run_chain: q must be > 0");
  const int p = prob.p;
  const Vec l = cfg.shift_l.value_or(Vec::Zero(p));
  const bool shifted = cfg.shift_l.has_value() && !cfg.shift_l->isZero(0.0);
  Vec x = cfg.init.value_or(Vec::Zero(p));
  if (x.size() != p || l.size() != p) throw std::invalid_argument("run_chain: vectors must have p entries");

  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, std::sqrt(cfg.rw_variance));

  auto half_misfit = [&](const Vec& v) { return 0.5 * (prob.A * v - prob.y).squaredNorm(); };
  double cur_misfit = half_misfit(x);
  double cur_l1 = x.lpNorm<1>();

  ChainDiagnosis diag;
  diag.criterion.reserve(static_cast<std::size_t>(cfg.n_iter));
  Vec sum = Vec::Zero(p);
  std::int64_t accepted = 0;
  std::int64_t satisfied = 0;
  Vec prop(p);
  for (std::int64_t t = 1; t <= cfg.n_iter; ++t) {
    double log_ratio;
    if (cfg.kind == ChainKind::independent_laplace) {
      prop = laplace_vector(p, rng);
      const double m = half_misfit(prop);
      // The l1 terms of target and proposal cancel.
      log_ratio = -(m - cur_misfit);
      if (log_ratio >= 0.0 || unif(rng) < std::exp(log_ratio)) {
        x = prop;
        cur_misfit = m;
        cur_l1 = x.lpNorm<1>();
        ++accepted;
      }
    } else {
      for (int i = 0; i < p; ++i) prop(i) = x(i) + normal(rng);
      const double m = half_misfit(prop);
      const double l1 = prop.lpNorm<1>();
      log_ratio = -(m + l1 - cur_misfit - cur_l1);
      if (log_ratio >= 0.0 || unif(rng) < std::exp(log_ratio)) {
        x = prop;
        cur_misfit = m;
        cur_l1 = l1;
        ++accepted;
      }
    }
    sum += x;
    const double nx = (x - l).norm();
    const double qr = criterion_radius(prob, x, l, shifted, cfg.q);
    const bool ok = nx <= qr;
    diag.criterion.push_back(ok);
    if (ok) {
      ++satisfied;
      if (!diag.first_hit) diag.first_hit = t;
    } else {
      diag.last_violation = t;
    }
    if (on_step) on_step(ChainStep{t, &x, nx, qr, ok});
  }
  const double n = static_cast<double>(cfg.n_iter);
  diag.satisfaction_rate = static_cast<double>(satisfied) / n;
  diag.running_mean = sum / n;
  diag.mean_norm = diag.running_mean.norm();
  diag.acceptance_rate = static_cast<double>(accepted) / n;
  if (cfg.kind == ChainKind::independent_laplace && cfg.z_for_tv) {
    diag.tv_constant = 1.0 - *cfg.z_for_tv / std::ldexp(1.0, p);
  }
  return diag;
}

/// Fraction of exact posterior draws with |x - l|_2 <= q r(theta, l).
inline double criterion_probability_check(const ProblemInstance& prob, double q, std::int64_t n_draws,
                                          std::uint64_t seed, const std::optional<Vec>& l_opt = {}) {
  if (n_draws < 1) throw std::invalid_argument("criterion_probability_check: n_draws must be >= 1");
  const Vec l = l_opt.value_or(Vec::Zero(prob.p));
  const bool shifted = l_opt.has_value() && !l_opt->isZero(0.0);
  Rng rng(seed);
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < n_draws; ++i) {
    const Vec x = sample_posterior(prob, l, rng);
    if ((x - l).norm() <= criterion_radius(prob, x, l, shifted, q)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n_draws);
}

}  // namespace lassogeom
