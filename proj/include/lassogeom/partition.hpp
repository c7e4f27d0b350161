#pragma once

// Partition-function estimators (polar and Laplace importance sampling), the
// Z bounds from the direction sweep, P(q,p) and the LASSO-ball volume.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "lassogeom/problem.hpp"
#include "lassogeom/radial.hpp"
#include "lassogeom/shifted.hpp"

namespace lassogeom {

enum class PartitionMethod { polar_mc, naive_mc };

inline std::string to_string(PartitionMethod m) {
  return m == PartitionMethod::polar_mc ? "polar_mc" : "naive_mc";
}

struct PartitionEstimate {
  double z = 0.0;
  double std_err = 0.0;
  std::int64_t n_samples = 0;
  PartitionMethod method = PartitionMethod::polar_mc;
  double z_min = 0.0;
  double z_max = std::numeric_limits<double>::infinity();
  /// Directions whose closed form was replaced by quadrature.
  std::int64_t n_fallback = 0;
};

struct MonteCarloOptions {
  /// 0 selects std::thread::hardware_concurrency().
  unsigned threads = 0;
  std::int64_t chunk_size = 4096;
  /// Estimate through the density shifted to this point.
  std::optional<Vec> shift;
};

/// |S^{p-1}| = 2 pi^{p/2} / Gamma(p/2).
inline double sphere_surface(int p) {
  if (p < 1) throw std::invalid_argument("sphere_surface: p must be >= 1");
  return 2.0 * std::pow(std::numbers::pi, 0.5 * p) / std::tgamma(0.5 * p);
}

/// P(q,p) = 1 - p Gamma(p,(p-1)q) e^{p-1} / (p-1)^p.
inline double concentration_prob(double q, int p) {
  return 1.0 - tail_bound_factor(q, p);
}

inline double lasso_ball_volume(double z, int p) {
  if (!(z > 0.0) || p < 1) throw std::invalid_argument("lasso_ball_volume: requires z > 0, p >= 1");
  return z / p;
}

namespace detail {

/// Generator for chunk `chunk` of the stream identified by `seed`.
inline Rng chunk_rng(std::uint64_t seed, std::uint64_t chunk) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chunk), static_cast<std::uint32_t>(chunk >> 32)};
  return Rng(seq);
}

/// Runs fn(chunk, begin, end) over [0, n) in fixed-size chunks and returns
/// the per-chunk results in chunk order, whatever the thread count.
template <class Acc, class Fn>
std::vector<Acc> run_chunks(std::int64_t n, std::int64_t chunk_size, unsigned threads, Fn fn) {
  if (chunk_size < 1) chunk_size = 1;
  const std::int64_t n_chunks = (n + chunk_size - 1) / chunk_size;
  std::vector<Acc> out(static_cast<std::size_t>(n_chunks));
  unsigned t = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  t = static_cast<unsigned>(std::min<std::int64_t>(t, std::max<std::int64_t>(n_chunks, 1)));
  auto work = [&](unsigned w) {
    for (std::int64_t c = w; c < n_chunks; c += t) {
      const std::int64_t b = c * chunk_size;
      out[static_cast<std::size_t>(c)] = fn(static_cast<std::uint64_t>(c), b, std::min(n, b + chunk_size));
    }
  };
  if (t <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < t; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  return out;
}

struct SweepAcc {
  std::int64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;
  double inf_mr = std::numeric_limits<double>::infinity();
  double sup_mr = 0.0;
  std::int64_t fallback = 0;

  void add(double v) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }

  void merge(const SweepAcc& o) {
    if (o.n == 0) return;
    const double total = static_cast<double>(n + o.n);
    const double d = o.mean - mean;
    mean += d * static_cast<double>(o.n) / total;
    m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / total;
    n += o.n;
    inf_mr = std::min(inf_mr, o.inf_mr);
    sup_mr = std::max(sup_mr, o.sup_mr);
    fallback += o.fallback;
  }
};

inline SweepAcc merge_all(const std::vector<SweepAcc>& parts) {
  SweepAcc acc;
  for (const auto& a : parts) acc.merge(a);
  return acc;
}

}  // namespace detail

/// Z = |S| E[J_p(theta)] over uniform directions. With options.shift = l the
/// sweep uses J_p(theta,l) and the result is rescaled by exp(h(0)), so it
/// still estimates Z; z_min and z_max are rescaled the same way.
inline PartitionEstimate z_polar_mc(const ProblemInstance& prob, std::int64_t N, std::uint64_t seed,
                                    const MonteCarloOptions& opt = {}) {
  if (N < 1) throw std::invalid_argument("z_polar_mc: N must be >= 1");
  const int p = prob.p;
  const double y_norm = prob.y.norm();
  const bool shifted = opt.shift.has_value();
  if (shifted && opt.shift->size() != p) {
    throw std::invalid_argument("z_polar_mc: shift must have p entries");
  }
  auto parts = detail::run_chunks<detail::SweepAcc>(
      N, opt.chunk_size, opt.threads, [&](std::uint64_t chunk, std::int64_t b, std::int64_t e) {
        Rng rng = detail::chunk_rng(seed, chunk);
        detail::SweepAcc acc;
        for (std::int64_t i = b; i < e; ++i) {
          const Vec theta = uniform_direction(p, rng);
          double mass;
          double mr;
          bool fallback;
          if (shifted) {
            const ShiftContext ctx = build_shift_context(prob, *opt.shift, theta);
            const ShiftedMass sm = j_p_shifted_checked(ctx, p);
            const ShiftedBounds sb = shifted_bounds(ctx, p);
            mass = sm.mass;
            mr = sb.peak * sb.mode_r;
            fallback = sm.method == MassMethod::quadrature_fallback;
          } else {
            const RadialSummary rs = j_p_closed(direction_stats(prob, theta), p, y_norm);
            mass = rs.mass;
            mr = rs.peak * rs.mode_r;
            fallback = rs.method == MassMethod::quadrature_fallback;
          }
          acc.add(mass);
          acc.inf_mr = std::min(acc.inf_mr, mr);
          acc.sup_mr = std::max(acc.sup_mr, mr);
          if (fallback) ++acc.fallback;
        }
        return acc;
      });
  const detail::SweepAcc acc = detail::merge_all(parts);
  const double S = sphere_surface(p);
  const double scale =
      shifted ? std::exp(-(0.5 * (prob.y - prob.A * *opt.shift).squaredNorm() + opt.shift->lpNorm<1>())) : 1.0;
  PartitionEstimate est;
  est.method = PartitionMethod::polar_mc;
  est.n_samples = N;
  est.z = scale * S * acc.mean;
  est.std_err = N > 1 ? scale * S * std::sqrt(acc.m2 / static_cast<double>(N - 1) / static_cast<double>(N)) : 0.0;
  est.z_min = p >= 2 ? scale * S * acc.inf_mr / p : 0.0;
  est.z_max = p >= 2 ? scale * S * acc.sup_mr * bracket_factor(p) : std::numeric_limits<double>::infinity();
  est.n_fallback = acc.fallback;
  return est;
}

/// Z = 2^p E[exp(-|A x - y|^2/2)] with x i.i.d. Laplace(1).
inline PartitionEstimate z_naive_mc(const ProblemInstance& prob, std::int64_t N, std::uint64_t seed,
                                    const MonteCarloOptions& opt = {}) {
  if (N < 1) throw std::invalid_argument("z_naive_mc: N must be >= 1");
  const int p = prob.p;
  auto parts = detail::run_chunks<detail::SweepAcc>(
      N, opt.chunk_size, opt.threads, [&](std::uint64_t chunk, std::int64_t b, std::int64_t e) {
        Rng rng = detail::chunk_rng(seed, chunk);
        detail::SweepAcc acc;
        for (std::int64_t i = b; i < e; ++i) {
          const Vec x = laplace_vector(p, rng);
          acc.add(std::exp(-0.5 * (prob.A * x - prob.y).squaredNorm()));
        }
        return acc;
      });
  const detail::SweepAcc acc = detail::merge_all(parts);
  const double scale = std::ldexp(1.0, p);
  PartitionEstimate est;
  est.method = PartitionMethod::naive_mc;
  est.n_samples = N;
  est.z = scale * acc.mean;
  est.std_err = N > 1 ? scale * std::sqrt(acc.m2 / static_cast<double>(N - 1) / static_cast<double>(N)) : 0.0;
  est.z_min = 0.0;
  est.z_max = std::numeric_limits<double>::infinity();
  return est;
}

}  // namespace lassogeom
