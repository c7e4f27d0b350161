#pragma once

// Geometry around a point l (typically a lasso point): the density
// f(x) = exp(h(x) - h(0)) with h(x) = -|A(x+l) - y|^2/2 - |x+l|_1, its
// piecewise radial structure, closed-form J_p(theta,l), mode, bracket and an
// exact sampler of the posterior.
//
// Along r theta, |r theta + l|_1 = l1_k r + c_k on [l_theta(k), l_theta(k+1)),
// so on that segment
//   log f(r theta) = -a^2 r^2/2 - lambda_k r + |l|_1 - c_k,
// with a = |A theta|_2 and lambda_k = l1_k - <A theta, y - A l>.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "lassogeom/problem.hpp"
#include "lassogeom/radial.hpp"
#include "lassogeom/special.hpp"

namespace lassogeom {

struct ShiftSegment {
  double lo = 0.0;
  double hi = 0.0;  // +inf on the last segment
  double c = 0.0;
  double l1 = 0.0;
  double slope = 0.0;
  // Unset when A theta = 0.
  std::optional<double> beta;
  std::optional<double> alpha;
  std::optional<double> x;
  std::optional<double> y;

  bool empty() const { return !(hi > lo); }
};

struct ShiftContext {
  Vec l;
  Vec theta;
  Vec A_theta;
  Vec y_l;
  double norm_A_theta = 0.0;
  double s_l = 0.0;
  double b_l = 0.0;
  double l_norm1 = 0.0;
  /// h(0) = -(|A l - y|^2/2 + |l|_1).
  double h0 = 0.0;
  std::vector<int> S0;
  std::vector<int> S_plus;
  std::vector<int> S_minus;  // sorted by |l_i| / |theta_i|
  std::vector<double> breakpoints;  // 0, ..., +inf; size |S_-| + 2
  std::vector<ShiftSegment> segments;
  int k0 = -1;
  int k1 = 0;
  std::vector<int> I1;  // l1_k = 0
  std::vector<int> I2;  // l1_k > 0

  bool is_null() const { return norm_A_theta == 0.0; }

  /// log f(r theta), evaluated directly.
  double log_f(double r) const {
    const double a = norm_A_theta;
    const double d = A_theta.dot(y_l);
    return -0.5 * a * a * r * r + r * d - (r * theta + l).lpNorm<1>() + l_norm1;
  }
};

inline ShiftContext build_shift_context(const ProblemInstance& prob, const Vec& l, const Vec& theta) {
  const int p = prob.p;
  if (l.size() != p || theta.size() != p) {
    throw std::invalid_argument("build_shift_context: l and theta must have p entries");
  }
  const double tn = theta.norm();
  if (!(tn > 0.0)) {
    throw std::invalid_argument("build_shift_context: zero direction");
  }
  ShiftContext ctx;
  ctx.l = l;
  ctx.theta = theta / tn;
  ctx.y_l = prob.y - prob.A * l;
  ctx.A_theta = prob.A * ctx.theta;
  ctx.l_norm1 = l.lpNorm<1>();
  ctx.h0 = -(0.5 * ctx.y_l.squaredNorm() + ctx.l_norm1);
  double a = ctx.A_theta.norm();
  if (a <= null_threshold(prob)) {
    a = 0.0;
    ctx.A_theta.setZero();
  }
  ctx.norm_A_theta = a;
  const double d = ctx.A_theta.dot(ctx.y_l);
  const double yl_norm = ctx.y_l.norm();
  ctx.b_l = a > 0.0 ? d / a : 0.0;
  ctx.s_l = (a > 0.0 && yl_norm > 0.0) ? std::clamp(d / (a * yl_norm), -1.0, 1.0) : 0.0;

  const Vec& th = ctx.theta;
  for (int i = 0; i < p; ++i) {
    if (th(i) == 0.0) {
      ctx.S0.push_back(i);
    } else if (th(i) * l(i) >= 0.0) {
      ctx.S_plus.push_back(i);
    } else {
      ctx.S_minus.push_back(i);
    }
  }
  std::stable_sort(ctx.S_minus.begin(), ctx.S_minus.end(), [&](int i, int j) {
    return std::abs(l(i)) / std::abs(th(i)) < std::abs(l(j)) / std::abs(th(j));
  });
  const int m = static_cast<int>(ctx.S_minus.size());
  ctx.breakpoints.push_back(0.0);
  for (int i : ctx.S_minus) ctx.breakpoints.push_back(std::abs(l(i)) / std::abs(th(i)));
  ctx.breakpoints.push_back(std::numeric_limits<double>::infinity());

  double c_fixed = 0.0;
  double l1_fixed = 0.0;
  for (int i : ctx.S0) c_fixed += std::abs(l(i));
  for (int i : ctx.S_plus) {
    c_fixed += std::abs(l(i));
    l1_fixed += std::abs(th(i));
  }
  const double misfit2 = ctx.y_l.squaredNorm();
  const double l1_tol = 64.0 * std::numeric_limits<double>::epsilon() * th.lpNorm<1>();
  for (int k = 0; k <= m; ++k) {
    ShiftSegment seg;
    seg.lo = ctx.breakpoints[static_cast<std::size_t>(k)];
    seg.hi = ctx.breakpoints[static_cast<std::size_t>(k + 1)];
    double c = c_fixed;
    double l1 = l1_fixed;
    for (int j = 0; j < m; ++j) {
      const int i = ctx.S_minus[static_cast<std::size_t>(j)];
      if (j < k) {
        c -= std::abs(l(i));
        l1 += std::abs(th(i));
      } else {
        c += std::abs(l(i));
        l1 -= std::abs(th(i));
      }
    }
    if (std::abs(l1) <= l1_tol) l1 = 0.0;
    seg.c = c;
    seg.l1 = l1;
    seg.slope = l1 - d;
    if (a > 0.0) {
      const double beta = seg.slope / a;
      seg.beta = beta;
      seg.alpha = 0.5 * (misfit2 - beta * beta) + c;
      seg.x = a * seg.lo + beta;
      seg.y = std::isinf(seg.hi) ? std::numeric_limits<double>::infinity() : a * seg.hi + beta;
    }
    if (l1 == 0.0) {
      ctx.I1.push_back(k);
    } else if (l1 > 0.0) {
      ctx.I2.push_back(k);
    }
    ctx.segments.push_back(seg);
  }
  ctx.k0 = -1;
  ctx.k1 = m + 1;
  if (a > 0.0) {
    for (int k = 0; k <= m; ++k) {
      if (*ctx.segments[static_cast<std::size_t>(k)].x < 0.0) ctx.k0 = k;
    }
    for (int k = m; k >= 0; --k) {
      if (*ctx.segments[static_cast<std::size_t>(k)].y > 0.0) ctx.k1 = k;
    }
  }
  return ctx;
}

namespace detail {

// e^{tau*^2/2} int_x^y e^{-tau^2/2} tau^j dtau with tau* the point of [x,y]
// closest to 0; y may be +inf.
inline long double gauss_moment_scaled(int j, long double x, long double y) {
  const long double A = static_cast<long double>(j + 1) / 2;
  const long double cj = std::pow(std::sqrt(2.0L), static_cast<long double>(j - 1));
  const long double sign = (j % 2 == 0) ? 1.0L : -1.0L;
  const long double X = x * x / 2;
  if (x >= 0) {
    if (std::isinf(y)) return cj * upper_inc_gamma_scaled<long double>(A, X);
    const long double Y = y * y / 2;
    const long double gap = (y - x) * (y + x) / 2;
    return cj * (upper_inc_gamma_scaled<long double>(A, X) - std::exp(-gap) * upper_inc_gamma_scaled<long double>(A, Y));
  }
  if (y <= 0) {
    const long double Y = y * y / 2;
    const long double gap = (x - y) * (x + y) / 2;
    return sign * cj *
           (upper_inc_gamma_scaled<long double>(A, Y) - std::exp(-gap) * upper_inc_gamma_scaled<long double>(A, X));
  }
  const long double right = std::isinf(y) ? std::tgamma(A) : lower_inc_gamma<long double>(A, y * y / 2);
  return cj * (sign * lower_inc_gamma<long double>(A, X) + right);
}

// 30-point Gauss-Legendre of exp(log_density) on a finite [lo, hi]. Used
// where a closed-form difference keeps less than 1e-3 of its terms, which
// only happens on segments short against the scale of the integrand.
inline double segment_gauss_legendre(const std::function<double(double)>& log_density, double lo, double hi) {
  const double ref = log_density(0.5 * (lo + hi));
  auto f = [&](double r) { return std::exp(log_density(r) - ref); };
  return boost::math::quadrature::gauss<double, 30>::integrate(f, lo, hi) * std::exp(ref);
}

inline constexpr long double kCancelLimit = 1e-3L;

// int_lo^hi exp(base - rate r) r^{p-1} dr.
inline double exp_segment_mass(double base, double rate, double lo, double hi, int p) {
  if (rate > 0.0) {
    const double P = p;
    const double X = rate * lo;
    if (std::isinf(hi)) {
      return std::exp(base - X - p * std::log(rate)) * upper_inc_gamma_scaled<double>(P, X);
    }
    const double split = P / rate;
    if (lo < split && split < hi) {
      return exp_segment_mass(base, rate, lo, split, p) + exp_segment_mass(base, rate, split, hi, p);
    }
    long double diff, scale, log_pre;
    const long double xl = static_cast<long double>(rate) * lo;
    const long double xh = static_cast<long double>(rate) * hi;
    if (hi <= split) {
      // increasing integrand: lower gamma difference
      scale = lower_inc_gamma<long double>(P, xh);
      diff = scale - (lo > 0.0 ? lower_inc_gamma<long double>(P, xl) : 0.0L);
      log_pre = base - p * std::log(static_cast<long double>(rate));
    } else {
      scale = upper_inc_gamma_scaled<long double>(P, xl);
      diff = scale - std::exp(-(xh - xl)) * upper_inc_gamma_scaled<long double>(P, xh);
      log_pre = base - xl - p * std::log(static_cast<long double>(rate));
    }
    if (diff < kCancelLimit * scale) {
      return segment_gauss_legendre([&](double r) { return base - rate * r + (p - 1) * std::log(r); }, lo, hi);
    }
    return static_cast<double>(std::exp(log_pre) * diff);
  }
  if (std::isinf(hi)) return std::numeric_limits<double>::infinity();
  if (rate == 0.0) {
    return std::exp(base) * (std::pow(hi, p) - std::pow(lo, p)) / p;
  }
  // rate < 0: sum_n |rate|^n (hi^{p+n} - lo^{p+n}) / (n! (p+n)), all terms > 0.
  const double mu = -rate;
  const double log_mu = std::log(mu);
  const double log_hi = std::log(hi);
  const double ratio_log = lo > 0.0 ? std::log(lo) - log_hi : -std::numeric_limits<double>::infinity();
  double log_max = -std::numeric_limits<double>::infinity();
  std::vector<double> logs;
  for (int n = 0; n < 1000000; ++n) {
    const double e = p + n;
    const double lt = n * log_mu + e * log_hi - std::lgamma(n + 1.0) - std::log(e) +
                      std::log1p(-std::exp(e * ratio_log));
    logs.push_back(lt);
    log_max = std::max(log_max, lt);
    if (n > mu * hi + 10 && lt < log_max - 45.0) break;
  }
  double sum = 0.0;
  for (double lt : logs) sum += std::exp(lt - log_max);
  return std::exp(base + log_max) * sum;
}

// Tail T(R) = int_R^inf exp(-a^2 r^2/2 - lambda r) r^{p-1} dr as
// exp(-(a^2 R^2/2 + lambda R)) * sum_j C(p-1,j) R^{p-1-j} (a b)^{-(j+1)} Phi_0_{j+1}(b),
// b = a R + lambda/a > 0. Returned as (log prefactor, sum).
inline std::pair<double, long double> gauss_tail(double a, double lambda, double R, int p) {
  const long double b = static_cast<long double>(a * R) + static_cast<long double>(lambda / a);
  const long double ab = static_cast<long double>(a) * b;
  long double sum = 0;
  long double binom = 1;  // C(p-1, j) built from j = p-1 downwards
  for (int j = p - 1; j >= 0; --j) {
    const int e = p - 1 - j;
    if (e > 0 && R == 0.0) break;
    const long double term = binom * ipow<long double>(R, e) *
                             std::exp(-(j + 1) * std::log(ab)) * phi0_value(j + 1, b);
    sum += term;
    binom = binom * static_cast<long double>(j) / static_cast<long double>(e + 1);
  }
  const double log_pre = -(0.5 * a * a * R * R + lambda * R);
  return {log_pre, sum};
}

inline double gauss_segment_mass(double base, double a, double lambda, double lo, double hi, int p) {
  const double beta = lambda / a;
  if (beta > 1.0) {
    const auto [e_lo, s_lo] = gauss_tail(a, lambda, lo, p);
    const double first = std::exp(base + e_lo) * static_cast<double>(s_lo);
    if (std::isinf(hi)) return first;
    const auto [e_hi, s_hi] = gauss_tail(a, lambda, hi, p);
    const double out = first - std::exp(base + e_hi) * static_cast<double>(s_hi);
    if (out < static_cast<double>(kCancelLimit) * first) {
      return segment_gauss_legendre(
          [&](double r) { return base - 0.5 * a * a * r * r - lambda * r + (p - 1) * std::log(r); }, lo, hi);
    }
    return out;
  }
  const long double x = static_cast<long double>(a) * lo + beta;
  const long double y = std::isinf(hi) ? std::numeric_limits<long double>::infinity()
                                       : static_cast<long double>(a) * hi + beta;
  const double r_star = std::clamp(-lambda / (a * a), lo, hi);
  const double e_ref = base - (0.5 * a * a * r_star * r_star + lambda * r_star);
  long double sum = 0;
  long double sum_abs = 0;
  long double binom = 1;
  for (int j = 0; j < p; ++j) {
    const long double term =
        binom * ipow<long double>(-static_cast<long double>(beta), p - 1 - j) * gauss_moment_scaled(j, x, y);
    sum += term;
    sum_abs += std::abs(term);
    binom = binom * static_cast<long double>(p - 1 - j) / static_cast<long double>(j + 1);
  }
  if (!std::isinf(hi) && std::abs(sum) < kCancelLimit * sum_abs) {
    return segment_gauss_legendre(
        [&](double r) { return base - 0.5 * a * a * r * r - lambda * r + (p - 1) * std::log(r); }, lo, hi);
  }
  return static_cast<double>(std::exp(static_cast<long double>(e_ref) - p * std::log(static_cast<long double>(a))) * sum);
}

inline std::vector<std::size_t> nonempty_segments(const ShiftContext& ctx) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < ctx.segments.size(); ++k) {
    if (!ctx.segments[k].empty()) out.push_back(k);
  }
  return out;
}

// int_0^inf exp(|l|_1 - |r theta + l|_1) r^{p-1} dr: the radial mass of the
// Laplace law centred at -l, seen from the origin.
inline double laplace_radial_mass(const ShiftContext& ctx, int p) {
  double total = 0.0;
  for (std::size_t k : nonempty_segments(ctx)) {
    const ShiftSegment& s = ctx.segments[k];
    total += exp_segment_mass(ctx.l_norm1 - s.c, s.l1, s.lo, s.hi, p);
  }
  return total;
}

}  // namespace detail

/// Unique minimizer of phi(r,theta,l): closed-form root of
/// a^2 r^2 + lambda_k r - (p-1) = 0 per segment, else the breakpoint where
/// the subgradient contains 0.
inline double mode_radius_shifted(const ShiftContext& ctx, int p) {
  const double a = ctx.norm_A_theta;
  const auto idx = detail::nonempty_segments(ctx);
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const ShiftSegment& s = ctx.segments[idx[n]];
    const double r = detail::radial_mode(a, s.slope, p);
    if (r >= s.lo && r < s.hi) return r;
    if (n + 1 < idx.size()) {
      const ShiftSegment& next = ctx.segments[idx[n + 1]];
      const double h = s.hi;
      const double log_term = p == 1 ? 0.0 : (p - 1) / h;
      const double left = a * a * h + s.slope - log_term;
      const double right = a * a * h + next.slope - log_term;
      if (left <= 0.0 && right >= 0.0) return h;
    }
  }
  const ShiftSegment& last = ctx.segments[idx.back()];
  return std::max(detail::radial_mode(a, last.slope, p), last.lo);
}

/// log of f(r theta) r^{p-1}, i.e. -phi(r,theta,l).
inline double shifted_log_density(const ShiftContext& ctx, int p, double r) {
  const double lf = ctx.log_f(r);
  return p == 1 ? lf : lf + (p - 1) * std::log(r);
}

struct ShiftedBounds {
  double lo = 0.0;
  double hi = 0.0;
  double mode_r = 0.0;
  double peak = 0.0;
};

inline ShiftedBounds shifted_bounds(const ShiftContext& ctx, int p) {
  ShiftedBounds b;
  b.mode_r = mode_radius_shifted(ctx, p);
  b.peak = std::exp(p == 1 && b.mode_r == 0.0 ? ctx.log_f(0.0) : shifted_log_density(ctx, p, b.mode_r));
  if (p == 1) {
    b.lo = 0.0;
    b.hi = std::numeric_limits<double>::infinity();
  } else {
    b.lo = b.peak * b.mode_r / p;
    b.hi = b.peak * b.mode_r * bracket_factor(p);
  }
  return b;
}

/// Closed form of J_p(theta,l) = int_0^inf f(r theta) r^{p-1} dr, summed over
/// segments, without any fallback.
inline double j_p_shifted_closed(const ShiftContext& ctx, int p) {
  const double a = ctx.norm_A_theta;
  double total = 0.0;
  for (std::size_t k : detail::nonempty_segments(ctx)) {
    const ShiftSegment& s = ctx.segments[k];
    const double base = ctx.l_norm1 - s.c;
    total += a == 0.0 ? detail::exp_segment_mass(base, s.slope, s.lo, s.hi, p)
                      : detail::gauss_segment_mass(base, a, s.slope, s.lo, s.hi, p);
  }
  return total;
}

/// Adaptive quadrature of J_p(theta,l), split at breakpoints and the mode.
inline double j_p_shifted_quadrature(const ShiftContext& ctx, int p) {
  using boost::math::quadrature::gauss_kronrod;
  const double mode = mode_radius_shifted(ctx, p);
  const double ref = (p == 1 && mode == 0.0) ? ctx.log_f(0.0) : shifted_log_density(ctx, p, mode);
  auto f = [&](double r) {
    if (r <= 0.0) return p == 1 ? std::exp(ctx.log_f(0.0) - ref) : 0.0;
    const double v = std::exp(shifted_log_density(ctx, p, r) - ref);
    return std::isfinite(v) ? v : 0.0;
  };
  std::vector<double> cuts = {0.0};
  for (std::size_t i = 1; i + 1 < ctx.breakpoints.size(); ++i) cuts.push_back(ctx.breakpoints[i]);
  if (mode > 0.0) cuts.push_back(mode);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  cuts.push_back(std::numeric_limits<double>::infinity());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    total += gauss_kronrod<double, 61>::integrate(f, cuts[i], cuts[i + 1], 15, 1e-13);
  }
  return total * std::exp(ref);
}

struct ShiftedMass {
  double mass = 0.0;
  MassMethod method = MassMethod::exact_phi;
};

/// Closed form, replaced by quadrature when it is not finite or leaves the
/// bracket of shifted_bounds.
inline ShiftedMass j_p_shifted_checked(const ShiftContext& ctx, int p) {
  const double mass = j_p_shifted_closed(ctx, p);
  const ShiftedBounds b = shifted_bounds(ctx, p);
  const bool ok = std::isfinite(mass) && mass > 0.0 && mass >= b.lo * (1.0 - 1e-9) && mass <= b.hi * (1.0 + 1e-9);
  if (ok) return {mass, ctx.is_null() ? MassMethod::null_direction : MassMethod::exact_phi};
  return {j_p_shifted_quadrature(ctx, p), MassMethod::quadrature_fallback};
}

inline double j_p_shifted(const ShiftContext& ctx, int p) { return j_p_shifted_checked(ctx, p).mass; }

/// One draw from mu_{theta,l}(r) ~ f(r theta) r^{p-1}, given its mass.
inline double sample_radius_shifted(const ShiftContext& ctx, int p, double mass, Rng& rng) {
  const double a = ctx.norm_A_theta;
  const double mode = mode_radius_shifted(ctx, p);
  const auto idx = detail::nonempty_segments(ctx);
  std::size_t kstar = idx.back();
  for (std::size_t k : idx) {
    if (mode >= ctx.segments[k].lo && mode < ctx.segments[k].hi) {
      kstar = k;
      break;
    }
  }
  if (a == 0.0 && !(ctx.segments[kstar].slope > 0.0)) {
    for (std::size_t k : idx) {
      if (ctx.segments[k].slope > 0.0) {
        kstar = k;
        break;
      }
    }
  }
  const ShiftSegment& env = ctx.segments[kstar];
  const double env_base = ctx.l_norm1 - env.c;
  const detail::PieceMass pm = detail::piece_log_mass(a, env.slope, p);
  double efficiency = 0.0;
  if (std::isfinite(pm.log_mass)) {
    const detail::PieceSampler sampler(a, env.slope, p, pm.log_mass);
    efficiency = std::exp(std::log(mass) - env_base - pm.log_mass) * sampler.efficiency();
    if (std::isfinite(efficiency) && efficiency >= 0.1) {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (;;) {
        const double r = sampler.draw(rng);
        const double log_env = env_base - 0.5 * a * a * r * r - env.slope * r;
        if (unif(rng) <= std::exp(ctx.log_f(r) - log_env)) return r;
      }
    }
  }
  const detail::TabulatedRadial table([&](double r) { return shifted_log_density(ctx, p, r); }, mode);
  return table.draw(rng);
}

/// Exact draw from the posterior c. Directions come from the Laplace law
/// centred at l (direction density ~ its radial mass), thinned by
/// J_p(theta,l) over that mass, then the radius from mu_{theta,l}.
inline Vec sample_posterior(const ProblemInstance& prob, const Vec& l, Rng& rng) {
  const int p = prob.p;
  const double half_misfit = 0.5 * (prob.y - prob.A * l).squaredNorm();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (;;) {
    const Vec x = laplace_vector(p, rng) - l;
    const double xn = x.norm();
    if (!(xn > 0.0)) continue;
    const Vec theta = x / xn;
    const ShiftContext ctx = build_shift_context(prob, l, theta);
    const double log_env = std::log(detail::laplace_radial_mass(ctx, p)) + half_misfit;
    const double u = unif(rng);
    // the bracket rejects most proposals before the closed form is needed
    if (p > 1 && std::log(u) > std::log(shifted_bounds(ctx, p).hi * (1.0 + 1e-6)) - log_env) continue;
    const double mass = j_p_shifted(ctx, p);
    if (u <= std::exp(std::log(mass) - log_env)) {
      const double r = sample_radius_shifted(ctx, p, mass, rng);
      return r * ctx.theta + l;
    }
  }
}

}  // namespace lassogeom
