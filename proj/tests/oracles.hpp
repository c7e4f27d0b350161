#pragma once

// Reference computations used by the tests. None of them goes through the
// closed forms under test: quadratures are double-exponential rules in long
// double on the direct integrands, ground-truth Z is a tensor Gauss-Legendre
// grid, and the spectral norm comes from an SVD.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/SVD>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "lassogeom/lassogeom.hpp"

namespace oracle {

using lassogeom::Mat;
using lassogeom::ProblemInstance;
using lassogeom::Vec;
using LD = long double;

inline LD integrate_finite(const std::function<LD(LD)>& f, LD a, LD b) {
  if (!(b > a)) return 0;
  // mapped onto [0, 1] so abscissae never round onto a far-from-zero endpoint
  boost::math::quadrature::tanh_sinh<LD> ts(15);
  const LD w = b - a;
  auto g = [&](LD t) { return f(a + w * t) * w; };
  return ts.integrate(g, LD(0), LD(1), std::sqrt(std::numeric_limits<LD>::epsilon()) * 1e-3L);
}

inline LD integrate_tail(const std::function<LD(LD)>& f, LD a) {
  boost::math::quadrature::exp_sinh<LD> es(12);
  return es.integrate(f, a, std::numeric_limits<LD>::infinity(),
                      std::sqrt(std::numeric_limits<LD>::epsilon()) * 1e-3L);
}

/// Gamma(a, x) = int_x^inf e^{-t} t^{a-1} dt, any real a when x > 0.
inline LD upper_gamma(LD a, LD x) {
  // e^{-x} int_0^inf e^{-u} (x+u)^{a-1} du keeps the integrand O(1).
  auto f = [&](LD u) {
    const LD t = x + u;
    if (!(t > 0)) return LD(0);
    return std::exp(-u + (a - 1) * std::log(t));
  };
  return std::exp(-x) * integrate_tail(f, 0);
}

/// gamma(a, x) = int_0^x e^{-t} t^{a-1} dt, a > 0.
inline LD lower_gamma(LD a, LD x) {
  auto f = [&](LD t) { return t > 0 ? std::exp(-t + (a - 1) * std::log(t)) : LD(0); };
  return integrate_finite(f, 0, x);
}

/// Gamma(n, x) for integer n >= 1: (n-1)! e^{-x} sum_{k<n} x^k / k!.
inline LD upper_gamma_integer(int n, LD x) {
  LD term = 1;
  LD sum = 1;
  for (int k = 1; k < n; ++k) {
    term *= x / k;
    sum += term;
  }
  return std::tgamma(static_cast<LD>(n)) * std::exp(-x) * sum;
}

/// c(p,r) straight from its definition in exact rationals.
inline boost::multiprecision::cpp_rational c_coeff(int p, int r) {
  using boost::multiprecision::cpp_int;
  using boost::multiprecision::cpp_rational;
  cpp_rational total = 0;
  for (int k = 0; k < p; ++k) {
    cpp_int binom = 1;
    for (int i = 0; i < k; ++i) binom = binom * (p - 1 - i) / (i + 1);
    const cpp_rational a(k + 1, 2);
    cpp_rational fall = 1;
    for (int j = 1; j <= r; ++j) fall *= a - j;
    const int sign = ((p - 1 - k) % 2 == 0) ? 1 : -1;
    total += cpp_rational(binom) * sign * fall;
  }
  return total;
}

inline double spectral_norm(const Mat& A) {
  Eigen::JacobiSVD<Mat> svd(A);
  return svd.singularValues()(0);
}

/// Orthonormal basis of null(A) as columns.
inline Mat null_space(const Mat& A) {
  Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullV);
  const Eigen::Index rank = svd.rank();
  return svd.matrixV().rightCols(A.cols() - rank);
}

/// Minimizer of a unimodal function on [lo, hi] by golden-section search.
inline LD golden_min(const std::function<LD(LD)>& f, LD lo, LD hi, int iters = 300) {
  const LD g = (std::sqrt(LD(5)) - 1) / 2;
  LD a = lo, b = hi;
  LD c = b - g * (b - a), d = a + g * (b - a);
  LD fc = f(c), fd = f(d);
  for (int i = 0; i < iters && (b - a) > std::numeric_limits<LD>::epsilon() * (1 + std::abs(a)); ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return (a + b) / 2;
}

/// Root of a nondecreasing function on [lo, hi] by bisection; returns the
/// point where the sign changes (a subgradient containment point at kinks).
inline LD bisect_increasing(const std::function<LD(LD)>& f, LD lo, LD hi, int iters = 400) {
  for (int i = 0; i < iters; ++i) {
    const LD mid = (lo + hi) / 2;
    if (mid == lo || mid == hi) break;
    if (f(mid) < 0) lo = mid; else hi = mid;
  }
  return (lo + hi) / 2;
}

/// Upper end of the region where log_density stays within `drop` of its value
/// at `from`.
inline LD outer_radius(const std::function<LD(LD)>& log_density, LD from, LD drop = 80) {
  const LD ref = log_density(from);
  LD step = std::max<LD>(from, 1);
  LD r = from + step;
  while (log_density(r) - ref > -drop) {
    step *= 2;
    r = from + step;
  }
  return r;
}

/// int_0^inf exp(log_density(r)) dr for a log-concave-times-power density,
/// split at `cuts` (kinks) and at the numerically located mode.
inline LD radial_integral(const std::function<LD(LD)>& log_density, std::vector<LD> cuts = {}) {
  const LD hi = outer_radius(log_density, 0.5L);
  const LD mode = golden_min([&](LD r) { return -log_density(r); }, 0, hi);
  const LD ref = log_density(mode > 0 ? mode : std::numeric_limits<LD>::min());
  auto f = [&](LD r) {
    if (!(r > 0)) return LD(0);
    const LD v = std::exp(log_density(r) - ref);
    return std::isfinite(v) ? v : LD(0);
  };
  cuts.push_back(0);
  cuts.push_back(mode);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  LD total = 0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += integrate_finite(f, cuts[i], cuts[i + 1]);
  total += integrate_tail(f, cuts.back());
  return total * std::exp(ref);
}

/// -|A r theta - y|^2/2 - r|theta|_1 + (p-1) ln r, evaluated directly.
inline LD log_radial_direct(const ProblemInstance& prob, const Vec& theta, LD r) {
  LD misfit = 0;
  for (int i = 0; i < prob.n; ++i) {
    LD v = -static_cast<LD>(prob.y(i));
    for (int k = 0; k < prob.p; ++k) v += static_cast<LD>(prob.A(i, k)) * r * static_cast<LD>(theta(k));
    misfit += v * v;
  }
  LD l1 = 0;
  for (int k = 0; k < prob.p; ++k) l1 += std::abs(static_cast<LD>(theta(k)));
  return -misfit / 2 - r * l1 + (prob.p - 1) * std::log(r);
}

/// J_p(theta) = int_0^inf exp(-|A r theta - y|^2/2 - r|theta|_1) r^{p-1} dr.
inline LD j_p(const ProblemInstance& prob, const Vec& theta) {
  const Vec t = theta / theta.norm();
  return radial_integral([&](LD r) { return log_radial_direct(prob, t, r); });
}

/// h(x) = -|A x - y|^2/2 - |x|_1 in long double.
inline LD h(const ProblemInstance& prob, const Vec& x) {
  LD misfit = 0;
  for (int i = 0; i < prob.n; ++i) {
    LD v = -static_cast<LD>(prob.y(i));
    for (int k = 0; k < prob.p; ++k) v += static_cast<LD>(prob.A(i, k)) * static_cast<LD>(x(k));
    misfit += v * v;
  }
  LD l1 = 0;
  for (int k = 0; k < prob.p; ++k) l1 += std::abs(static_cast<LD>(x(k)));
  return -misfit / 2 - l1;
}

/// log f(r theta) + (p-1) ln r with f(x) = exp(h(x + l) - h(l)).
inline LD log_shifted_direct(const ProblemInstance& prob, const Vec& l, const Vec& theta, LD r) {
  LD misfit = 0;
  for (int i = 0; i < prob.n; ++i) {
    LD v = -static_cast<LD>(prob.y(i));
    for (int k = 0; k < prob.p; ++k) {
      v += static_cast<LD>(prob.A(i, k)) * (r * static_cast<LD>(theta(k)) + static_cast<LD>(l(k)));
    }
    misfit += v * v;
  }
  LD l1 = 0;
  for (int k = 0; k < prob.p; ++k) l1 += std::abs(r * static_cast<LD>(theta(k)) + static_cast<LD>(l(k)));
  return -misfit / 2 - l1 - h(prob, l) + (prob.p - 1) * std::log(r);
}

/// Radii where a coordinate of r theta + l changes sign.
inline std::vector<LD> sign_changes(const Vec& l, const Vec& theta) {
  std::vector<LD> out;
  for (Eigen::Index i = 0; i < l.size(); ++i) {
    if (theta(i) != 0.0) {
      const LD r = -static_cast<LD>(l(i)) / static_cast<LD>(theta(i));
      if (r > 0) out.push_back(r);
    }
  }
  return out;
}

/// J_p(theta, l) = int_0^inf f(r theta) r^{p-1} dr.
inline LD j_p_shifted(const ProblemInstance& prob, const Vec& l, const Vec& theta) {
  const Vec t = theta / theta.norm();
  return radial_integral([&](LD r) { return log_shifted_direct(prob, l, t, r); }, sign_changes(l, t));
}

/// Z = int exp(h(x)) dx on a tensor grid of composite Gauss-Legendre rules,
/// per axis [-L, 0] and [0, L] cut into `panels` panels.
inline double z_tensor_grid(const ProblemInstance& prob, double L = 24.0, int panels = 8) {
  if (prob.p != 3) throw std::invalid_argument("z_tensor_grid: p must be 3");
  using rule = boost::math::quadrature::gauss<double, 20>;
  std::vector<double> nodes, weights;
  const double w = L / panels;
  for (int side : {-1, 1}) {
    for (int k = 0; k < panels; ++k) {
      const double c = side * (k + 0.5) * w;
      for (std::size_t i = 0; i < rule::abscissa().size(); ++i) {
        const double xa = rule::abscissa()[i];
        const double wa = rule::weights()[i];
        nodes.push_back(c + 0.5 * w * xa);
        weights.push_back(0.5 * w * wa);
        if (xa != 0.0) {
          nodes.push_back(c - 0.5 * w * xa);
          weights.push_back(0.5 * w * wa);
        }
      }
    }
  }
  const Mat& A = prob.A;
  long double total = 0;
  Vec x(3);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    x(0) = nodes[i];
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      x(1) = nodes[j];
      long double partial = 0;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        x(2) = nodes[k];
        const double e = -0.5 * (A * x - prob.y).squaredNorm() - x.lpNorm<1>();
        partial += weights[k] * std::exp(e);
      }
      total += weights[i] * weights[j] * partial;
    }
  }
  return static_cast<double>(total);
}

/// Kolmogorov-Smirnov distance between sorted samples and a CDF.
inline double ks_distance(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = cdf(xs[i]);
    d = std::max({d, std::abs(F - i / n), std::abs((i + 1) / n - F)});
  }
  return d;
}

/// KS distance between an equally weighted sample and a weighted sample.
inline double ks_weighted(std::vector<double> xs, std::vector<std::pair<double, double>> weighted) {
  std::sort(xs.begin(), xs.end());
  std::sort(weighted.begin(), weighted.end());
  double W = 0.0;
  for (const auto& p : weighted) W += p.second;
  double c = 0.0, d = 0.0;
  std::size_t j = 0;
  const double n = static_cast<double>(xs.size());
  for (const auto& p : weighted) {
    c += p.second / W;
    while (j < xs.size() && xs[j] <= p.first) ++j;
    d = std::max(d, std::abs(c - j / n));
  }
  return d;
}

}  // namespace oracle
