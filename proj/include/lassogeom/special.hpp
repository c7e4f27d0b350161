#pragma once

// Scalar special functions: incomplete gamma functions (including the
// extension to a <= 0), the truncated asymptotic expansion of Gamma(a,x),
// falling products and the combinatorial coefficients c(p,r).

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace lassogeom {

/// Truncated expansion of Gamma(a,x) together with a guaranteed bound on the
/// absolute truncation error.
struct ExpansionResult {
  double value = 0.0;
  double remainder_bound = 0.0;
};

/// (a-1)(a-2)...(a-r).
template <class Real>
Real falling_product(Real a, int r) {
  if (r < 1) {
    throw std::invalid_argument("falling_product: r must be >= 1");
  }
  Real out = 1;
  for (int j = 1; j <= r; ++j) {
    out *= (a - static_cast<Real>(j));
  }
  return out;
}

namespace detail {

inline constexpr int kGammaMaxIter = 100000;

template <class Real>
constexpr Real gamma_eps() {
  return std::numeric_limits<Real>::epsilon();
}

// S(a,x) = sum_{n>=0} x^n / (a (a+1) ... (a+n)), so that
// gamma(a,x) = e^{-x} x^a S(a,x). Requires a > 0.
template <class Real>
Real lower_gamma_series(Real a, Real x) {
  Real term = 1 / a;
  Real sum = term;
  for (int n = 1; n < kGammaMaxIter; ++n) {
    term *= x / (a + static_cast<Real>(n));
    sum += term;
    if (std::abs(term) <= std::abs(sum) * gamma_eps<Real>()) {
      return sum;
    }
  }
  throw std::runtime_error("lower_gamma_series: no convergence");
}

// Modified Lentz evaluation of the continued fraction H(a,x) with
// Gamma(a,x) = e^{-x} x^a H(a,x). Valid for x > 0 and any real a; converges
// quickly once x > a - 1.
template <class Real>
Real upper_gamma_cf(Real a, Real x) {
  const Real tiny = std::numeric_limits<Real>::min() / gamma_eps<Real>();
  Real b = x + 1 - a;
  if (std::abs(b) < tiny) b = tiny;
  Real c = 1 / tiny;
  Real d = 1 / b;
  Real h = d;
  for (int i = 1; i < kGammaMaxIter; ++i) {
    const Real an = -static_cast<Real>(i) * (static_cast<Real>(i) - a);
    b += 2;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1 / d;
    const Real del = d * c;
    h *= del;
    if (std::abs(del - 1) <= gamma_eps<Real>()) {
      return h;
    }
  }
  throw std::runtime_error("upper_gamma_cf: no convergence");
}

// E1(x) = Gamma(0,x) for 0 < x < 1 by its convergent series.
template <class Real>
Real exp_integral_e1_series(Real x) {
  constexpr Real euler_gamma = static_cast<Real>(0.577215664901532860606512090082402431L);
  Real sum = 0;
  Real term = 1;
  for (int k = 1; k < kGammaMaxIter; ++k) {
    term *= -x / static_cast<Real>(k);
    const Real add = term / static_cast<Real>(k);
    sum += add;
    if (std::abs(add) <= std::abs(sum) * gamma_eps<Real>()) break;
  }
  return -euler_gamma - std::log(x) - sum;
}

template <class Real>
Real power_exp(Real a, Real x) {
  // x^a e^{-x}, x > 0
  return std::exp(a * std::log(x) - x);
}

}  // namespace detail

/// Upper incomplete gamma Gamma(a,x) = int_x^inf e^{-t} t^{a-1} dt.
/// Defined for a > 0, x >= 0 and, by the same integral, for any real a when
/// x > 0.
template <class Real>
Real upper_inc_gamma(Real a, Real x) {
  if (!(x >= 0) || std::isnan(a)) {
    throw std::domain_error("upper_inc_gamma: x must be >= 0");
  }
  if (a > 0) {
    if (x == 0) return std::tgamma(a);
    if (x < a + 1) {
      return std::tgamma(a) - detail::power_exp(a, x) * detail::lower_gamma_series(a, x);
    }
    return detail::power_exp(a, x) * detail::upper_gamma_cf(a, x);
  }
  if (x == 0) {
    throw std::domain_error("upper_inc_gamma: integral diverges for a <= 0 at x = 0");
  }
  if (x >= 1) {
    return detail::power_exp(a, x) * detail::upper_gamma_cf(a, x);
  }
  // Small x: step down Gamma(b,x) = (Gamma(b+1,x) - x^b e^{-x}) / b from
  // a start value with b in (0,1], or from E1 when a is an integer.
  Real b;
  Real g;
  if (a == std::round(a)) {
    b = 0;
    g = detail::exp_integral_e1_series(x);
  } else {
    b = a + std::ceil(-a);
    g = upper_inc_gamma(b, x);
  }
  while (b - 1 >= a - static_cast<Real>(0.5)) {
    b -= 1;
    g = (g - detail::power_exp(b, x)) / b;
  }
  return g;
}

/// e^x Gamma(a,x); finite for large x where Gamma(a,x) itself underflows.
template <class Real>
Real upper_inc_gamma_scaled(Real a, Real x) {
  if (a > 0) {
    if (x == 0) return std::tgamma(a);
    if (x < a + 1) {
      return std::exp(x) * std::tgamma(a) - std::exp(a * std::log(x)) * detail::lower_gamma_series(a, x);
    }
    return std::exp(a * std::log(x)) * detail::upper_gamma_cf(a, x);
  }
  if (x >= 1) {
    return std::exp(a * std::log(x)) * detail::upper_gamma_cf(a, x);
  }
  return std::exp(x) * upper_inc_gamma(a, x);
}

/// Lower incomplete gamma gamma(a,x) = int_0^x e^{-t} t^{a-1} dt, a > 0.
template <class Real>
Real lower_inc_gamma(Real a, Real x) {
  if (!(a > 0)) {
    throw std::domain_error("lower_inc_gamma: a must be > 0");
  }
  if (!(x >= 0)) {
    throw std::domain_error("lower_inc_gamma: x must be >= 0");
  }
  if (x == 0) return 0;
  if (std::isinf(x)) return std::tgamma(a);
  if (x < a + 1) {
    return detail::power_exp(a, x) * detail::lower_gamma_series(a, x);
  }
  return std::tgamma(a) - detail::power_exp(a, x) * detail::upper_gamma_cf(a, x);
}

/// Truncated asymptotic expansion
///   Gamma(a,x) ~ e^{-x} x^{a-1} (1 + sum_{r=1}^{M-1} (a)_r x^{-r})
/// with (a)_r the falling product. The remainder equals (a)_M Gamma(a-M,x),
/// hence |R| <= |(a)_M| e^{-x} x^{a-1-M} whenever M > a - 1.
inline ExpansionResult gamma_expansion(double a, double x, int M) {
  if (!(x > 0)) {
    throw std::domain_error("gamma_expansion: x must be > 0");
  }
  if (M < 1 || !(static_cast<double>(M) > a - 1)) {
    throw std::invalid_argument("gamma_expansion: requires M >= 1 and M > a - 1");
  }
  const double lead = std::exp((a - 1) * std::log(x) - x);
  double term = 1.0;
  double sum = 1.0;
  for (int r = 1; r < M; ++r) {
    term *= (a - r) / x;
    sum += term;
  }
  term *= (a - M) / x;
  return {lead * sum, std::abs(term) * lead};
}

/// Exact c(p,r) = sum_{k=0}^{p-1} C(p-1,k) (-1)^{p-1-k} ((k+1)/2)_r.
/// Each falling product of (k+1)/2 is an integer over 2^r, so the sum is
/// accumulated as an exact integer numerator.
inline boost::multiprecision::cpp_rational c_coeff_exact(int p, int r) {
  using boost::multiprecision::cpp_int;
  using boost::multiprecision::cpp_rational;
  if (p < 1 || r < 0) {
    throw std::invalid_argument("c_coeff: requires p >= 1 and r >= 0");
  }
  cpp_int numerator = 0;
  cpp_int binom = 1;  // C(p-1, k)
  for (int k = 0; k < p; ++k) {
    cpp_int prod = 1;
    for (int j = 1; j <= r; ++j) {
      prod *= (k + 1 - 2 * j);
    }
    const bool negative = ((p - 1 - k) % 2) != 0;
    const cpp_int term = binom * prod;
    if (negative) {
      numerator -= term;
    } else {
      numerator += term;
    }
    binom = binom * (p - 1 - k) / (k + 1);
  }
  return cpp_rational(numerator, cpp_int(1) << r);
}

inline double c_coeff(int p, int r) {
  if (p < 2 || r < 1) {
    throw std::invalid_argument("c_coeff: requires p >= 2 and r >= 1");
  }
  return c_coeff_exact(p, r).convert_to<double>();
}

namespace detail {

// c(p,r) for r = 0..M as long doubles; cached per (p, M).
inline const std::vector<long double>& c_coeff_table(int p, int M) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::vector<long double>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find({p, M});
  if (it == cache.end()) {
    std::vector<long double> table(static_cast<std::size_t>(M) + 1);
    for (int r = 0; r <= M; ++r) {
      table[static_cast<std::size_t>(r)] = c_coeff_exact(p, r).convert_to<long double>();
    }
    it = cache.emplace(std::make_pair(p, M), std::move(table)).first;
  }
  return it->second;
}

}  // namespace detail

}  // namespace lassogeom
