#pragma once

// Radial law mu_theta(r) ~ exp(-phi(r,theta)) along one direction: closed
// form of J_p(theta), the large-beta expansion, mode, peak, bracket and
// exact radius sampling.
//
// With a = |A theta|_2 and the slope lambda = a * beta,
//   J_p(theta) = e^{-|y|^2/2} a^{-p} W_p(beta),
//   W_p(b)     = int_0^inf exp(-b u - u^2/2) u^{p-1} du,
// and Phi_0(b) = b^p W_p(b) -> (p-1)! as b -> inf.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "lassogeom/problem.hpp"
#include "lassogeom/special.hpp"

namespace lassogeom {

inline constexpr double kBetaSwitch = 13.0;
inline constexpr int kExpansionTerms = 17;

enum class MassMethod { exact_phi, expansion_M, null_direction, quadrature_fallback };

inline std::string to_string(MassMethod m) {
  switch (m) {
    case MassMethod::exact_phi: return "exact_phi";
    case MassMethod::expansion_M: return "expansion_M";
    case MassMethod::null_direction: return "null_direction";
    case MassMethod::quadrature_fallback: return "quadrature_fallback";
  }
  return "unknown";
}

struct RadialSummary {
  double mode_r = 0.0;
  double peak = 0.0;
  double mass = 0.0;
  double mass_lo = 0.0;
  double mass_hi = 0.0;
  MassMethod method = MassMethod::exact_phi;
};

struct RadialOptions {
  double beta_switch = kBetaSwitch;
  int expansion_terms = kExpansionTerms;
  /// Also compare against quadrature at 1e-4 and fall back on disagreement.
  bool validate_with_quadrature = false;
};

/// (p-1)! e^{p-1} / (p-1)^p, the upper bracket constant.
inline double bracket_factor(int p) {
  if (p < 2) return std::numeric_limits<double>::infinity();
  const double pm1 = p - 1;
  return std::exp(std::lgamma(static_cast<double>(p)) + pm1 - p * std::log(pm1));
}

/// p Gamma(p,(p-1)q) e^{p-1} / (p-1)^p: bound on the radial mass beyond
/// q r(theta) relative to the whole radial mass.
inline double tail_bound_factor(double q, int p) {
  if (!(q > 0.0) || p < 2) {
    throw std::invalid_argument("tail_bound_factor: requires q > 0 and p >= 2");
  }
  const double pm1 = p - 1;
  const double x = pm1 * q;
  const double log_gamma_tail = std::log(upper_inc_gamma_scaled<double>(p, x)) - x;
  return std::exp(std::log(static_cast<double>(p)) + log_gamma_tail + pm1 - p * std::log(pm1));
}

namespace detail {

template <class Real>
Real ipow(Real b, int e) {
  Real out = 1;
  for (int i = 0; i < e; ++i) out *= b;
  return out;
}

/// W_p(beta) from the incomplete-gamma closed forms, any sign of beta.
/// For beta >= 0 the sum alternates and loses about 0.03 beta^12 ulps at p=7.
template <class Real>
Real w_closed(int p, Real beta) {
  const Real x = beta * beta / 2;
  const Real sqrt2 = std::sqrt(static_cast<Real>(2));
  Real sum = 0;
  Real binom = 1;
  for (int k = 0; k < p; ++k) {
    const Real a = static_cast<Real>(k + 1) / 2;
    Real t;
    if (beta >= 0 || (k % 2) == 1) {
      // odd k with beta < 0: Gamma(a) - gamma(a,x) = Gamma(a,x)
      t = upper_inc_gamma_scaled<Real>(a, x);
    } else {
      t = std::exp(x) * (std::tgamma(a) + lower_inc_gamma<Real>(a, x));
    }
    const Real pow2 = std::pow(sqrt2, static_cast<Real>(k - 1));
    sum += binom * ipow<Real>(-beta, p - 1 - k) * pow2 * t;
    binom = binom * static_cast<Real>(p - 1 - k) / static_cast<Real>(k + 1);
  }
  return sum;
}

struct Phi0Expansion {
  long double value = 0;
  long double remainder = 0;
};

/// (p-1)! + 2^{p-1} sum_{r=p}^{M-1} c(p,r) (b^2/2)^{p-1-r} and the next-term
/// remainder 2^{p-1} |c(p,M)| (b^2/2)^{p-1-M}.
inline Phi0Expansion phi0_expansion(int p, long double b, int M) {
  const auto& c = c_coeff_table(p, M);
  const long double inv_x = 2.0L / (b * b);
  const long double pow2 = std::ldexp(1.0L, p - 1);
  long double value = std::tgamma(static_cast<long double>(p));
  long double scale = 1;  // (b^2/2)^{p-1-r}
  for (int r = p; r < M; ++r) {
    scale *= inv_x;
    value += pow2 * c[static_cast<std::size_t>(r)] * scale;
  }
  scale *= inv_x;
  return {value, pow2 * std::abs(c[static_cast<std::size_t>(M)]) * scale};
}

struct WValue {
  long double value = 0;
  MassMethod method = MassMethod::exact_phi;
};

/// W_p(beta) choosing the closed form or, past the switch, the expansion when
/// its next-term remainder is below 1e-8 relative.
inline WValue w_value(int p, long double beta, const RadialOptions& opt = {}) {
  if (beta > opt.beta_switch) {
    const int M = std::max(opt.expansion_terms, p + 1);
    const Phi0Expansion e = phi0_expansion(p, beta, M);
    if (e.remainder <= 1e-8L * std::abs(e.value)) {
      return {std::exp(std::log(e.value) - p * std::log(beta)), MassMethod::expansion_M};
    }
  }
  return {w_closed<long double>(p, beta), MassMethod::exact_phi};
}

/// Phi_0 of order p at b > 0, i.e. b^p W_p(b).
inline long double phi0_value(int p, long double b, const RadialOptions& opt = {}) {
  if (b > opt.beta_switch) {
    const int M = std::max(opt.expansion_terms, p + 1);
    const Phi0Expansion e = phi0_expansion(p, b, M);
    if (e.remainder <= 1e-8L * std::abs(e.value)) return e.value;
  }
  return ipow<long double>(b, p) * w_closed<long double>(p, b);
}

/// -a^2 r^2 / 2 - lambda r + (p-1) ln r.
inline double log_radial(double a, double lambda, int p, double r) {
  const double g = 0.5 * a * a * r * r + lambda * r;
  if (p == 1) return -g;
  return -g + (p - 1) * std::log(r);
}

/// Stationary point of log_radial on (0, inf), or 0 when it is decreasing.
inline double radial_mode(double a, double lambda, int p) {
  if (p == 1) return (a > 0.0 && lambda < 0.0) ? -lambda / (a * a) : 0.0;
  const double pm1 = p - 1;
  if (a == 0.0) {
    return lambda > 0.0 ? pm1 / lambda : std::numeric_limits<double>::infinity();
  }
  const double disc = std::hypot(lambda, 2.0 * a * std::sqrt(pm1));
  if (lambda >= 0.0) return 2.0 * pm1 / (lambda + disc);
  return (disc - lambda) / (2.0 * a * a);
}

/// log int_0^inf exp(-a^2 r^2/2 - lambda r) r^{p-1} dr by closed form.
struct PieceMass {
  double log_mass = 0.0;
  MassMethod method = MassMethod::exact_phi;
};

inline PieceMass piece_log_mass(double a, double lambda, int p, const RadialOptions& opt = {}) {
  if (a == 0.0) {
    return {std::lgamma(static_cast<double>(p)) - p * std::log(lambda), MassMethod::null_direction};
  }
  const WValue w = w_value(p, static_cast<long double>(lambda) / a, opt);
  return {static_cast<double>(std::log(w.value)) - p * std::log(a), w.method};
}

/// Adaptive Gauss-Kronrod integral of exp(log_density) over (0, inf), split
/// at the mode and scaled by the density there.
inline double radial_quadrature(const std::function<double(double)>& log_density, double mode) {
  using boost::math::quadrature::gauss_kronrod;
  const double ref = mode > 0.0 ? log_density(mode) : log_density(0.0);
  auto f = [&](double r) {
    if (r <= 0.0) return mode > 0.0 ? 0.0 : std::exp(log_density(0.0) - ref);
    const double v = std::exp(log_density(r) - ref);
    return std::isfinite(v) ? v : 0.0;
  };
  double total = 0.0;
  if (mode > 0.0) total += gauss_kronrod<double, 61>::integrate(f, 0.0, mode, 15, 1e-13);
  total += gauss_kronrod<double, 61>::integrate(f, mode, std::numeric_limits<double>::infinity(), 15,
                                                1e-13);
  return total * std::exp(ref);
}

/// Inverse-CDF sampler on a 4096-point grid covering the region where the
/// log density is within 60 of its peak.
class TabulatedRadial {
 public:
  TabulatedRadial(const std::function<double(double)>& log_density, double mode, int points = 4096) {
    const double ref = log_density(mode);
    const double drop = 60.0;
    auto below = [&](double r) { return !(log_density(r) - ref > -drop); };
    double step = std::max(mode, 1e-8);
    double hi = mode + step;
    for (int i = 0; i < 2000 && !below(hi); ++i) {
      step *= 2.0;
      hi = mode + step;
    }
    double lo_b = mode;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo_b + hi);
      if (below(mid)) hi = mid; else lo_b = mid;
    }
    double lo = 0.0;
    if (mode > 0.0) {
      double a = 0.0;
      double b = mode;
      for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (a + b);
        if (below(mid)) a = mid; else b = mid;
      }
      lo = a;
    }
    r_.resize(static_cast<std::size_t>(points));
    cdf_.assign(static_cast<std::size_t>(points), 0.0);
    std::vector<double> dens(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
      const double r = lo + (hi - lo) * i / (points - 1);
      r_[static_cast<std::size_t>(i)] = r;
      const double v = std::exp(log_density(r) - ref);
      dens[static_cast<std::size_t>(i)] = std::isfinite(v) ? v : 0.0;
    }
    for (std::size_t i = 1; i < r_.size(); ++i) {
      cdf_[i] = cdf_[i - 1] + 0.5 * (dens[i] + dens[i - 1]) * (r_[i] - r_[i - 1]);
    }
    const double total = cdf_.back();
    if (!(total > 0.0)) {
      throw std::runtime_error("TabulatedRadial: empty density");
    }
    for (double& c : cdf_) c /= total;
  }

  double draw(Rng& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.begin()) return r_.front();
    if (it == cdf_.end()) return r_.back();
    const auto i = static_cast<std::size_t>(it - cdf_.begin());
    const double w = cdf_[i] - cdf_[i - 1];
    const double t = w > 0.0 ? (u - cdf_[i - 1]) / w : 0.0;
    return r_[i - 1] + t * (r_[i] - r_[i - 1]);
  }

 private:
  std::vector<double> r_;
  std::vector<double> cdf_;
};

/// Exact sampler for the density ~ exp(-a^2 r^2/2 - lambda r) r^{p-1}.
/// a = 0 is a Gamma(p, lambda) law; otherwise a Gamma(p, rho) envelope with
/// rho = (lambda + sqrt(lambda^2 + 4 p a^2)) / 2 and acceptance
/// exp(-(a r - (rho - lambda)/a)^2 / 2).
class PieceSampler {
 public:
  PieceSampler(double a, double lambda, int p, double log_mass) : a_(a), lambda_(lambda), p_(p) {
    if (a_ == 0.0) {
      if (!(lambda_ > 0.0)) {
        throw std::invalid_argument("PieceSampler: non-integrable piece");
      }
      efficiency_ = 1.0;
      return;
    }
    rho_ = 0.5 * (lambda_ + std::hypot(lambda_, 2.0 * a_ * std::sqrt(static_cast<double>(p_))));
    shift_ = (rho_ - lambda_) / a_;
    const double log_env = std::lgamma(static_cast<double>(p_)) - p_ * std::log(rho_) + 0.5 * shift_ * shift_;
    efficiency_ = std::exp(log_mass - log_env);
  }

  double efficiency() const { return efficiency_; }

  double draw(Rng& rng) const {
    if (a_ == 0.0) {
      std::gamma_distribution<double> gam(p_, 1.0 / lambda_);
      return gam(rng);
    }
    std::gamma_distribution<double> gam(p_, 1.0 / rho_);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (;;) {
      const double r = gam(rng);
      const double z = a_ * r - shift_;
      if (unif(rng) <= std::exp(-0.5 * z * z)) return r;
    }
  }

 private:
  double a_;
  double lambda_;
  int p_;
  double rho_ = 0.0;
  double shift_ = 0.0;
  double efficiency_ = 1.0;
};

}  // namespace detail

/// r(theta) = (-beta + sqrt(beta^2 + 4(p-1))) / (2 |A theta|), evaluated in a
/// form that stays finite as A theta -> 0, where it tends to (p-1)/|theta|_1.
inline double mode_radius(const DirectionStats& st, int p) {
  if (p < 1) throw std::invalid_argument("mode_radius: p must be >= 1");
  return detail::radial_mode(st.norm_A_theta, st.slope, p);
}

/// r(theta) |theta|_1 for y = 0 as a function of beta alone:
/// beta (sqrt(beta^2 + 4(p-1)) - beta) / 2, which tends to p-1.
inline double mode_times_l1(double beta, int p) {
  if (p < 1) throw std::invalid_argument("mode_times_l1: p must be >= 1");
  if (!(beta > 0.0)) throw std::domain_error("mode_times_l1: beta must be > 0");
  const double pm1 = p - 1;
  return 2.0 * pm1 * beta / (beta + std::sqrt(beta * beta + 4.0 * pm1));
}

/// Phi(beta) = |theta|_1^p J_p(theta) from the closed form, in the precision
/// Real. Valid for finite beta >= 0.
template <class Real>
Real phi_beta_in(Real beta, Real s, Real y_norm, int p) {
  if (!(beta >= 0) || !std::isfinite(beta)) {
    throw std::domain_error("phi_beta: beta must be finite and >= 0");
  }
  if (p < 1) throw std::invalid_argument("phi_beta: p must be >= 1");
  const Real w = detail::w_closed<Real>(p, beta);
  return std::exp(-y_norm * y_norm / 2) * detail::ipow<Real>(beta + y_norm * s, p) * w;
}

inline double phi_beta(double beta, double s, double y_norm, int p) {
  return static_cast<double>(phi_beta_in<long double>(beta, s, y_norm, p));
}

/// Phi(beta, M) with the remainder bound
/// e^{-|y|^2/2} |1 + |y| s/beta|^p 2^{p-1} |c(p,M)| (beta^2/2)^{p-1-M}.
inline ExpansionResult phi_beta_m(double beta, double s, double y_norm, int p, int M) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw std::domain_error("phi_beta_m: beta must be finite and > 0");
  }
  if (p < 1 || M < p + 1) {
    throw std::invalid_argument("phi_beta_m: requires M >= p + 1");
  }
  const detail::Phi0Expansion e = detail::phi0_expansion(p, beta, M);
  const long double factor = std::exp(-0.5L * y_norm * y_norm) *
                             detail::ipow<long double>(1.0L + static_cast<long double>(y_norm) * s / beta, p);
  return {static_cast<double>(factor * e.value), static_cast<double>(std::abs(factor) * e.remainder)};
}

/// J_p(theta) with mode, peak and the bracket
/// M r / p <= J_p <= M r (p-1)! e^{p-1} / (p-1)^p.
inline RadialSummary j_p_closed(const DirectionStats& st, int p, double y_norm, const RadialOptions& opt = {}) {
  if (p < 1) throw std::invalid_argument("j_p_closed: p must be >= 1");
  const double a = st.norm_A_theta;
  const double lambda = st.slope;
  const double half_y2 = 0.5 * y_norm * y_norm;
  RadialSummary out;
  out.mode_r = mode_radius(st, p);
  const double log_peak = detail::log_radial(a, lambda, p, out.mode_r) - half_y2;
  out.peak = std::exp(log_peak);
  if (p == 1) {
    out.mass_lo = 0.0;
    out.mass_hi = std::numeric_limits<double>::infinity();
  } else {
    out.mass_lo = out.peak * out.mode_r / p;
    out.mass_hi = out.peak * out.mode_r * bracket_factor(p);
  }

  double mass;
  if (st.is_null()) {
    mass = std::exp(std::lgamma(static_cast<double>(p)) - half_y2 - p * std::log(st.l1_theta));
    out.method = MassMethod::null_direction;
  } else {
    const detail::WValue w = detail::w_value(p, *st.beta, opt);
    mass = std::exp(static_cast<double>(std::log(w.value)) - p * std::log(a) - half_y2);
    out.method = w.method;
  }

  const bool inside = std::isfinite(mass) && mass > 0.0 && mass >= out.mass_lo * (1.0 - 1e-9) &&
                      mass <= out.mass_hi * (1.0 + 1e-9);
  bool use_quadrature = !inside;
  double quad = 0.0;
  if (!use_quadrature && opt.validate_with_quadrature) {
    quad = detail::radial_quadrature([&](double r) { return detail::log_radial(a, lambda, p, r) - half_y2; },
                                     out.mode_r);
    use_quadrature = std::abs(mass - quad) > 1e-4 * quad;
  }
  if (use_quadrature) {
    if (quad == 0.0) {
      quad = detail::radial_quadrature([&](double r) { return detail::log_radial(a, lambda, p, r) - half_y2; },
                                       out.mode_r);
    }
    mass = quad;
    out.method = MassMethod::quadrature_fallback;
  }
  out.mass = mass;
  return out;
}

/// One draw from mu_theta(r) ~ exp(-phi(r,theta)).
inline double sample_radius(const DirectionStats& st, int p, double y_norm, Rng& rng) {
  const double a = st.norm_A_theta;
  const double lambda = st.slope;
  if (st.is_null()) {
    return detail::PieceSampler(0.0, lambda, p, 0.0).draw(rng);
  }
  const RadialSummary rs = j_p_closed(st, p, y_norm);
  const double log_mass = std::log(rs.mass) + 0.5 * y_norm * y_norm;
  const detail::PieceSampler sampler(a, lambda, p, log_mass);
  if (std::isfinite(sampler.efficiency()) && sampler.efficiency() >= 0.1) return sampler.draw(rng);
  const detail::TabulatedRadial table([&](double r) { return detail::log_radial(a, lambda, p, r); }, rs.mode_r);
  return table.draw(rng);
}

}  // namespace lassogeom
