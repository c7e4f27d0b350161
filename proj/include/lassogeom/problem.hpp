#pragma once

// Problem instances (A, y) and per-direction statistics of the polar
// decomposition x = r * theta.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace lassogeom {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

struct ProblemInstance {
  Mat A;
  Vec y;
  double op_norm = 0.0;
  int n = 0;
  int p = 0;
  std::uint64_t seed = 0;

  double y_norm() const { return y.norm(); }
};

/// Spectral norm by power iteration on A^T A.
inline double operator_norm(const Mat& A, double tol = 1e-10, int max_iter = 100000) {
  const Eigen::Index p = A.cols();
  if (p == 0 || A.rows() == 0) return 0.0;
  const Mat G = A.transpose() * A;
  // Fixed pseudo-random start so the result does not depend on caller state.
  Rng rng(0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal;
  Vec v(p);
  for (Eigen::Index i = 0; i < p; ++i) v(i) = normal(rng);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vec w = G * v;
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / wn;
    if (it > 0 && std::abs(next - lambda) <= tol * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

inline ProblemInstance make_problem(Mat A, Vec y, std::uint64_t seed = 0) {
  const auto n = static_cast<int>(A.rows());
  const auto p = static_cast<int>(A.cols());
  if (n < 1 || p < n) {
    throw std::invalid_argument("make_problem: requires p >= n >= 1");
  }
  if (y.size() != A.rows()) {
    throw std::invalid_argument("make_problem: y must have n entries");
  }
  ProblemInstance prob;
  prob.op_norm = operator_norm(A);
  prob.A = std::move(A);
  prob.y = std::move(y);
  prob.n = n;
  prob.p = p;
  prob.seed = seed;
  return prob;
}

/// Entries i.i.d. +-1/sqrt(n), filled row by row from one 64-bit stream.
inline ProblemInstance gen_bernoulli_matrix(int n, int p, std::uint64_t seed) {
  if (n < 1 || p < n) {
    throw std::invalid_argument("gen_bernoulli_matrix: requires p >= n >= 1");
  }
  Rng rng(seed);
  const double v = 1.0 / std::sqrt(static_cast<double>(n));
  Mat A(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) {
      A(i, j) = (rng() >> 63) ? v : -v;
    }
  }
  return make_problem(std::move(A), Vec::Zero(n), seed);
}

namespace detail {

// Sequential sum, so every module reproduces the same bits for |theta|_1.
inline double l1_norm(const Vec& v) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::abs(v(i));
  return s;
}

}  // namespace detail

struct DirectionStats {
  Vec theta;
  Vec A_theta;
  double norm_A_theta = 0.0;
  double l1_theta = 0.0;
  double s = 0.0;
  /// nullopt encodes beta = +infinity (A theta = 0).
  std::optional<double> beta;
  /// ||A theta||_2 * beta = ||theta||_1 - <A theta, y>; finite for every
  /// direction.
  double slope = 0.0;

  bool is_null() const { return !beta.has_value(); }
};

/// Directions whose image is below this size are treated as null directions.
inline double null_threshold(const ProblemInstance& prob) {
  return 32.0 * std::numeric_limits<double>::epsilon() * std::max(prob.op_norm, 1.0) *
         std::sqrt(static_cast<double>(prob.p));
}

inline DirectionStats direction_stats(const ProblemInstance& prob, const Vec& theta) {
  if (theta.size() != prob.p) {
    throw std::invalid_argument("direction_stats: theta must have p entries");
  }
  const double nrm = theta.norm();
  if (!(nrm > 0.0) || !std::isfinite(nrm)) {
    throw std::invalid_argument("direction_stats: zero direction");
  }
  DirectionStats st;
  st.theta = theta / nrm;
  st.A_theta = prob.A * st.theta;
  st.l1_theta = detail::l1_norm(st.theta);
  const double a = st.A_theta.norm();
  const double ynorm = prob.y.norm();
  if (a <= null_threshold(prob)) {
    st.A_theta.setZero();
    st.norm_A_theta = 0.0;
    st.s = 0.0;
    st.beta.reset();
    st.slope = st.l1_theta;
    return st;
  }
  st.norm_A_theta = a;
  const double ay = st.A_theta.dot(prob.y);
  st.s = ynorm > 0.0 ? std::clamp(ay / (a * ynorm), -1.0, 1.0) : 0.0;
  st.slope = st.l1_theta - ay;
  st.beta = st.slope / a;
  return st;
}

/// g(r,theta) = (r^2 |A theta|^2 + 2 r |A theta| beta + |y|^2) / 2.
inline double g_eval(const DirectionStats& st, double r, double y_norm) {
  if (!st.beta) {
    throw std::domain_error("g_eval: beta is infinite");
  }
  const double a = st.norm_A_theta;
  return 0.5 * (r * r * a * a + 2.0 * r * a * *st.beta + y_norm * y_norm);
}

/// phi(r,theta) = g(r,theta) - (p-1) ln r. Uses the slope form, so it is also
/// defined on null directions.
inline double phi_eval(const DirectionStats& st, double r, int p, double y_norm) {
  if (!(r > 0.0)) {
    throw std::domain_error("phi_eval: r must be > 0");
  }
  const double a = st.norm_A_theta;
  const double g = 0.5 * a * a * r * r + st.slope * r + 0.5 * y_norm * y_norm;
  return p == 1 ? g : g - (p - 1) * std::log(r);
}

inline double beta_lower_bound(const ProblemInstance& prob) {
  if (prob.op_norm == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / prob.op_norm - prob.y.norm();
}

inline bool zero_lasso_sufficient(const ProblemInstance& prob) {
  if (prob.op_norm == 0.0) return true;
  return prob.y.norm() <= 1.0 / prob.op_norm;
}

/// Uniform point on the unit sphere (normalized standard Gaussian).
inline Vec uniform_direction(int p, Rng& rng) {
  std::normal_distribution<double> normal;
  Vec v(p);
  double n2 = 0.0;
  do {
    for (int i = 0; i < p; ++i) v(i) = normal(rng);
    n2 = v.squaredNorm();
  } while (n2 == 0.0);
  return v / std::sqrt(n2);
}

/// i.i.d. Laplace(1) coordinates, sign * (-ln(1-U)).
inline Vec laplace_vector(int p, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec v(p);
  for (int i = 0; i < p; ++i) {
    const double e = -std::log1p(-unif(rng));
    v(i) = (rng() >> 63) ? e : -e;
  }
  return v;
}

}  // namespace lassogeom
