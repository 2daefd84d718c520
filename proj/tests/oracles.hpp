// Test-only reference computations, kept independent of the implementation
// paths they check.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "dac/common.hpp"
#include "dac/mamdp.hpp"
#include "dac/features.hpp"

namespace testoracle {

using dac::Mat;
using dac::Vec;

// Extended-precision inner product.
inline double dot_ld(const Vec& a, const Vec& b) {
  long double acc = 0.0L;
  for (long i = 0; i < a.size(); ++i) acc += (long double)a[i] * (long double)b[i];
  return double(acc);
}

// Second largest singular value via a full SVD (independent of the power
// iteration used by the implementation).
inline double second_singular_svd(const Mat& w) {
  if (w.rows() <= 1) return 0.0;
  Eigen::JacobiSVD<Mat> svd(w);
  return svd.singularValues()[1];
}

// Explicit matrix-power evolution of a consensus sequence: rows are nodes.
inline Mat matrix_power_apply(const Mat& w, Mat x, int rounds) {
  for (int r = 0; r < rounds; ++r) x = w * x;
  return x;
}

// Value iteration to tolerance; reference for the linear solve.
inline Vec value_iteration(const Mat& kernel, const Vec& rbar, double gamma,
                           double tol = 1e-13, int max_iter = 100000) {
  Vec v = Vec::Zero(kernel.rows());
  for (int it = 0; it < max_iter; ++it) {
    Vec next = rbar + gamma * (kernel * v);
    double diff = (next - v).lpNorm<Eigen::Infinity>();
    v = next;
    if (diff < tol) break;
  }
  return v;
}

// Truncated power series for the discounted visitation distribution.
inline Vec visitation_series(const Mat& kernel, const Vec& mu0, double gamma,
                             double tail_tol = 1e-13) {
  Vec acc = Vec::Zero(mu0.size());
  Vec marginal = mu0;
  double coef = 1.0;
  while (coef > tail_tol) {
    acc += coef * marginal;
    marginal = kernel.transpose() * marginal;
    coef *= gamma;
  }
  return (1.0 - gamma) * acc;
}

// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x0,
                           double h = 1e-5) {
  return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

// Analytic stationary distribution of a 2-state chain.
inline Vec two_state_stationary(double p01, double p10) {
  Vec mu(2);
  mu[0] = p10 / (p01 + p10);
  mu[1] = p01 / (p01 + p10);
  return mu;
}

}  // namespace testoracle
