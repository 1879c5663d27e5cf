#pragma once

// Helpers and independent oracles shared by the unit tests.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "topimpute/rng.hpp"

namespace testsupport {

inline Eigen::MatrixXd random_design(topimpute::Rng& rng, Eigen::Index n, Eigen::Index p, bool intercept = true) {
  Eigen::MatrixXd X(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = (intercept && j == 0) ? 1.0 : rng.normal();
  return X;
}

/// Solves A x = b by Gaussian elimination with partial pivoting, written out
/// so it shares nothing with Eigen's decompositions.
inline Eigen::VectorXd gauss_solve(Eigen::MatrixXd A, Eigen::VectorXd b) {
  const Eigen::Index n = A.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index piv = k;
    for (Eigen::Index i = k + 1; i < n; ++i)
      if (std::abs(A(i, k)) > std::abs(A(piv, k))) piv = i;
    A.row(k).swap(A.row(piv));
    std::swap(b(k), b(piv));
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double f = A(i, k) / A(k, k);
      for (Eigen::Index j = k; j < n; ++j) A(i, j) -= f * A(k, j);
      b(i) -= f * b(k);
    }
  }
  Eigen::VectorXd x(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    double s = b(i);
    for (Eigen::Index j = i + 1; j < n; ++j) s -= A(i, j) * x(j);
    x(i) = s / A(i, i);
  }
  return x;
}

/// Central finite-difference gradient.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd a = x, b = x;
    const double step = h * std::max(1.0, std::abs(x(k)));
    a(k) += step;
    b(k) -= step;
    g(k) = (f(a) - f(b)) / (2.0 * step);
  }
  return g;
}

inline double max_rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-8, b.cwiseAbs().maxCoeff());
}

/// Minimum check loss over all basic solutions, i.e. every choice of p rows
/// that determines an exact fit (p = 2 only).
inline double qr_basic_solution_min(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau) {
  double best = INFINITY;
  const Eigen::Index n = X.rows();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double det = X(i, 0) * X(j, 1) - X(i, 1) * X(j, 0);
      if (std::abs(det) < 1e-12) continue;
      const double b0 = (y(i) * X(j, 1) - X(i, 1) * y(j)) / det;
      const double b1 = (X(i, 0) * y(j) - y(i) * X(j, 0)) / det;
      double loss = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        const double r = y(k) - X(k, 0) * b0 - X(k, 1) * b1;
        loss += r * (r < 0 ? tau - 1.0 : tau);
      }
      best = std::min(best, loss);
    }
  return best;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_sd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace testsupport
