// Linear quantile regression.
//
// Phase 1 solves the bounded dual LP
//     max y'a  s.t.  X'a = (1 - tau) X'1,  0 <= a <= 1
// with a Mehrotra predictor-corrector interior point method in the form used
// by the Frisch-Newton algorithm (minimize c'x with c = -y); the coefficients
// are minus the equality multipliers.
//
// Phase 2 moves to an exact basic solution (p observations fitted exactly)
// and runs simplex descent on the check loss. Ties between optimal vertices
// are broken by the sum of fitted values, lexicographically after the loss.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "topimpute/estimators.hpp"

namespace topimpute {

double check_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& b, double tau) {
  const Eigen::VectorXd r = y - X * b;
  double s = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) s += r(i) * (r(i) < 0.0 ? tau - 1.0 : tau);
  return s;
}

namespace {

constexpr double kStepBack = 0.99995;

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double a = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
  return a;
}

Eigen::VectorXd solve_normal(const Eigen::MatrixXd& X, const Eigen::VectorXd& D, const Eigen::VectorXd& rhs) {
  Eigen::MatrixXd M = X.transpose() * D.asDiagonal() * X;
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) {
    const double eps = 1e-12 * std::max(1.0, M.diagonal().maxCoeff());
    llt.compute(M + eps * Eigen::MatrixXd::Identity(M.rows(), M.cols()));
    if (llt.info() != Eigen::Success) throw EstimationError("quantreg: normal matrix is singular");
  }
  return llt.solve(rhs);
}

Eigen::VectorXd interior_point(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
                              const QuantregOptions& opt, int& iterations) {
  const Eigen::Index n = X.rows();
  const double dn = static_cast<double>(n);

  const Eigen::VectorXd c = -y;
  const Eigen::VectorXd b = (1.0 - tau) * X.colwise().sum().transpose();
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 - tau);
  Eigen::VectorXd s = Eigen::VectorXd::Constant(n, tau);

  Eigen::VectorXd nu = solve_normal(X, Eigen::VectorXd::Ones(n), X.transpose() * c);
  Eigen::VectorXd r = c - X * nu;
  const double offset = 1e-3 * (r.cwiseAbs().sum() / dn) + 1e-10;
  Eigen::VectorXd z = r.cwiseMax(0.0).array() + offset;
  Eigen::VectorXd w = (-r).cwiseMax(0.0).array() + offset;

  const double scale = 1.0 + y.cwiseAbs().sum();
  iterations = 0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const double gap = x.dot(z) + s.dot(w);
    if (gap <= opt.gap_tol * scale) break;
    ++iterations;

    const Eigen::VectorXd rp = b - X.transpose() * x;
    const Eigen::VectorXd rd = c - X * nu - z + w;
    const Eigen::VectorXd D = ((z.array() / x.array()) + (w.array() / s.array())).inverse();

    // Predictor.
    Eigen::VectorXd q = rd + z - w;
    Eigen::VectorXd dnu = solve_normal(X, D, rp + X.transpose() * D.cwiseProduct(q));
    Eigen::VectorXd dx = D.cwiseProduct(X * dnu - q);
    Eigen::VectorXd ds = -dx;
    Eigen::VectorXd dz = (-z.array() - z.array() * dx.array() / x.array()).matrix();
    Eigen::VectorXd dw = (-w.array() - w.array() * ds.array() / s.array()).matrix();

    double ap = std::min(1.0, kStepBack * std::min(max_step(x, dx), max_step(s, ds)));
    double ad = std::min(1.0, kStepBack * std::min(max_step(z, dz), max_step(w, dw)));

    if (std::min(ap, ad) < 1.0) {
      // Corrector with Mehrotra's centering target.
      const double mu_aff = (x + ap * dx).dot(z + ad * dz) + (s + ap * ds).dot(w + ad * dw);
      const double mu = gap * std::pow(mu_aff / gap, 3) / (2.0 * dn);
      const Eigen::ArrayXd cx = mu - (dx.array() * dz.array());
      const Eigen::ArrayXd cs = mu - (ds.array() * dw.array());
      q = (rd.array() - cx / x.array() + z.array() + cs / s.array() - w.array()).matrix();
      dnu = solve_normal(X, D, rp + X.transpose() * D.cwiseProduct(q));
      dx = D.cwiseProduct(X * dnu - q);
      ds = -dx;
      dz = ((cx - x.array() * z.array() - z.array() * dx.array()) / x.array()).matrix();
      dw = ((cs - s.array() * w.array() - w.array() * ds.array()) / s.array()).matrix();
      ap = std::min(1.0, kStepBack * std::min(max_step(x, dx), max_step(s, ds)));
      ad = std::min(1.0, kStepBack * std::min(max_step(z, dz), max_step(w, dw)));
    }

    x += ap * dx;
    s += ap * ds;
    nu += ad * dnu;
    z += ad * dz;
    w += ad * dw;
  }
  return -nu;
}

// Index set of p linearly independent rows with the smallest |residual|.
std::vector<Eigen::Index> initial_basis(const Eigen::MatrixXd& X, const Eigen::VectorXd& r) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(r(a)) < std::abs(r(b)); });

  std::vector<Eigen::Index> basis;
  Eigen::MatrixXd q(p, p);  // orthonormal rows spanning the chosen rows
  for (Eigen::Index idx : order) {
    Eigen::VectorXd v = X.row(idx).transpose();
    const double norm0 = v.norm();
    if (norm0 == 0.0) continue;
    for (std::size_t k = 0; k < basis.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      v -= q.row(kk).dot(v) * q.row(kk).transpose();
    }
    for (std::size_t k = 0; k < basis.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      v -= q.row(kk).dot(v) * q.row(kk).transpose();
    }
    const double nv = v.norm();
    if (nv <= 1e-9 * norm0) continue;
    q.row(static_cast<Eigen::Index>(basis.size())) = (v / nv).transpose();
    basis.push_back(idx);
    if (static_cast<Eigen::Index>(basis.size()) == p) return basis;
  }
  throw EstimationError("quantreg: design matrix is degenerate");
}

struct Breakpoint {
  double t;
  double jump;
  Eigen::Index row;
};

Eigen::VectorXd simplex_polish(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
                               std::vector<Eigen::Index> basis, int max_pivots, int& pivots) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const double rtol = 1e-12 * (1.0 + y.cwiseAbs().maxCoeff());
  const Eigen::RowVectorXd xsum = X.colwise().sum();
  std::vector<char> in_basis(static_cast<std::size_t>(n), 0);
  for (auto i : basis) in_basis[static_cast<std::size_t>(i)] = 1;

  Eigen::MatrixXd B(p, p);
  Eigen::VectorXd yb(p);
  Eigen::VectorXd coef;
  pivots = 0;
  for (;;) {
    for (Eigen::Index k = 0; k < p; ++k) {
      B.row(k) = X.row(basis[static_cast<std::size_t>(k)]);
      yb(k) = y(basis[static_cast<std::size_t>(k)]);
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    const Eigen::MatrixXd Binv = lu.inverse();
    coef = Binv * yb;
    if (pivots >= max_pivots) break;

    Eigen::VectorXd r = y - X * coef;
    const Eigen::MatrixXd V = X * Binv;  // v_ik: rate of x_i b along basis direction k

    // Gradient pieces per direction.
    Eigen::VectorXd G = Eigen::VectorXd::Zero(p);     // sum psi_i v_ik over nonzero nonbasic residuals
    Eigen::VectorXd Zp = Eigen::VectorXd::Zero(p);    // degenerate-row contributions for sigma = +1
    Eigen::VectorXd Zm = Eigen::VectorXd::Zero(p);    // and sigma = -1
    Eigen::VectorXd scale = Eigen::VectorXd::Ones(p);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)]) continue;
      const auto vi = V.row(i);
      scale += vi.cwiseAbs().transpose();
      if (std::abs(r(i)) <= rtol) {
        // Residual moves at rate -sigma v_ik; rho' is tau going up, tau-1 going down.
        for (Eigen::Index k = 0; k < p; ++k) {
          const double rate_p = -vi(k);
          Zp(k) += rate_p > 0 ? tau * rate_p : (tau - 1.0) * rate_p;
          Zm(k) += -rate_p > 0 ? tau * -rate_p : (tau - 1.0) * -rate_p;
        }
      } else {
        G += (r(i) < 0.0 ? tau - 1.0 : tau) * vi.transpose();
      }
    }
    const Eigen::VectorXd T = (xsum * Binv).transpose();

    int best_k = -1;
    double best_sigma = 0.0, best_d1 = 0.0, best_d2 = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) {
      const double tol1 = 1e-11 * scale(k);
      const double tol2 = 1e-11 * (1.0 + std::abs(T(k)));
      for (double sigma : {1.0, -1.0}) {
        const double d1 = sigma > 0 ? -G(k) + Zp(k) + (1.0 - tau) : G(k) + Zm(k) + tau;
        const double d2 = sigma * T(k);
        const bool improving = d1 < -tol1 || (std::abs(d1) <= tol1 && d2 < -tol2);
        if (!improving) continue;
        const bool better = best_k < 0 || d1 < best_d1 - tol1 ||
                            (std::abs(d1 - best_d1) <= tol1 && d2 < best_d2);
        if (better) {
          best_k = static_cast<int>(k);
          best_sigma = sigma;
          best_d1 = d1;
          best_d2 = d2;
        }
      }
    }
    if (best_k < 0) break;

    const auto k = static_cast<Eigen::Index>(best_k);
    const double tol1 = 1e-11 * scale(k);
    std::vector<Breakpoint> bps;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (in_basis[static_cast<std::size_t>(i)]) continue;
      const double rate = best_sigma * V(i, k);  // r_i(t) = r_i - t * rate
      if (rate == 0.0 || std::abs(r(i)) <= rtol) continue;
      const double t = r(i) / rate;
      if (t > 0.0) bps.push_back({t, std::abs(rate), i});
    }
    std::sort(bps.begin(), bps.end(), [](const Breakpoint& a, const Breakpoint& b) {
      return a.t < b.t || (a.t == b.t && a.row < b.row);
    });
    double slope = best_d1;
    Eigen::Index entering = -1;
    for (const auto& bp : bps) {
      slope += bp.jump;
      if (slope > tol1 || (std::abs(slope) <= tol1 && best_d2 >= 0.0)) {
        entering = bp.row;
        break;
      }
    }
    if (entering < 0) {
      if (bps.empty()) throw EstimationError("quantreg: unbounded direction in simplex polish");
      entering = bps.back().row;
    }
    in_basis[static_cast<std::size_t>(basis[static_cast<std::size_t>(k)])] = 0;
    basis[static_cast<std::size_t>(k)] = entering;
    in_basis[static_cast<std::size_t>(entering)] = 1;
    ++pivots;
  }
  return coef;
}

}  // namespace

FitResult quantreg(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau, const QuantregOptions& options) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("quantreg: tau must lie in (0, 1)");
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n) throw std::invalid_argument("quantreg: X and y row counts differ");
  if (n <= p) throw EstimationError("quantreg: need more rows than columns");
  if (!X.allFinite() || !y.allFinite()) throw std::invalid_argument("quantreg: non-finite input");

  int ipm_iterations = 0;
  const Eigen::VectorXd b_ipm = interior_point(X, y, tau, options, ipm_iterations);
  const Eigen::VectorXd r = y - X * b_ipm;
  int pivots = 0;
  const Eigen::VectorXd b = simplex_polish(X, y, tau, initial_basis(X, r), options.max_pivots, pivots);

  FitResult fit;
  fit.coefficients = b;
  fit.loglik = -check_loss(X, y, b, tau);
  fit.converged = pivots < options.max_pivots;
  fit.iterations = ipm_iterations + pivots;
  return fit;
}

}  // namespace topimpute
