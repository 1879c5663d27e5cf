#pragma once

// Safeguarded Newton ascent shared by the probit and Tobit fits.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>

#include "topimpute/estimators.hpp"

namespace topimpute::detail {

struct NewtonResult {
  Eigen::VectorXd theta;
  LikelihoodEval eval;
  int iterations = 0;
  bool converged = false;
};

/// Maximizes a concave-ish log likelihood. Each step solves -H d = g; when -H
/// is not positive definite a Levenberg shift is added until it is. Steps are
/// halved until the objective does not decrease, so accepted values are
/// monotone.
inline NewtonResult newton_maximize(const std::function<LikelihoodEval(const Eigen::VectorXd&)>& f,
                                    Eigen::VectorXd theta, double n_obs, const NewtonOptions& options) {
  NewtonResult out;
  LikelihoodEval cur = f(theta);
  if (!std::isfinite(cur.value)) throw EstimationError("newton: objective not finite at start");
  const Eigen::Index k = theta.size();

  for (int it = 0; it < options.max_iterations; ++it) {
    if (cur.gradient.cwiseAbs().maxCoeff() / n_obs < options.gradient_tol) {
      out.converged = true;
      out.iterations = it;
      break;
    }
    Eigen::MatrixXd neg_h = -cur.hessian;
    Eigen::LLT<Eigen::MatrixXd> llt(neg_h);
    double shift = 0.0;
    const double scale = std::max(1e-12, neg_h.diagonal().cwiseAbs().maxCoeff());
    while (llt.info() != Eigen::Success) {
      shift = shift == 0.0 ? 1e-8 * scale : shift * 10.0;
      llt.compute(neg_h + shift * Eigen::MatrixXd::Identity(k, k));
      if (shift > 1e12 * scale) throw EstimationError("newton: cannot regularize Hessian");
    }
    const Eigen::VectorXd step = llt.solve(cur.gradient);
    // Near the optimum the predicted gain drops below the rounding error of
    // the summed objective; the Newton step is then taken as long as the
    // objective does not fall by more than that error.
    const double noise = n_obs * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(cur.value));
    const bool in_noise = cur.gradient.dot(step) < noise;

    double t = 1.0;
    bool accepted = false;
    LikelihoodEval next;
    Eigen::VectorXd cand;
    for (int half = 0; half < 60; ++half) {
      cand = theta + t * step;
      next = f(cand);
      if (std::isfinite(next.value) && (next.value >= cur.value || (in_noise && next.value >= cur.value - noise))) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    out.iterations = it + 1;
    if (!accepted) {
      // No ascent possible at machine precision: accept as converged if the
      // gradient is already tiny relative to the scale of the problem.
      out.converged = cur.gradient.cwiseAbs().maxCoeff() / n_obs < 1e3 * options.gradient_tol;
      break;
    }
    theta = cand;
    cur = std::move(next);
  }
  if (!out.converged && cur.gradient.cwiseAbs().maxCoeff() / n_obs < options.gradient_tol) out.converged = true;
  out.theta = std::move(theta);
  out.eval = std::move(cur);
  return out;
}

}  // namespace topimpute::detail
