#include "topimpute/tobit.hpp"

#include <algorithm>
#include <cmath>

#include "newton.hpp"
#include "topimpute/normal.hpp"

namespace topimpute {

LikelihoodEval tobit_loglik(const TobitSpec& spec, const Eigen::VectorXd& y, std::span<const CensorState> state,
                            const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd& X = spec.design;
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  const Eigen::VectorXd delta = theta.head(p);
  const double h = theta(p);

  LikelihoodEval out;
  out.gradient = Eigen::VectorXd::Zero(p + 1);
  out.hessian = Eigen::MatrixXd::Zero(p + 1, p + 1);
  if (!(h > 0.0)) {
    out.value = -std::numeric_limits<double>::infinity();
    return out;
  }
  const Eigen::VectorXd eta = X * delta;

  // Per-row weights; the O(n p^2) work is one weighted cross product.
  Eigen::VectorXd wxx(n);  // on -x_i x_i'
  Eigen::VectorXd wxh(n);  // on x_i in the (delta, h) block
  Eigen::VectorXd gx(n);   // on x_i in the delta gradient
  double g_h = 0.0, h_hh = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (state[static_cast<std::size_t>(i)]) {
      case CensorState::uncensored: {
        const double e = h * y(i) - eta(i);
        out.value += std::log(h) - 0.5 * e * e - normal::kLogSqrt2Pi;
        gx(i) = e;
        g_h += 1.0 / h - e * y(i);
        wxx(i) = 1.0;
        wxh(i) = y(i);
        h_hh += -1.0 / (h * h) - y(i) * y(i);
        break;
      }
      case CensorState::at_upper: {
        const double C = spec.upper(i);
        const double a = eta(i) - h * C;  // log Phi(a)
        const double lam = normal::mills_lower(a);
        const double curv = lam * (a + lam);
        out.value += normal::log_cdf(a);
        gx(i) = lam;
        g_h += -lam * C;
        wxx(i) = curv;
        wxh(i) = curv * C;
        h_hh += -curv * C * C;
        break;
      }
      case CensorState::at_lower: {
        if (!spec.lower) throw std::invalid_argument("tobit: at_lower row without lower limits");
        const double c = (*spec.lower)(i);
        const double a = h * c - eta(i);
        const double lam = normal::mills_lower(a);
        const double curv = lam * (a + lam);
        out.value += normal::log_cdf(a);
        gx(i) = -lam;
        g_h += lam * c;
        wxx(i) = curv;
        wxh(i) = curv * c;
        h_hh += -curv * c * c;
        break;
      }
    }
  }
  // Censored rows have a = +-(x delta) -+ h L, so the (delta, h) block is
  // -curv (da/ddelta)(da/dh) = curv L x; uncensored rows contribute y x.
  out.gradient.head(p).noalias() = X.transpose() * gx;
  out.gradient(p) = g_h;
  out.hessian.topLeftCorner(p, p).noalias() = -(X.transpose() * wxx.asDiagonal() * X);
  out.hessian.col(p).head(p).noalias() = X.transpose() * wxh;
  out.hessian.row(p).head(p) = out.hessian.col(p).head(p).transpose();
  out.hessian(p, p) = h_hh;
  return out;
}

FitResult fit_tobit(const TobitSpec& spec, const Eigen::VectorXd& y, std::span<const CensorState> state,
                    const NewtonOptions& options) {
  const Eigen::MatrixXd& X = spec.design;
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n || spec.upper.size() != n || static_cast<Eigen::Index>(state.size()) != n)
    throw std::invalid_argument("fit_tobit: inconsistent input sizes");
  if (spec.lower && spec.lower->size() != n) throw std::invalid_argument("fit_tobit: lower limit size");

  std::vector<Eigen::Index> unc;
  for (Eigen::Index i = 0; i < n; ++i)
    if (state[static_cast<std::size_t>(i)] == CensorState::uncensored) unc.push_back(i);
  if (unc.empty()) throw EstimationError("fit_tobit: all rows are censored");
  if (static_cast<Eigen::Index>(unc.size()) < p + 1) throw EstimationError("fit_tobit: too few uncensored rows");

  // Start from least squares on the uncensored rows.
  Eigen::MatrixXd Xu(static_cast<Eigen::Index>(unc.size()), p);
  Eigen::VectorXd yu(static_cast<Eigen::Index>(unc.size()));
  for (std::size_t k = 0; k < unc.size(); ++k) {
    Xu.row(static_cast<Eigen::Index>(k)) = X.row(unc[k]);
    yu(static_cast<Eigen::Index>(k)) = y(unc[k]);
  }
  Eigen::VectorXd b0;
  double s0;
  try {
    const FitResult start = ols(Xu, yu);
    b0 = start.coefficients;
    s0 = std::sqrt(std::max(*start.resid_var, 1e-8));
  } catch (const EstimationError&) {
    throw EstimationError("fit_tobit: design is rank deficient on uncensored rows");
  }
  Eigen::VectorXd theta(p + 1);
  theta.head(p) = b0 / s0;
  theta(p) = 1.0 / s0;

  auto f = [&](const Eigen::VectorXd& t) { return tobit_loglik(spec, y, state, t); };
  const auto res = detail::newton_maximize(f, theta, static_cast<double>(n), options);
  if (!res.converged) throw EstimationError("fit_tobit: Newton iterations did not converge");

  const double h = res.theta(p);
  const Eigen::VectorXd delta = res.theta.head(p);
  Eigen::MatrixXd info_inv = (-res.eval.hessian).ldlt().solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(p + 1, p + 1);
  J.topLeftCorner(p, p) = Eigen::MatrixXd::Identity(p, p) / h;
  J.col(p).head(p) = -delta / (h * h);
  J(p, p) = -1.0 / (h * h);
  const Eigen::MatrixXd V = J * info_inv * J.transpose();

  FitResult fit;
  fit.coefficients = delta / h;
  fit.coef_cov = 0.5 * (V.topLeftCorner(p, p) + V.topLeftCorner(p, p).transpose());
  fit.resid_var = 1.0 / (h * h);
  fit.loglik = res.eval.value;
  fit.converged = true;
  fit.iterations = res.iterations;
  return fit;
}

double artificial_lower_limit(std::span<const double> y, std::span<const CensorState> state, double quantile) {
  if (y.empty() || y.size() != state.size()) throw std::invalid_argument("artificial_lower_limit: empty or mismatched cell");
  std::size_t censored = 0;
  for (auto s : state) censored += s == CensorState::at_upper ? 1 : 0;
  const double share = static_cast<double>(censored) / static_cast<double>(y.size());
  if (!(quantile > 0.0) || !(quantile < 1.0 - share))
    throw std::invalid_argument("artificial_lower_limit: quantile must lie in (0, 1 - censoring share)");
  return empirical_quantile(y, quantile);
}

LowerCensoring apply_lower_limit(const Eigen::VectorXd& y, std::span<const CensorState> state, double limit) {
  LowerCensoring out;
  out.y = y;
  out.state.assign(state.begin(), state.end());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    auto& s = out.state[static_cast<std::size_t>(i)];
    if (s == CensorState::uncensored && y(i) < limit) {
      s = CensorState::at_lower;
      out.y(i) = limit;
      ++out.remarked;
    }
  }
  return out;
}

double tobit_predictive_sd(const FitResult& fit, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  const double param_var = (x * fit.coef_cov * x.transpose())(0, 0);
  return std::sqrt(std::max(param_var, 0.0) + fit.resid_var.value_or(0.0));
}

std::vector<double> impute_tobit(const FitResult& fit, const Eigen::MatrixXd& design, const Eigen::VectorXd& upper,
                                 std::span<const Eigen::Index> rows, Rng& rng) {
  if (!fit.converged) throw std::invalid_argument("impute_tobit: fit did not converge");
  std::vector<double> out;
  out.reserve(rows.size());
  for (Eigen::Index i : rows) {
    const auto x = design.row(i);
    const double mean = x.dot(fit.coefficients);
    const double sd = tobit_predictive_sd(fit, x);
    const double u = trunc_normal_draw(0.0, sd, upper(i) - mean, rng);
    double w = mean + u;
    if (!(w > upper(i))) w = std::nextafter(upper(i), std::numeric_limits<double>::infinity());
    out.push_back(w);
  }
  return out;
}

}  // namespace topimpute
