#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"
#include "topimpute/estimators.hpp"
#include "topimpute/tobit.hpp"

using namespace topimpute;
using testsupport::random_design;

namespace {

struct CensoredSample {
  TobitSpec spec;
  Eigen::VectorXd y;
  std::vector<CensorState> state;
};

CensoredSample censored_sample(Rng& rng, int n, const Eigen::VectorXd& b, double sigma, double upper_q,
                               double lower_q = -1.0) {
  CensoredSample s;
  s.spec.design = random_design(rng, n, b.size());
  Eigen::VectorXd latent = s.spec.design * b;
  for (int i = 0; i < n; ++i) latent(i) += sigma * rng.normal();
  std::vector<double> v(latent.data(), latent.data() + n);
  const double C = empirical_quantile(v, upper_q);
  s.spec.upper = Eigen::VectorXd::Constant(n, C);
  s.y = latent;
  s.state.assign(n, CensorState::uncensored);
  for (int i = 0; i < n; ++i)
    if (latent(i) >= C) {
      s.y(i) = C;
      s.state[i] = CensorState::at_upper;
    }
  if (lower_q > 0.0) {
    const double c = empirical_quantile(v, lower_q);
    s.spec.lower = Eigen::VectorXd::Constant(n, c);
    for (int i = 0; i < n; ++i)
      if (latent(i) < c) {
        s.y(i) = c;
        s.state[i] = CensorState::at_lower;
      }
  }
  return s;
}

}  // namespace

TEST_CASE("uncensored fit equals OLS with the n-denominator variance") {
  Rng rng(21);
  auto s = censored_sample(rng, 400, Eigen::Vector3d(1.0, 0.5, -0.3), 0.7, 1.0);
  s.spec.upper.setConstant(1e6);
  std::fill(s.state.begin(), s.state.end(), CensorState::uncensored);
  const FitResult fit = fit_tobit(s.spec, s.y, s.state);
  const FitResult ref = ols(s.spec.design, s.y);
  CHECK((fit.coefficients - ref.coefficients).cwiseAbs().maxCoeff() < 1e-6);
  const double rss = (s.y - s.spec.design * ref.coefficients).squaredNorm();
  CHECK(*fit.resid_var == doctest::Approx(rss / 400.0).epsilon(1e-6));
}

TEST_CASE("inactive lower limit reproduces the right-censored fit") {
  Rng rng(22);
  auto s = censored_sample(rng, 1000, Eigen::Vector3d(1.0, 0.5, -0.3), 0.7, 0.7);
  const FitResult right = fit_tobit(s.spec, s.y, s.state);
  TobitSpec both = s.spec;
  both.lower = Eigen::VectorXd::Constant(1000, s.y.minCoeff() - 10.0);
  const FitResult dbl = fit_tobit(both, s.y, s.state);
  CHECK((right.coefficients - dbl.coefficients).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("analytic gradient and Hessian match finite differences") {
  Rng rng(23);
  const auto s = censored_sample(rng, 300, Eigen::Vector3d(0.5, 1.0, -0.5), 1.0, 0.7, 0.2);
  auto f = [&](const Eigen::VectorXd& t) { return tobit_loglik(s.spec, s.y, s.state, t).value; };
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd theta(4);
    for (int k = 0; k < 3; ++k) theta(k) = rng.normal();
    theta(3) = 0.5 + rng.uniform();
    const LikelihoodEval ev = tobit_loglik(s.spec, s.y, s.state, theta);
    CHECK(testsupport::max_rel_err(ev.gradient, testsupport::fd_gradient(f, theta)) < 1e-5);
    for (int k = 0; k < 4; ++k) {
      auto gk = [&](const Eigen::VectorXd& t) { return tobit_loglik(s.spec, s.y, s.state, t).gradient(k); };
      CHECK(testsupport::max_rel_err(ev.hessian.row(k).transpose(), testsupport::fd_gradient(gk, theta)) < 1e-5);
    }
  }
}

TEST_CASE("covariance is symmetric positive definite") {
  Rng rng(24);
  const auto s = censored_sample(rng, 2000, Eigen::Vector3d(1.0, 0.5, -0.3), 0.7, 0.7, 0.2);
  const FitResult fit = fit_tobit(s.spec, s.y, s.state);
  CHECK((fit.coef_cov - fit.coef_cov.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(fit.coef_cov.ldlt().info() == Eigen::Success);
  CHECK(fit.coef_cov.ldlt().vectorD().minCoeff() > 0.0);
  CHECK(*fit.resid_var > 0.0);
}

TEST_CASE("estimates cover the truth in repeated samples") {
  const Eigen::Vector3d b(1.0, 0.5, -0.3);
  int covered = 0, total = 0;
  for (int rep = 0; rep < 40; ++rep) {
    Rng rng(derive_seed(25, std::to_string(rep)));
    const auto s = censored_sample(rng, 2000, b, 0.7, 0.7);
    const FitResult fit = fit_tobit(s.spec, s.y, s.state);
    const Eigen::VectorXd se = fit.std_errors();
    for (int j = 0; j < 3; ++j) {
      covered += std::abs(fit.coefficients(j) - b(j)) < 3.0 * se(j) ? 1 : 0;
      ++total;
    }
  }
  CHECK(covered >= total - 3);
}

TEST_CASE("all censored or too few uncensored rows throw") {
  Rng rng(26);
  auto s = censored_sample(rng, 50, Eigen::Vector2d(0.0, 1.0), 1.0, 0.7);
  std::fill(s.state.begin(), s.state.end(), CensorState::at_upper);
  CHECK_THROWS_AS(fit_tobit(s.spec, s.y, s.state), EstimationError);
  s.state[0] = CensorState::uncensored;
  s.state[1] = CensorState::uncensored;
  CHECK_THROWS_AS(fit_tobit(s.spec, s.y, s.state), EstimationError);
}

TEST_CASE("artificial lower limit") {
  std::vector<double> y{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<CensorState> st(10, CensorState::uncensored);
  CHECK(artificial_lower_limit(y, st, 0.2) == doctest::Approx(2.8).epsilon(1e-12));
  CHECK(artificial_lower_limit(y, st, 1e-12) <= 1.0 + 1e-9);

  st[9] = CensorState::at_upper;
  st[8] = CensorState::at_upper;
  CHECK_THROWS_AS(artificial_lower_limit(y, st, 0.8), std::invalid_argument);
  CHECK_THROWS_AS(artificial_lower_limit(y, st, 0.0), std::invalid_argument);

  const Eigen::VectorXd ey = Eigen::Map<const Eigen::VectorXd>(y.data(), 10);
  const auto none = apply_lower_limit(ey, st, 1.0);
  CHECK(none.remarked == 0);

  const auto lc = apply_lower_limit(ey, st, 9.5);
  CHECK(lc.remarked == 8);
  CHECK(lc.state[8] == CensorState::at_upper);
  CHECK(lc.state[9] == CensorState::at_upper);
  CHECK(lc.y(0) == 9.5);
  CHECK(ey(0) == 1.0);
}

TEST_CASE("imputation draws exceed the limit and are reproducible") {
  Rng rng(27);
  const auto s = censored_sample(rng, 3000, Eigen::Vector3d(1.0, 0.5, -0.3), 0.7, 0.7);
  const FitResult fit = fit_tobit(s.spec, s.y, s.state);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < 3000; ++i)
    if (s.state[i] == CensorState::at_upper) rows.push_back(i);
  Rng a(1), b(1);
  const auto ia = impute_tobit(fit, s.spec.design, s.spec.upper, rows, a);
  const auto ib = impute_tobit(fit, s.spec.design, s.spec.upper, rows, b);
  CHECK(ia == ib);
  for (std::size_t k = 0; k < rows.size(); ++k) CHECK(ia[k] > s.spec.upper(rows[k]));
}

TEST_CASE("inactive truncation gives draws centred on the prediction") {
  FitResult fit;
  fit.coefficients = Eigen::Vector2d(5.0, 1.0);
  fit.coef_cov = Eigen::Matrix2d::Zero();
  fit.resid_var = 0.25;
  fit.converged = true;
  Eigen::MatrixXd X(1, 2);
  X << 1.0, 0.5;
  const Eigen::VectorXd upper = Eigen::VectorXd::Constant(1, -100.0);
  CHECK(tobit_predictive_sd(fit, X.row(0)) == 0.5);
  std::vector<Eigen::Index> rows(100000, 0);
  Rng rng(28);
  const auto draws = impute_tobit(fit, X, upper, rows, rng);
  const double se = 0.5 / std::sqrt(1e5);
  CHECK(std::abs(testsupport::mean(draws) - 5.5) < 3.0 * se);
}
