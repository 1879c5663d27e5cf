#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"
#include "topimpute/estimators.hpp"
#include "topimpute/normal.hpp"
#include "topimpute/rng.hpp"

using namespace topimpute;
using testsupport::random_design;

TEST_SUITE("normal") {
  TEST_CASE("cdf and quantile round trip") {
    for (double p : {1e-300, 1e-12, 1e-6, 0.01, 0.2, 0.5, 0.8, 0.99, 1 - 1e-9}) {
      const double z = normal::quantile(p);
      CHECK(normal::cdf(z) == doctest::Approx(p).epsilon(1e-12));
    }
    CHECK(normal::quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-14));
    CHECK(normal::cdf(0.0) == 0.5);
  }

  TEST_CASE("log_cdf is finite far in the lower tail") {
    const double v = normal::log_cdf(-60.0);
    CHECK(std::isfinite(v));
    // log Phi(x) ~ -x^2/2 - log(-x) - log sqrt(2 pi)
    CHECK(v == doctest::Approx(-1800.0 - std::log(60.0) - normal::kLogSqrt2Pi).epsilon(1e-6));
    CHECK(normal::mills_lower(-60.0) == doctest::Approx(60.0).epsilon(1e-3));
    CHECK(normal::log_cdf(8.0) == doctest::Approx(-normal::sf(8.0)).epsilon(1e-10));
  }
}

TEST_SUITE("ols") {
  TEST_CASE("exact fit recovers coefficients") {
    Rng rng(1);
    const Eigen::MatrixXd X = random_design(rng, 20, 3);
    const Eigen::Vector3d b(1.0, -2.0, 0.5);
    const FitResult fit = ols(X, X * b);
    CHECK((fit.coefficients - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(*fit.resid_var < 1e-20);
  }

  TEST_CASE("matches normal equations solved independently") {
    Rng rng(2);
    const Eigen::MatrixXd X = random_design(rng, 50, 3);
    Eigen::VectorXd y(50);
    for (int i = 0; i < 50; ++i) y(i) = rng.normal();
    const FitResult fit = ols(X, y);
    const Eigen::VectorXd oracle = testsupport::gauss_solve(X.transpose() * X, X.transpose() * y);
    CHECK((fit.coefficients - oracle).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("weighted ridge matches independent solve") {
    Rng rng(3);
    const Eigen::MatrixXd X = random_design(rng, 40, 3);
    Eigen::VectorXd y(40), w(40);
    for (int i = 0; i < 40; ++i) {
      y(i) = rng.normal();
      w(i) = 0.1 + rng.uniform();
    }
    OlsOptions opt;
    opt.weights = w;
    opt.ridge = 0.7;
    const FitResult fit = ols(X, y, opt);
    Eigen::MatrixXd A = X.transpose() * w.asDiagonal() * X;
    A(1, 1) += 0.7;
    A(2, 2) += 0.7;
    const Eigen::VectorXd oracle = testsupport::gauss_solve(A, X.transpose() * w.asDiagonal() * y);
    CHECK((fit.coefficients - oracle).cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("large penalty shrinks penalized coefficients to zero") {
    Rng rng(4);
    const Eigen::MatrixXd X = random_design(rng, 30, 3);
    Eigen::VectorXd y = X * Eigen::Vector3d(2.0, 1.0, -1.0);
    OlsOptions opt;
    opt.ridge = 1e12;
    const FitResult fit = ols(X, y, opt);
    CHECK(std::abs(fit.coefficients(1)) < 1e-8);
    CHECK(std::abs(fit.coefficients(2)) < 1e-8);
    CHECK(fit.coefficients(0) == doctest::Approx(y.mean()).epsilon(1e-8));
  }

  TEST_CASE("rank deficient design throws") {
    Eigen::MatrixXd X(5, 2);
    X.col(0).setOnes();
    X.col(1).setOnes();
    CHECK_THROWS_AS(ols(X, Eigen::VectorXd::Ones(5)), EstimationError);
  }
}

TEST_SUITE("probit") {
  TEST_CASE("intercept only recovers the inverse normal of the share") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(100, 1);
    std::vector<int> half(100, 0), three_quarters(100, 0);
    for (int i = 0; i < 50; ++i) half[i] = 1;
    for (int i = 0; i < 75; ++i) three_quarters[i] = 1;
    CHECK(std::abs(probit(X, half).coefficients(0)) < 1e-8);
    CHECK(probit(X, three_quarters).coefficients(0) == doctest::Approx(0.6744897501960817).epsilon(1e-6));
  }

  TEST_CASE("analytic gradient and Hessian match finite differences") {
    Rng rng(5);
    const Eigen::MatrixXd X = random_design(rng, 200, 3);
    std::vector<int> d(200);
    for (int i = 0; i < 200; ++i) d[i] = rng.uniform() < normal::cdf(0.3 + 0.8 * X(i, 1)) ? 1 : 0;
    auto f = [&](const Eigen::VectorXd& g) { return probit_loglik(X, d, g).value; };
    for (int trial = 0; trial < 10; ++trial) {
      Eigen::VectorXd g(3);
      for (int k = 0; k < 3; ++k) g(k) = rng.normal();
      const LikelihoodEval ev = probit_loglik(X, d, g);
      CHECK(testsupport::max_rel_err(ev.gradient, testsupport::fd_gradient(f, g)) < 1e-5);
      for (int k = 0; k < 3; ++k) {
        auto gk = [&](const Eigen::VectorXd& t) { return probit_loglik(X, d, t).gradient(k); };
        CHECK(testsupport::max_rel_err(ev.hessian.row(k).transpose(), testsupport::fd_gradient(gk, g)) < 1e-5);
      }
    }
  }

  TEST_CASE("score vanishes at the estimate") {
    Rng rng(6);
    const Eigen::MatrixXd X = random_design(rng, 500, 2);
    std::vector<int> d(500);
    for (int i = 0; i < 500; ++i) d[i] = rng.uniform() < normal::cdf(-0.2 + 0.5 * X(i, 1)) ? 1 : 0;
    const FitResult fit = probit(X, d);
    CHECK(fit.converged);
    CHECK(probit_loglik(X, d, fit.coefficients).gradient.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(fit.coef_cov.rows() == 2);
  }

  TEST_CASE("single class and separation throw") {
    Eigen::MatrixXd X(6, 2);
    X << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
    std::vector<int> ones(6, 1);
    CHECK_THROWS_AS(probit(X, ones), EstimationError);
    std::vector<int> separated{0, 0, 0, 1, 1, 1};
    CHECK_THROWS_AS(probit(X, separated), EstimationError);
  }
}

TEST_SUITE("quantreg") {
  TEST_CASE("median of an even sample is the lower middle point") {
    Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 1);
    Eigen::VectorXd y(4);
    y << 4.0, 1.0, 3.0, 2.0;
    CHECK(quantreg(X, y, 0.5).coefficients(0) == doctest::Approx(2.0).epsilon(1e-12));
    Eigen::VectorXd y5(5);
    y5 << 5.0, 1.0, 4.0, 2.0, 3.0;
    CHECK(quantreg(Eigen::MatrixXd::Ones(5, 1), y5, 0.5).coefficients(0) == doctest::Approx(3.0).epsilon(1e-12));
  }

  TEST_CASE("objective equals the best basic solution on small instances") {
    Rng rng(7);
    int checked = 0;
    for (int inst = 0; inst < 60; ++inst) {
      const int n = 4 + static_cast<int>(rng.below(5));
      const Eigen::MatrixXd X = random_design(rng, n, 2);
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) y(i) = 1.0 + 0.5 * X(i, 1) + rng.normal();
      const double tau = 0.1 + 0.8 * rng.uniform();
      const FitResult fit = quantreg(X, y, tau);
      const double oracle = testsupport::qr_basic_solution_min(X, y, tau);
      CHECK(check_loss(X, y, fit.coefficients, tau) == doctest::Approx(oracle).epsilon(1e-9));
      ++checked;
    }
    CHECK(checked >= 50);
  }

  TEST_CASE("exact basic solution and residual sign counts") {
    Rng rng(8);
    const int n = 301;
    const Eigen::MatrixXd X = random_design(rng, n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = X(i, 1) - 0.5 * X(i, 2) + rng.normal();
    for (double tau : {0.1, 0.5, 0.9}) {
      const FitResult fit = quantreg(X, y, tau);
      const Eigen::VectorXd r = y - X * fit.coefficients;
      int neg = 0, zero = 0;
      for (int i = 0; i < n; ++i) {
        if (std::abs(r(i)) < 1e-9) ++zero;
        else if (r(i) < 0) ++neg;
      }
      CHECK(zero >= 3);
      CHECK(std::abs(neg - tau * n) <= 3.0);
    }
  }

  TEST_CASE("shift equivariance") {
    Rng rng(9);
    const int n = 120;
    const Eigen::MatrixXd X = random_design(rng, n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = rng.normal();
    const Eigen::Vector3d g(0.3, -1.0, 2.0);
    const FitResult a = quantreg(X, y, 0.7);
    const FitResult b = quantreg(X, y + X * g, 0.7);
    CHECK((b.coefficients - a.coefficients - g).cwiseAbs().maxCoeff() < 1e-8);
  }

  TEST_CASE("rejects tau outside (0, 1)") {
    CHECK_THROWS(quantreg(Eigen::MatrixXd::Ones(3, 1), Eigen::VectorXd::Ones(3), 0.0));
    CHECK_THROWS(quantreg(Eigen::MatrixXd::Ones(3, 1), Eigen::VectorXd::Ones(3), 1.0));
  }
}

TEST_SUITE("sampling") {
  TEST_CASE("half normal mean") {
    Rng rng(10);
    std::vector<double> v(200000);
    for (double& x : v) x = trunc_normal_draw(0.0, 1.0, 0.0, rng);
    const double se = testsupport::sample_sd(v) / std::sqrt(static_cast<double>(v.size()));
    CHECK(std::abs(testsupport::mean(v) - std::sqrt(2.0 / M_PI)) < 3.0 * se);
    CHECK(*std::min_element(v.begin(), v.end()) > 0.0);
  }

  TEST_CASE("far lower bound is an untruncated draw") {
    Rng rng(11);
    std::vector<double> v(100000);
    for (double& x : v) x = trunc_normal_draw(2.0, 0.5, -1e6, rng);
    const double se = 0.5 / std::sqrt(static_cast<double>(v.size()));
    CHECK(std::abs(testsupport::mean(v) - 2.0) < 4.0 * se);
    CHECK(testsupport::sample_sd(v) == doctest::Approx(0.5).epsilon(0.02));
  }

  TEST_CASE("deep tail draws stay above the bound") {
    for (double a : {4.5, 6.0, 8.0, 20.0}) {
      Rng rng(12);
      std::vector<double> v(50000);
      for (double& x : v) x = trunc_normal_draw(0.0, 1.0, a, rng);
      CHECK(*std::min_element(v.begin(), v.end()) > a);
      // E[X | X > a] = phi(a) / (1 - Phi(a))
      const double mean = normal::pdf(a) / normal::sf(a);
      const double se = testsupport::sample_sd(v) / std::sqrt(50000.0);
      CHECK(std::abs(testsupport::mean(v) - mean) < 4.0 * se);
    }
  }

  TEST_CASE("draws are bit reproducible") {
    Rng a(13), b(13);
    for (int i = 0; i < 1000; ++i) {
      const double lo = (i % 10) - 2.0;
      CHECK(trunc_normal_draw(0.1, 1.3, lo, a) == trunc_normal_draw(0.1, 1.3, lo, b));
    }
  }

  TEST_CASE("substreams depend only on seed and label") {
    CHECK(derive_seed(42, "cell-a") == derive_seed(42, "cell-a"));
    CHECK(derive_seed(42, "cell-a") != derive_seed(42, "cell-b"));
    CHECK(derive_seed(42, "cell-a") != derive_seed(43, "cell-a"));
  }
}

TEST_SUITE("kde") {
  TEST_CASE("single point peak height") {
    const std::vector<double> v{1.5};
    const std::vector<double> g{1.5};
    const double h = 0.3;
    CHECK(kde(v, g, h)[0] == doctest::Approx(1.0 / (h * std::sqrt(2.0 * M_PI))).epsilon(1e-12));
  }

  TEST_CASE("integrates to one and ignores duplication") {
    Rng rng(14);
    std::vector<double> v(300);
    for (double& x : v) x = rng.normal();
    std::vector<double> grid;
    for (double x = -8.0; x <= 8.0; x += 0.01) grid.push_back(x);
    const double h = silverman_bandwidth(v);
    const auto f = kde(v, grid, h);
    double area = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) area += 0.5 * (f[i] + f[i - 1]) * (grid[i] - grid[i - 1]);
    CHECK(std::abs(area - 1.0) < 1e-3);

    std::vector<double> doubled = v;
    doubled.insert(doubled.end(), v.begin(), v.end());
    const auto f2 = kde(doubled, grid, h);
    for (std::size_t i = 0; i < grid.size(); i += 50) CHECK(f2[i] == doctest::Approx(f[i]).epsilon(1e-12));
  }

  TEST_CASE("silverman bandwidth formula") {
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(static_cast<double>(i));
    const double sd = testsupport::sample_sd(v);
    const double iqr = empirical_quantile(v, 0.75) - empirical_quantile(v, 0.25);
    const double expected = 0.9 * std::min(sd, iqr / 1.34) * std::pow(100.0, -0.2);
    CHECK(silverman_bandwidth(v) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_SUITE("quantile") {
  TEST_CASE("linear interpolation between order statistics") {
    std::vector<double> v{10, 1, 9, 2, 8, 3, 7, 4, 6, 5};
    CHECK(empirical_quantile(v, 0.2) == doctest::Approx(2.8).epsilon(1e-12));
    CHECK(empirical_quantile(v, 0.0) == 1.0);
    CHECK(empirical_quantile(v, 1.0) == 10.0);
    CHECK(empirical_quantile(v, 0.5) == doctest::Approx(5.5).epsilon(1e-12));
  }
}
