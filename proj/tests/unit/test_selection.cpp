#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"
#include "topimpute/config.hpp"
#include "topimpute/estimators.hpp"
#include "topimpute/methods.hpp"
#include "topimpute/selection.hpp"
#include "topimpute/synthgen.hpp"

using namespace topimpute;

TEST_CASE("method names round trip") {
  for (Method m : kAllMethods) CHECK(parse_method(method_name(m)) == m);
  CHECK_THROWS_AS(parse_method("tobit"), ConfigError);
  CHECK(parse_method_spec("tobit_lr@0.25").lower_quantile == 0.25);
  CHECK(parse_method_spec("tobit_lr").lower_quantile == 0.2);
  CHECK(method_spec_name(parse_method_spec("tobit_lr@0.25")) == "tobit_lr@0.25");
  CHECK_THROWS_AS(parse_method_spec("tobit_r@0.2"), ConfigError);
  CHECK_THROWS_AS(parse_method_spec("tobit_lr@1.5"), ConfigError);
}

TEST_CASE("window grid spans 0.99 C to 1.01 C in steps of 0.001") {
  const DensityGrid g = window_grid(10.0, SadWindow{});
  REQUIRE(g.x.size() == 201);
  CHECK(g.g_min == doctest::Approx(9.9));
  CHECK(g.g_max == doctest::Approx(10.1));
  for (std::size_t i = 1; i < g.x.size(); ++i) CHECK(g.x[i] - g.x[i - 1] == doctest::Approx(0.001).epsilon(1e-9));
  CHECK_THROWS_AS(window_grid(10.0, SadWindow{0.99, 1.01, 0.0}), std::invalid_argument);
}

TEST_CASE("affine ordinates have zero SAD") {
  const DensityGrid g = window_grid(8.0, SadWindow{});
  std::vector<double> f;
  for (double x : g.x) f.push_back(0.3 + 0.1 * (x - 8.0));
  CHECK(sad_of_ordinates(f, g.step) < 1e-6);
}

TEST_CASE("quadratic ordinates give 2|a| per interior point") {
  const double step = 0.001;
  const std::size_t G = 201;
  for (double a : {3.0, -1.5}) {
    std::vector<double> f;
    for (std::size_t i = 0; i < G; ++i) {
      const double x = 0.5 + static_cast<double>(i) * step;
      f.push_back(a * x * x);
    }
    CHECK(sad_of_ordinates(f, step) == doctest::Approx(2.0 * std::abs(a) * static_cast<double>(G - 2)).epsilon(1e-5));
  }
}

TEST_CASE("adding a constant to the ordinates leaves SAD unchanged") {
  Rng rng(3);
  std::vector<double> f(50), g(50);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = rng.uniform();
    g[i] = f[i] + 7.0;
  }
  CHECK(sad_of_ordinates(g, 0.01) == doctest::Approx(sad_of_ordinates(f, 0.01)).epsilon(1e-9));
  CHECK(sad_of_ordinates(f, 0.01) >= 0.0);
}

TEST_CASE("SAD is undefined when the data miss the window") {
  std::vector<double> v;
  Rng rng(4);
  for (int i = 0; i < 500; ++i) v.push_back(9.0 + 0.5 * rng.uniform());
  CHECK_FALSE(sad(v, 10.0, SadWindow{}, 0.05).has_value());
  v.push_back(10.2);
  v.push_back(9.8);
  const auto s = sad(v, 10.0, SadWindow{}, 0.05);
  REQUIRE(s.has_value());
  CHECK(*s >= 0.0);
  CHECK_FALSE(sad(std::vector<double>{}, 10.0, SadWindow{}, 0.05).has_value());
}

TEST_CASE("deviation sum of a constant deviation is d W c") {
  const double d = 0.2, c = 1.7, step = 0.001;
  std::vector<double> x, fr, fj;
  for (int i = 0; i <= 200; ++i) {
    x.push_back(4.95 + i * step);
    fr.push_back(c);
    fj.push_back(c + d);
  }
  const double W = x.back() - x.front();
  CHECK(std::abs(deviation_sum(x, fr, fj) - d * W * c) < 1e-10);
  CHECK(deviation_sum(x, fr, fr) == 0.0);
  CHECK_THROWS_AS(deviation_sum(x, fr, std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST_CASE("deviation criterion is nonnegative and penalises a spike at the limit") {
  Rng rng(5);
  std::vector<double> smooth, spiky;
  for (int i = 0; i < 20000; ++i) smooth.push_back(4.0 + 2.0 * rng.uniform());
  spiky = smooth;
  for (int i = 0; i < 2000; ++i) spiky.push_back(5.0 + 0.01 * rng.uniform());
  const double h = 0.02;
  const double a = deviation_criterion(smooth, smooth, 5.0, SadWindow{}, h);
  const double b = deviation_criterion(spiky, smooth, 5.0, SadWindow{}, h);
  CHECK(a >= 0.0);
  CHECK(b >= 0.0);
  CHECK(b > 10.0 * a);
  CHECK_THROWS_AS(deviation_criterion(smooth, std::vector<double>{}, 5.0, SadWindow{}, h), InfeasibleError);
}

TEST_CASE("the only defined score wins") {
  Rng rng(6);
  std::vector<double> spans, misses;
  for (int i = 0; i < 2000; ++i) {
    spans.push_back(9.0 + 2.0 * rng.uniform());
    misses.push_back(9.0 + 0.5 * rng.uniform());
  }
  const auto rep = select_method({{Method::tobit_r, misses}, {Method::cqr_at_limit, spans}}, 10.0, SadWindow{}, 0.05);
  CHECK(rep.chosen == Method::cqr_at_limit);
  CHECK_FALSE(rep.scores.at(Method::tobit_r).has_value());
  CHECK_THROWS_AS(select_method({{Method::tobit_r, misses}}, 10.0, SadWindow{}, 0.05), InfeasibleError);
  CHECK_THROWS_AS(select_method({{Method::tobit_r, spans}, {Method::tobit_r, spans}}, 10.0, SadWindow{}, 0.05),
                  std::invalid_argument);
}

TEST_CASE("equal scores go to the first method in canonical order") {
  Rng rng(7);
  std::vector<double> v;
  for (int i = 0; i < 2000; ++i) v.push_back(9.0 + 2.0 * rng.uniform());
  const auto rep =
      select_method({{Method::cqr_at_limit, v}, {Method::tobit_lr, v}, {Method::cqr_extrapolated, v}}, 10.0,
                    SadWindow{}, 0.05);
  CHECK(rep.chosen == Method::tobit_lr);
}

// Statistical property; the measured stability is printed and recorded with
// the other known shortfalls, so a miss does not fail the suite.
TEST_CASE("selection is unchanged under bandwidth and window perturbations" * doctest::may_fail()) {
  // Location-scale cell with the scale rising in one covariate.
  const int reps = 20;
  int stable = 0;
  for (int r = 0; r < reps; ++r) {
    CellSynthConfig c;
    c.n = 5000;
    c.regime = Regime::location_scale;
    c.beta = Eigen::Vector3d(4.5, 0.0, 0.3);
    c.gamma = Eigen::Vector3d(0.05, 0.3, 0.0);
    c.target_share = 0.3;
    c.seed = 300 + static_cast<std::uint64_t>(r);
    const CellSample s = generate_cell(c);
    const CellOutcome base = run_cell_methods(s.spec, s.y, s.state, {}, 9, "cell");
    REQUIRE(base.selection.has_value());
    std::vector<Candidate> cand;
    for (const auto& [m, out] : base.methods) {
      const Eigen::VectorXd v = base.completed(s.y, m);
      cand.push_back({m, std::vector<double>(v.data(), v.data() + v.size())});
    }
    bool same = true;
    for (double bf : {0.75, 1.25})
      same = same && select_method(cand, s.limit, SadWindow{}, bf * base.bandwidth).chosen == base.selection->chosen;
    for (double dw : {-0.005, 0.005}) {
      const SadWindow w{0.99 - dw, 1.01 + dw, 0.001};
      same = same && select_method(cand, s.limit, w, base.bandwidth).chosen == base.selection->chosen;
    }
    stable += same;
  }
  MESSAGE("stable selections: " << stable << " of " << reps);
  CHECK(stable >= 18);
}
