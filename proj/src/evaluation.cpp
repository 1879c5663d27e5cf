#include "topimpute/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "topimpute/csv.hpp"
#include "topimpute/estimators.hpp"

namespace topimpute {

ArtificialCensoring artificial_censor(const Panel& truth_panel, const CensorRules& rules) {
  ArtificialCensoring out;
  out.panel = truth_panel;
  out.truth.reserve(truth_panel.records.size());
  std::map<std::pair<int, std::string>, std::pair<std::size_t, std::size_t>> counts;  // censored, total
  for (auto& r : out.panel.records) {
    const CensorRule* rule = rules.find(r.year, r.region);
    if (!rule) throw std::invalid_argument("artificial_censor: no rule for " + std::to_string(r.year) + "/" + r.region);
    out.truth.push_back(r.log_wage);
    auto& c = counts[{r.year, r.region}];
    ++c.second;
    r.censored = r.log_wage >= rule->upper_limit;
    if (r.censored) {
      r.log_wage = rule->upper_limit;
      ++c.first;
      ++out.censored;
    }
  }
  for (const auto& [key, c] : counts)
    if (c.first == c.second)
      throw std::invalid_argument("artificial_censor: every record of " + std::to_string(key.first) + "/" + key.second +
                                  " is censored");
  return out;
}

Panel restore_truth(const Panel& panel, std::span<const double> truth) {
  if (truth.size() != panel.records.size()) throw std::invalid_argument("restore_truth: size mismatch");
  Panel out = panel;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out.records[i].log_wage = truth[i];
    out.records[i].censored = false;
  }
  return out;
}

RegressionMetrics regression_metrics(std::span<const double> truth, std::span<const double> imputed,
                                     const Eigen::MatrixXd& design) {
  const Eigen::Index n = design.rows();
  if (static_cast<Eigen::Index>(truth.size()) != n || static_cast<Eigen::Index>(imputed.size()) != n)
    throw std::invalid_argument("regression_metrics: size mismatch");
  const Eigen::Map<const Eigen::VectorXd> yt(truth.data(), n);
  const Eigen::Map<const Eigen::VectorXd> yi(imputed.data(), n);
  const FitResult ft = ols(design, yt);
  const FitResult fi = ols(design, yi);
  const Eigen::VectorXd dp = design * (fi.coefficients - ft.coefficients);
  const Eigen::VectorXd dc = fi.coefficients - ft.coefficients;
  RegressionMetrics m;
  m.mse_pred = dp.squaredNorm() / static_cast<double>(n);
  m.mae_pred = dp.cwiseAbs().sum() / static_cast<double>(n);
  m.msd_coef = dc.squaredNorm() / static_cast<double>(dc.size());
  m.mad_coef = dc.cwiseAbs().sum() / static_cast<double>(dc.size());
  return m;
}

DistributionMetrics distribution_metrics(std::span<const double> truth, std::span<const double> imputed,
                                         std::optional<double> bandwidth) {
  if (truth.empty() || imputed.empty()) throw std::invalid_argument("distribution_metrics: empty sample");
  const auto [tlo, thi] = std::minmax_element(truth.begin(), truth.end());
  const auto [ilo, ihi] = std::minmax_element(imputed.begin(), imputed.end());
  if (*tlo == *thi || *ilo == *ihi) throw std::invalid_argument("distribution_metrics: degenerate sample");
  const double h = bandwidth ? *bandwidth : silverman_bandwidth(truth);
  if (!(h > 0.0)) throw std::invalid_argument("distribution_metrics: bandwidth must be positive");

  constexpr int kPoints = 512;
  constexpr double kFloor = 1e-12;
  const double lo = std::min(*tlo, *ilo) - 3.0 * h;
  const double hi = std::max(*thi, *ihi) + 3.0 * h;
  std::vector<double> grid(kPoints);
  for (int k = 0; k < kPoints; ++k) grid[k] = lo + (hi - lo) * k / (kPoints - 1);
  auto p = kde(truth, grid, h);
  auto q = kde(imputed, grid, h);
  const double dx = grid[1] - grid[0];
  const auto normalize = [&](std::vector<double>& f) {
    for (double& v : f) v = std::max(v, kFloor);
    double area = 0.0;
    for (int k = 0; k < kPoints; ++k) area += (k == 0 || k == kPoints - 1 ? 0.5 : 1.0) * f[k] * dx;
    for (double& v : f) v /= area;
  };
  normalize(p);
  normalize(q);
  // p log(p/q) - p + q is pointwise nonnegative and integrates to the KL
  // divergence of the normalized densities.
  double kl = 0.0;
  for (int k = 0; k < kPoints; ++k) {
    const double v = p[k] * std::log(p[k] / q[k]) - p[k] + q[k];
    kl += (k == 0 || k == kPoints - 1 ? 0.5 : 1.0) * std::max(v, 0.0) * dx;
  }

  DistributionMetrics d;
  d.kl_div = kl;
  std::vector<double> ts(truth.begin(), truth.end()), is(imputed.begin(), imputed.end());
  std::sort(ts.begin(), ts.end());
  std::sort(is.begin(), is.end());
  d.dev_q90 = empirical_quantile_sorted(ts, 0.90) - empirical_quantile_sorted(is, 0.90);
  d.dev_q99 = empirical_quantile_sorted(ts, 0.99) - empirical_quantile_sorted(is, 0.99);
  return d;
}

void write_metrics_header(std::ostream& out, const std::vector<Method>& methods) {
  csv::Writer w(out);
  std::vector<std::string> row{"cell_id", "metric", "scale"};
  for (Method m : methods) row.push_back(method_name(m));
  w.row(row);
}

void write_metrics_block(std::ostream& out, const std::string& cell_id, const std::vector<Method>& methods,
                         const std::map<Method, MetricsReport>& reports) {
  csv::Writer w(out);
  struct Row {
    const char* name;
    const char* scale;
    double factor;
    double (*get)(const MetricsReport&);
  };
  static const Row rows[] = {
      {"MSE_pred", "1", 1.0, [](const MetricsReport& r) { return r.regression.mse_pred; }},
      {"MAE_pred", "1", 1.0, [](const MetricsReport& r) { return r.regression.mae_pred; }},
      {"MSD_coef", "x100", 100.0, [](const MetricsReport& r) { return r.regression.msd_coef; }},
      {"MAD_coef", "x100", 100.0, [](const MetricsReport& r) { return r.regression.mad_coef; }},
      {"KL_div", "x100", 100.0, [](const MetricsReport& r) { return r.distribution.kl_div; }},
      {"Dev_Q90", "1", 1.0, [](const MetricsReport& r) { return r.distribution.dev_q90; }},
      {"Dev_Q99", "1", 1.0, [](const MetricsReport& r) { return r.distribution.dev_q99; }},
  };
  std::vector<std::string> cells;
  for (const Row& row : rows) {
    cells = {cell_id, row.name, row.scale};
    for (Method m : methods) {
      const auto it = reports.find(m);
      cells.push_back(it == reports.end() ? "NA" : csv::format_double(row.factor * row.get(it->second)));
    }
    w.row(cells);
  }
  cells = {cell_id, "SAD", "1"};
  for (Method m : methods) {
    const auto it = reports.find(m);
    cells.push_back(it == reports.end() || !it->second.sad ? "NA" : csv::format_double(*it->second.sad));
  }
  w.row(cells);
}

}  // namespace topimpute
