#include "topimpute/cqr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "topimpute/csv.hpp"
#include "topimpute/normal.hpp"

namespace topimpute {

namespace {

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = X.row(idx[k]);
  return out;
}

Eigen::VectorXd rows_of(const Eigen::VectorXd& y, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = y(idx[k]);
  return out;
}

double uncensored_share(std::span<const CensorState> state) {
  std::size_t censored = 0;
  for (auto s : state) {
    if (s == CensorState::at_lower) throw std::invalid_argument("cqr: lower-censored rows are not supported");
    censored += s == CensorState::at_upper ? 1 : 0;
  }
  return 1.0 - static_cast<double>(censored) / static_cast<double>(state.size());
}

void check_inputs(const TobitSpec& spec, const Eigen::VectorXd& y, std::span<const CensorState> state) {
  const Eigen::Index n = spec.design.rows();
  if (n == 0 || y.size() != n || spec.upper.size() != n || static_cast<Eigen::Index>(state.size()) != n)
    throw std::invalid_argument("cqr: inconsistent input sizes");
}

void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("quantile grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0 && grid[k] <= 1.0)) throw std::invalid_argument("quantile grid points must lie in (0, 1]");
    if (k > 0 && !(grid[k] > grid[k - 1])) throw std::invalid_argument("quantile grid must be strictly increasing");
  }
}

}  // namespace

Eigen::VectorXd uncensored_probability(const Eigen::MatrixXd& design, std::span<const CensorState> state) {
  std::vector<int> d(state.size());
  bool any_censored = false;
  for (std::size_t i = 0; i < state.size(); ++i) {
    d[i] = state[i] == CensorState::at_upper ? 0 : 1;
    any_censored = any_censored || d[i] == 0;
  }
  if (!any_censored) return Eigen::VectorXd::Ones(design.rows());
  const FitResult fit = probit(design, d);
  const Eigen::VectorXd eta = design * fit.coefficients;
  return eta.unaryExpr([](double v) { return normal::cdf(v); });
}

FitResult cqr_three_step(const TobitSpec& spec, const Eigen::VectorXd& y, std::span<const CensorState> state,
                         double tau, const CqrOptions& options, const Eigen::VectorXd* probability,
                         CqrDiagnostics* diagnostics) {
  check_inputs(spec, y, state);
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("cqr: tau must lie in (0, 1)");
  const Eigen::MatrixXd& X = spec.design;
  const Eigen::Index n = X.rows();
  const std::size_t min_rows = 2 * static_cast<std::size_t>(X.cols());
  const double share = uncensored_share(state);
  if (!(tau < share)) throw InfeasibleError("cqr: tau is not below the uncensored share");

  if (share == 1.0) {
    if (diagnostics) *diagnostics = {static_cast<std::size_t>(n), static_cast<std::size_t>(n), 0.0};
    return quantreg(X, y, tau, options.quantreg);
  }

  Eigen::VectorXd own_prob;
  if (!probability) {
    own_prob = uncensored_probability(X, state);
    probability = &own_prob;
  }
  if (probability->size() != n) throw std::invalid_argument("cqr: probability vector has wrong length");

  // Step 1: rows whose predicted chance of being uncensored clears tau.
  std::vector<Eigen::Index> j0;
  for (Eigen::Index i = 0; i < n; ++i)
    if ((*probability)(i) > tau + options.delta) j0.push_back(i);
  if (j0.size() < min_rows) throw InfeasibleError("cqr: step 1 selects too few rows");

  // Step 2: initial quantile fit on J0; keep rows predicted below the limit.
  const FitResult b0 = quantreg(rows_of(X, j0), rows_of(y, j0), tau, options.quantreg);
  std::vector<double> resid;
  for (Eigen::Index i : j0)
    if (state[static_cast<std::size_t>(i)] == CensorState::uncensored) resid.push_back(y(i) - X.row(i).dot(b0.coefficients));
  double sd = 0.0;
  if (resid.size() > 1) {
    double m = 0.0;
    for (double r : resid) m += r;
    m /= static_cast<double>(resid.size());
    for (double r : resid) sd += (r - m) * (r - m);
    sd = std::sqrt(sd / static_cast<double>(resid.size() - 1));
  }
  const double zeta = options.zeta_scale * sd;
  const Eigen::VectorXd pred = X * b0.coefficients;
  std::vector<Eigen::Index> j1;
  for (Eigen::Index i = 0; i < n; ++i)
    if (pred(i) < spec.upper(i) - zeta) j1.push_back(i);
  if (j1.size() < min_rows) throw InfeasibleError("cqr: step 2 selects too few rows");

  // Step 3.
  FitResult fit = quantreg(rows_of(X, j1), rows_of(y, j1), tau, options.quantreg);
  if (diagnostics) *diagnostics = {j0.size(), j1.size(), zeta};
  return fit;
}

std::vector<double> default_quantile_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 100; ++k) g.push_back(k / 100.0);
  return g;
}

QuantileProfile coefficient_profile(const TobitSpec& spec, const Eigen::VectorXd& y,
                                    std::span<const CensorState> state, const std::vector<double>& grid,
                                    const CqrOptions& options) {
  check_inputs(spec, y, state);
  check_grid(grid);
  const double share = uncensored_share(state);
  const Eigen::VectorXd prob = uncensored_probability(spec.design, state);

  QuantileProfile prof;
  prof.grid = grid;
  prof.coefficients = Eigen::MatrixXd::Constant(spec.design.cols(), static_cast<Eigen::Index>(grid.size()),
                                                std::numeric_limits<double>::quiet_NaN());
  prof.feasible.assign(grid.size(), false);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double q = grid[k];
    if (!(q < share) || q >= 1.0) break;
    try {
      const FitResult fit = cqr_three_step(spec, y, state, q, options, &prob);
      prof.coefficients.col(static_cast<Eigen::Index>(k)) = fit.coefficients;
      prof.feasible[k] = true;
      prof.qc_index = k;
    } catch (const EstimationError&) {
      break;
    }
  }
  if (!prof.qc_index) throw InfeasibleError("coefficient_profile: no feasible grid point");
  return prof;
}

AtLimitFit fit_at_limit_quantile(const TobitSpec& spec, const Eigen::VectorXd& y, std::span<const CensorState> state,
                                 const std::vector<double>& grid, const CqrOptions& options) {
  check_inputs(spec, y, state);
  check_grid(grid);
  const double share = uncensored_share(state);
  const Eigen::VectorXd prob = uncensored_probability(spec.design, state);
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
    if (!(*it < share) || *it >= 1.0) continue;
    try {
      return {*it, cqr_three_step(spec, y, state, *it, options, &prob)};
    } catch (const EstimationError&) {
    }
  }
  throw InfeasibleError("cqr: no feasible quantile below the censoring limit");
}

std::vector<double> impute_cqr_at_limit(const FitResult& fit_at_qc, const Eigen::MatrixXd& design,
                                        const Eigen::VectorXd& upper, std::span<const Eigen::Index> rows,
                                        double resid_sd, Rng& rng) {
  if (!(resid_sd > 0.0)) throw std::invalid_argument("impute_cqr_at_limit: resid_sd must be positive");
  std::vector<double> out;
  out.reserve(rows.size());
  for (Eigen::Index i : rows) {
    const double index = design.row(i).dot(fit_at_qc.coefficients);
    double w = index + trunc_normal_draw(0.0, resid_sd, upper(i) - index, rng);
    if (!(w > upper(i))) w = std::nextafter(upper(i), std::numeric_limits<double>::infinity());
    out.push_back(w);
  }
  return out;
}

QuantileProfile extrapolate_profile(const QuantileProfile& profile, const ExtrapolationOptions& options) {
  if (!profile.qc_index) throw InfeasibleError("extrapolate_profile: profile has no feasible point");
  const double qc = profile.grid[*profile.qc_index];
  std::vector<std::size_t> used;
  for (std::size_t k = 0; k <= *profile.qc_index; ++k)
    if (profile.feasible[k] && profile.grid[k] >= options.min_quantile - 1e-12) used.push_back(k);
  if (used.empty()) throw InfeasibleError("extrapolate_profile: fewer than 3 usable grid points");

  const double q_lo = profile.grid[used.front()];
  const double step = profile.grid.size() > 1 ? profile.grid[1] - profile.grid[0] : 0.01;
  std::vector<std::size_t> pts;
  std::vector<double> weight;
  for (std::size_t k : used) {
    const double q = profile.grid[k];
    const double w = options.inverted_weights ? q - q_lo + step : qc - q;
    if (w > 0.0) {
      pts.push_back(k);
      weight.push_back(w);
    }
  }
  if (pts.size() < 3) throw InfeasibleError("extrapolate_profile: fewer than 3 usable grid points");

  const Eigen::Index m = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd Q(m, 3);
  for (Eigen::Index r = 0; r < m; ++r) {
    const double q = profile.grid[pts[static_cast<std::size_t>(r)]];
    Q(r, 0) = 1.0;
    Q(r, 1) = q;
    Q(r, 2) = q * q;
  }
  OlsOptions ols_opt;
  ols_opt.weights = Eigen::Map<const Eigen::VectorXd>(weight.data(), m);
  ols_opt.ridge = options.penalty;

  const Eigen::Index G = static_cast<Eigen::Index>(profile.grid.size());
  Eigen::MatrixXd full(G, 3);
  for (Eigen::Index k = 0; k < G; ++k) {
    const double q = profile.grid[static_cast<std::size_t>(k)];
    full(k, 0) = 1.0;
    full(k, 1) = q;
    full(k, 2) = q * q;
  }

  QuantileProfile out = profile;
  out.extrapolated = true;
  for (Eigen::Index j = 0; j < profile.coefficients.rows(); ++j) {
    Eigen::VectorXd b(m);
    for (Eigen::Index r = 0; r < m; ++r) b(r) = profile.coefficients(j, static_cast<Eigen::Index>(pts[static_cast<std::size_t>(r)]));
    const FitResult path = ols(Q, b, ols_opt);
    out.coefficients.row(j) = (full * path.coefficients).transpose();
  }
  return out;
}

std::vector<double> monotone_rearrange(std::vector<double> path) {
  std::sort(path.begin(), path.end());
  return path;
}

ExtrapolatedImputation impute_cqr_extrapolated(const QuantileProfile& extrapolated, const Eigen::MatrixXd& design,
                                               const Eigen::VectorXd& upper, std::span<const Eigen::Index> rows,
                                               Rng& rng, const std::function<double(Eigen::Index)>& fallback) {
  if (!extrapolated.extrapolated || !extrapolated.coefficients.allFinite())
    throw std::invalid_argument("impute_cqr_extrapolated: profile does not cover the full grid");
  ExtrapolatedImputation out;
  out.values.reserve(rows.size());
  out.fallback.reserve(rows.size());
  const std::size_t G = extrapolated.grid.size();
  std::vector<double> path(G);
  for (Eigen::Index i : rows) {
    const Eigen::RowVectorXd idx = design.row(i) * extrapolated.coefficients;
    path.assign(idx.data(), idx.data() + G);
    path = monotone_rearrange(std::move(path));
    const auto first = std::lower_bound(path.begin(), path.end(), upper(i));
    if (first == path.end()) {
      if (!fallback) throw InfeasibleError("impute_cqr_extrapolated: index path never reaches the limit");
      out.values.push_back(fallback(i));
      out.fallback.push_back(true);
      ++out.fallback_count;
      continue;
    }
    const std::size_t k = static_cast<std::size_t>(first - path.begin());
    const std::size_t u = k + static_cast<std::size_t>(rng.below(G - k));
    out.values.push_back(path[u]);
    out.fallback.push_back(false);
  }
  return out;
}

void write_profile_csv(const std::filesystem::path& path, const QuantileProfile& profile,
                       const std::vector<std::string>& coefficient_names) {
  if (static_cast<Eigen::Index>(coefficient_names.size()) != profile.coefficients.rows())
    throw std::invalid_argument("write_profile_csv: one name per coefficient required");
  csv::Writer w(path);
  std::vector<std::string> row{"quantile", "feasible"};
  row.insert(row.end(), coefficient_names.begin(), coefficient_names.end());
  w.row(row);
  for (std::size_t k = 0; k < profile.grid.size(); ++k) {
    row = {csv::format_double(profile.grid[k]), profile.feasible[k] ? "1" : "0"};
    for (Eigen::Index j = 0; j < profile.coefficients.rows(); ++j)
      row.push_back(csv::format_double(profile.coefficients(j, static_cast<Eigen::Index>(k))));
    w.row(row);
  }
}

}  // namespace topimpute
