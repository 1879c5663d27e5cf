#include "topimpute/methods.hpp"

#include <algorithm>
#include <cmath>

#include "topimpute/config.hpp"
#include "topimpute/csv.hpp"

namespace topimpute {

MethodSpec parse_method_spec(const std::string& text) {
  MethodSpec spec;
  const auto at = text.find('@');
  spec.method = parse_method(trim(text.substr(0, at)));
  if (at != std::string::npos) {
    if (spec.method != Method::tobit_lr) throw ConfigError("method '" + text + "' takes no parameter");
    spec.lower_quantile = parse_double(trim(text.substr(at + 1)));
    if (!(spec.lower_quantile > 0.0 && spec.lower_quantile < 1.0))
      throw ConfigError("tobit_lr quantile must lie in (0, 1): '" + text + "'");
  }
  return spec;
}

std::string method_spec_name(const MethodSpec& spec) {
  if (spec.method != Method::tobit_lr) return method_name(spec.method);
  return method_name(spec.method) + "@" + csv::format_double(spec.lower_quantile);
}

std::vector<MethodSpec> default_methods() {
  return {{Method::tobit_r, 0.2}, {Method::tobit_lr, 0.2}, {Method::cqr_at_limit, 0.2}};
}

Eigen::VectorXd CellOutcome::completed(const Eigen::VectorXd& y, Method m) const {
  Eigen::VectorXd out = y;
  const auto& imp = methods.at(m).imputed;
  for (std::size_t k = 0; k < censored_rows.size(); ++k) out(censored_rows[k]) = imp[k];
  return out;
}

namespace {

MethodOutcome run_tobit(const TobitSpec& spec, const Eigen::VectorXd& y, std::span<const CensorState> state,
                        const MethodSpec& m, std::optional<double> fixed_lower,
                        const std::vector<Eigen::Index>& rows, Rng& rng, std::optional<FitResult>& right_fit) {
  MethodOutcome out;
  out.spec = m;
  if (m.method == Method::tobit_r) {
    if (!right_fit) right_fit = fit_tobit(spec, y, state);
    out.fit = *right_fit;
  } else {
    std::vector<double> yv(y.data(), y.data() + y.size());
    const double lo = fixed_lower ? *fixed_lower : artificial_lower_limit(yv, state, m.lower_quantile);
    const LowerCensoring lc = apply_lower_limit(y, state, lo);
    TobitSpec ls = spec;
    ls.lower = Eigen::VectorXd::Constant(y.size(), lo);
    out.fit = fit_tobit(ls, lc.y, lc.state);
    out.lower_limit = lo;
  }
  out.imputed = impute_tobit(*out.fit, spec.design, spec.upper, rows, rng);
  return out;
}

}  // namespace

CellOutcome run_cell_methods(const TobitSpec& spec, const Eigen::VectorXd& y, std::span<const CensorState> state,
                             const CellMethodOptions& options, std::uint64_t seed, const std::string& label) {
  const Eigen::Index n = spec.design.rows();
  if (y.size() != n || static_cast<Eigen::Index>(state.size()) != n || spec.upper.size() != n)
    throw std::invalid_argument("run_cell_methods: size mismatch");
  if (n == 0) throw std::invalid_argument("run_cell_methods: empty cell");
  if (spec.upper.maxCoeff() != spec.upper.minCoeff())
    throw std::invalid_argument("run_cell_methods: upper limits differ within the cell");
  const double limit = spec.upper(0);

  CellOutcome cell;
  for (Eigen::Index i = 0; i < n; ++i)
    if (state[static_cast<std::size_t>(i)] == CensorState::at_upper) cell.censored_rows.push_back(i);
  std::vector<double> recorded(y.data(), y.data() + n);
  cell.bandwidth = options.bandwidth ? *options.bandwidth : silverman_bandwidth(recorded);

  std::optional<FitResult> right_fit;
  std::optional<QuantileProfile> profile;
  const auto right_sigma = [&]() {
    if (!right_fit) right_fit = fit_tobit(spec, y, state);
    return std::sqrt(*right_fit->resid_var);
  };

  for (const MethodSpec& m : options.methods) {
    if (cell.methods.count(m.method)) throw ConfigError("method '" + method_name(m.method) + "' listed twice");
    Rng rng = substream(seed, label + "/" + method_name(m.method));
    MethodOutcome out;
    out.spec = m;
    try {
      switch (m.method) {
        case Method::tobit_r:
        case Method::tobit_lr:
          out = run_tobit(spec, y, state, m, options.lower_limit, cell.censored_rows, rng, right_fit);
          break;
        case Method::cqr_at_limit: {
          const AtLimitFit at = fit_at_limit_quantile(spec, y, state, options.grid, options.cqr);
          const double sd = options.resid_sd ? *options.resid_sd : right_sigma();
          out.imputed = impute_cqr_at_limit(at.fit, spec.design, spec.upper, cell.censored_rows, sd, rng);
          out.fit = at.fit;
          out.q_c = at.q_c;
          break;
        }
        case Method::cqr_extrapolated: {
          if (!profile) profile = coefficient_profile(spec, y, state, options.grid, options.cqr);
          const QuantileProfile ext = extrapolate_profile(*profile, options.extrapolation);
          if (!right_fit) right_fit = fit_tobit(spec, y, state);
          Rng fallback_rng = substream(seed, label + "/" + method_name(m.method) + "/fallback");
          const FitResult& tobit = *right_fit;
          const auto r = impute_cqr_extrapolated(ext, spec.design, spec.upper, cell.censored_rows, rng,
                                                 [&](Eigen::Index i) {
                                                   const Eigen::Index one[] = {i};
                                                   return impute_tobit(tobit, spec.design, spec.upper, one,
                                                                       fallback_rng)[0];
                                                 });
          out.imputed = r.values;
          out.fallback_count = r.fallback_count;
          out.q_c = profile->q_c();
          break;
        }
      }
      out.ok = true;
    } catch (const EstimationError& e) {
      out.ok = false;
      out.error = e.what();
      out.imputed.clear();
    } catch (const std::invalid_argument& e) {
      out.ok = false;
      out.error = e.what();
      out.imputed.clear();
    }
    out.spec = m;
    if (out.ok)
      for (std::size_t k = 0; k < out.imputed.size(); ++k)
        if (!(out.imputed[k] >= spec.upper(cell.censored_rows[k]))) ++cell.support_violations;
    cell.methods[m.method] = std::move(out);
  }

  std::vector<Candidate> candidates;
  for (const auto& [method, out] : cell.methods) {
    if (!out.ok) continue;
    const Eigen::VectorXd c = cell.completed(y, method);
    candidates.push_back({method, std::vector<double>(c.data(), c.data() + n)});
  }
  if (candidates.empty()) {
    cell.selection_error = "no method could be fitted";
    return cell;
  }
  try {
    cell.selection = select_method(candidates, limit, options.window, cell.bandwidth);
  } catch (const EstimationError& e) {
    cell.selection_error = e.what();
  }
  return cell;
}

}  // namespace topimpute
