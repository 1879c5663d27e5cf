#include "topimpute/selection.hpp"

#include <algorithm>
#include <cmath>

#include "topimpute/config.hpp"
#include "topimpute/estimators.hpp"

namespace topimpute {

std::string method_name(Method m) {
  switch (m) {
    case Method::tobit_r: return "tobit_r";
    case Method::tobit_lr: return "tobit_lr";
    case Method::cqr_at_limit: return "cqr_at_limit";
    case Method::cqr_extrapolated: return "cqr_extrapolated";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : kAllMethods)
    if (method_name(m) == name) return m;
  throw ConfigError("unknown method '" + name + "'");
}

DensityGrid window_grid(double limit, const SadWindow& window) {
  if (!(window.step > 0.0)) throw std::invalid_argument("window step must be positive");
  double a = window.lower_factor * limit;
  double b = window.upper_factor * limit;
  if (a > b) std::swap(a, b);
  const auto steps = static_cast<long>(std::floor((b - a) / window.step + 1e-9));
  if (steps < 2) throw std::invalid_argument("window holds fewer than three grid points");
  DensityGrid g;
  g.g_min = a;
  g.step = window.step;
  g.limit = limit;
  g.x.reserve(static_cast<std::size_t>(steps) + 1);
  for (long k = 0; k <= steps; ++k) g.x.push_back(a + static_cast<double>(k) * window.step);
  g.g_max = g.x.back();
  return g;
}

DensityGrid window_density(std::span<const double> values, double limit, const SadWindow& window, double bandwidth) {
  DensityGrid g = window_grid(limit, window);
  g.f = kde(values, g.x, bandwidth);
  return g;
}

double sad_of_ordinates(std::span<const double> f, double step) {
  double s = 0.0;
  const double inv = 1.0 / (step * step);
  for (std::size_t i = 1; i + 1 < f.size(); ++i) s += std::abs(f[i + 1] - 2.0 * f[i] + f[i - 1]) * inv;
  return s;
}

std::optional<double> sad(std::span<const double> values, double limit, const SadWindow& window, double bandwidth) {
  if (values.empty()) return std::nullopt;
  const DensityGrid g = window_grid(limit, window);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo > g.g_min || *hi < g.g_max) return std::nullopt;
  return sad_of_ordinates(kde(values, g.x, bandwidth), g.step);
}

double deviation_sum(std::span<const double> x, std::span<const double> f_ref, std::span<const double> f_j) {
  if (x.size() != f_ref.size() || x.size() != f_j.size()) throw std::invalid_argument("deviation_sum: size mismatch");
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += std::abs(f_ref[i] - f_j[i]) * (x[i] - x[i - 1]) * f_ref[i];
  return s;
}

double deviation_criterion(std::span<const double> values, std::span<const double> reference, double limit,
                           const SadWindow& window, double bandwidth, double fit_lower_factor) {
  if (reference.empty()) throw InfeasibleError("deviation_criterion: no reference values");
  std::vector<double> fit_x;
  const double lo = std::min(fit_lower_factor * limit, limit);
  for (long k = 0;; ++k) {
    const double x = lo + static_cast<double>(k) * window.step;
    if (x > limit - 0.5 * window.step) break;
    fit_x.push_back(x);
  }
  if (fit_x.size() < 2) throw InfeasibleError("deviation_criterion: fitting range holds fewer than two points");
  const auto f_fit = kde(reference, fit_x, bandwidth);

  // Least squares line through the reference density below the limit.
  const double n = static_cast<double>(fit_x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < fit_x.size(); ++i) {
    mx += fit_x[i];
    my += f_fit[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < fit_x.size(); ++i) {
    sxx += (fit_x[i] - mx) * (fit_x[i] - mx);
    sxy += (fit_x[i] - mx) * (f_fit[i] - my);
  }
  if (!(sxx > 0.0)) throw InfeasibleError("deviation_criterion: degenerate extrapolation fit");
  const double slope = sxy / sxx;

  const DensityGrid g = window_grid(limit, window);
  std::vector<double> f_ref(g.x.size());
  for (std::size_t i = 0; i < g.x.size(); ++i) f_ref[i] = std::max(0.0, my + slope * (g.x[i] - mx));
  return deviation_sum(g.x, f_ref, kde(values, g.x, bandwidth));
}

SelectionReport select_method(const std::vector<Candidate>& candidates, double limit, const SadWindow& window,
                              double bandwidth) {
  SelectionReport rep;
  rep.bandwidth = bandwidth;
  rep.window = window;
  rep.limit = limit;
  for (const auto& c : candidates) {
    if (rep.scores.count(c.method)) throw std::invalid_argument("select_method: duplicate candidate method");
    rep.scores[c.method] = sad(c.combined, limit, window, bandwidth);
  }
  std::optional<Method> best;
  double best_score = 0.0;
  for (Method m : kAllMethods) {  // canonical order, so strict < keeps the first of equal scores
    const auto it = rep.scores.find(m);
    if (it == rep.scores.end() || !it->second) continue;
    if (!best || *it->second < best_score) {
      best = m;
      best_score = *it->second;
    }
  }
  if (!best) throw InfeasibleError("select_method: no candidate has a defined score");
  rep.chosen = *best;
  return rep;
}

}  // namespace topimpute
