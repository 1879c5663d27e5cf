#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace topimpute {

/// Imputation methods in their fixed reporting and tie-break order.
enum class Method { tobit_r, tobit_lr, cqr_at_limit, cqr_extrapolated };

inline constexpr Method kAllMethods[] = {Method::tobit_r, Method::tobit_lr, Method::cqr_at_limit,
                                         Method::cqr_extrapolated};

std::string method_name(Method m);
/// Accepts the names produced by method_name; throws ConfigError otherwise.
Method parse_method(const std::string& name);

/// Evaluation window around the limit C: [lower_factor C, upper_factor C]
/// with constant step.
struct SadWindow {
  double lower_factor = 0.99;
  double upper_factor = 1.01;
  double step = 0.001;
};

/// Density ordinates on an equally spaced grid.
struct DensityGrid {
  std::vector<double> x;
  std::vector<double> f;
  double g_min = 0.0;
  double g_max = 0.0;
  double step = 0.0;
  double limit = 0.0;
};

/// Abscissae g_min, g_min + step, ..., g_max for the window around `limit`.
/// Ordinates are left empty.
DensityGrid window_grid(double limit, const SadWindow& window);

/// Kernel density of `values` on the window grid.
DensityGrid window_density(std::span<const double> values, double limit, const SadWindow& window, double bandwidth);

/// Sum of |f(x+1) - 2 f(x) + f(x-1)| / step^2 over interior grid points.
double sad_of_ordinates(std::span<const double> f, double step);

/// SAD of the kernel density of `values` over the window. Empty when the
/// values do not span the window.
std::optional<double> sad(std::span<const double> values, double limit, const SadWindow& window, double bandwidth);

/// Sum over grid points i >= 1 of |f_ref - f_j| * (x_i - x_{i-1}) * f_ref.
double deviation_sum(std::span<const double> x, std::span<const double> f_ref, std::span<const double> f_j);

/// The alternative criterion: the density of `reference` is fitted by a line
/// on [fit_lower_factor C, C) and extrapolated into the SAD window, where it
/// is compared with the density of `values`. Throws InfeasibleError when the
/// fitting range holds fewer than two grid points.
double deviation_criterion(std::span<const double> values, std::span<const double> reference, double limit,
                           const SadWindow& window, double bandwidth, double fit_lower_factor = 0.9);

struct Candidate {
  Method method;
  std::vector<double> combined;  ///< observed uncensored plus imputed log wages
};

struct SelectionReport {
  std::map<Method, std::optional<double>> scores;
  Method chosen = Method::tobit_r;
  double bandwidth = 0.0;
  SadWindow window;
  double limit = 0.0;
};

/// Scores every candidate and picks the smallest SAD; ties go to the method
/// earliest in kAllMethods. Throws InfeasibleError when no score is defined.
SelectionReport select_method(const std::vector<Candidate>& candidates, double limit, const SadWindow& window,
                              double bandwidth);

}  // namespace topimpute
