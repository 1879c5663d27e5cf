#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "topimpute/estimators.hpp"
#include "topimpute/normal.hpp"

namespace topimpute {

namespace {
constexpr double kTailSwitch = 4.0;
}

double trunc_normal_draw(double mean, double sd, double lower, Rng& rng) {
  if (!(sd > 0.0) || !std::isfinite(sd)) throw std::invalid_argument("trunc_normal_draw: sd must be positive");
  if (!std::isfinite(lower) || !std::isfinite(mean)) throw std::invalid_argument("trunc_normal_draw: non-finite bound");

  const double a = (lower - mean) / sd;
  double z;
  if (a <= kTailSwitch) {
    // Sample the upper tail mass directly: z = -Phi^-1(u * Phi(-a)).
    const double tail = normal::sf(a);
    z = -normal::quantile(rng.uniform() * tail);
    if (!(z > a)) z = std::nextafter(a, std::numeric_limits<double>::infinity());
  } else {
    // Robert (1995): translated exponential proposal with the optimal rate.
    const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
    for (;;) {
      z = a + rng.exponential() / alpha;
      const double d = z - alpha;
      if (rng.uniform() <= std::exp(-0.5 * d * d)) break;
    }
  }
  double x = mean + sd * z;
  if (!(x > lower)) x = std::nextafter(lower, std::numeric_limits<double>::infinity());
  return x;
}

std::vector<double> kde(std::span<const double> values, std::span<const double> grid, double bandwidth) {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("kde: bandwidth must be positive");
  if (values.empty()) throw std::invalid_argument("kde: no values");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("kde: grid must be strictly increasing");

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double reach = 9.0 * bandwidth;  // kernel weight below 1e-17 beyond
  const double norm = normal::kInvSqrt2Pi / (static_cast<double>(sorted.size()) * bandwidth);
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double x = grid[g];
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), x - reach);
    auto hi = std::upper_bound(lo, sorted.end(), x + reach);
    double acc = 0.0;
    for (auto it = lo; it != hi; ++it) {
      const double u = (x - *it) / bandwidth;
      acc += std::exp(-0.5 * u * u);
    }
    out[g] = acc * norm;
  }
  return out;
}

double empirical_quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("empirical_quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("empirical_quantile: q outside [0, 1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double empirical_quantile(std::span<const double> values, double q) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return empirical_quantile_sorted(sorted, q);
}

double silverman_bandwidth(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw std::invalid_argument("silverman_bandwidth: need at least two values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double iqr = empirical_quantile_sorted(sorted, 0.75) - empirical_quantile_sorted(sorted, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) throw std::invalid_argument("silverman_bandwidth: sample has no spread");
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

}  // namespace topimpute
