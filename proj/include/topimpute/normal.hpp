#pragma once

namespace topimpute::normal {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
inline constexpr double kLogSqrt2Pi = 0.918938533204672741780329736406;

double pdf(double x);
double cdf(double x);
/// Upper tail 1 - cdf(x), accurate for large x.
double sf(double x);
/// log(cdf(x)), finite for arbitrarily negative x.
double log_cdf(double x);
/// pdf(x) / cdf(x); the derivative of log_cdf.
double mills_lower(double x);
/// Inverse CDF (Wichura AS241), relative accuracy about 1e-16.
double quantile(double p);

}  // namespace topimpute::normal
