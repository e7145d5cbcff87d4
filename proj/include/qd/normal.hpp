#pragma once

namespace qd::normal {

// Standard normal cdf and upper tail, both through erfc so that neither
// loses relative accuracy in its own tail.
double cdf(double z);
double sf(double z);
double pdf(double z);

/// Inverse of the standard normal cdf (Acklam's rational approximation
/// polished with one Halley step; |error| < 1e-13 on (0,1)).
double quantile(double p);

// N(mean, variance) versions.
double cdf(double x, double mean, double variance);
double sf(double x, double mean, double variance);
double pdf(double x, double mean, double variance);

}  // namespace qd::normal
