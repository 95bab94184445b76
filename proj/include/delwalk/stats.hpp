#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace delwalk::stats {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;
};

/// Ordinary least squares y = slope * x + intercept. Requires >= 2 points
/// with distinct abscissae (throws ParameterError otherwise).
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

double mean(std::span<const double> v);
double variance(std::span<const double> v);  // unbiased
double standard_error(std::span<const double> v);

/// Standard errors of per-batch means: splits v into `batches` contiguous
/// groups and returns the standard error of the group means.
double batch_standard_error(std::span<const double> v, std::size_t batches);

double normal_cdf(double z);

/// One-sample Kolmogorov-Smirnov statistic against N(mu, sigma^2).
double ks_statistic_normal(std::vector<double> sample, double mu, double sigma);

/// Asymptotic critical value of the KS statistic at level alpha (0.01 or
/// 0.05 supported exactly, others via the Kolmogorov tail approximation).
double ks_critical_value(std::size_t n, double alpha);

/// log of the Poisson(mean) probability mass at k.
double log_poisson_pmf(double mean, long k);

}  // namespace delwalk::stats
