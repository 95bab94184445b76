#include "delwalk/stats.hpp"

#include <algorithm>
#include <cmath>

#include "delwalk/core.hpp"

namespace delwalk::stats {

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ParameterError("fit_line: need >= 2 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) throw ParameterError("fit_line: abscissae are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  f.n = x.size();
  return f;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double t : v) s += t;
  return s / static_cast<double>(v.size());
}

double variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double t : v) s += (t - m) * (t - m);
  return s / static_cast<double>(v.size() - 1);
}

double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return std::sqrt(variance(v) / static_cast<double>(v.size()));
}

double batch_standard_error(std::span<const double> v, std::size_t batches) {
  if (batches < 2 || v.size() < batches) return standard_error(v);
  const std::size_t per = v.size() / batches;
  std::vector<double> means;
  means.reserve(batches);
  for (std::size_t b = 0; b < batches; ++b) means.push_back(mean(v.subspan(b * per, per)));
  return standard_error(means);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double ks_statistic_normal(std::vector<double> sample, double mu, double sigma) {
  if (sample.empty() || !(sigma > 0.0)) throw ParameterError("ks_statistic_normal: empty sample or sigma <= 0");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = normal_cdf((sample[i] - mu) / sigma);
    d = std::max(d, std::max(f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f));
  }
  return d;
}

double ks_critical_value(std::size_t n, double alpha) {
  // Kolmogorov distribution: P[sqrt(n) D > c] ~ 2 exp(-2 c^2).
  double c;
  if (alpha == 0.01)
    c = 1.6276;
  else if (alpha == 0.05)
    c = 1.3581;
  else
    c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return c / std::sqrt(static_cast<double>(n));
}

double log_poisson_pmf(double mean, long k) {
  if (mean <= 0.0) return k == 0 ? 0.0 : -INFINITY;
  return static_cast<double>(k) * std::log(mean) - mean - std::lgamma(static_cast<double>(k) + 1.0);
}

}  // namespace delwalk::stats
