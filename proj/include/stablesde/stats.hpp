#pragma once

#include <span>
#include <vector>

#include "stablesde/rng.hpp"

namespace stablesde {

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

MeanStderr mean_stderr(std::span<const double> xs);

// Ordinary least squares y = intercept + slope*x with studentized-residual
// confidence interval on the slope (Student-t, two-sided).
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double slope_lo = 0.0;
  double slope_hi = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;
};

LinearFit fit_line(std::span<const double> x, std::span<const double> y,
                   double confidence = 0.95);
LinearFit fit_loglog(std::span<const double> x, std::span<const double> y,
                     double confidence = 0.95);

double student_t_quantile(double p, double dof);
double normal_cdf(double x);
double normal_quantile(double p);

// Two-sample Kolmogorov-Smirnov. Returns the KS statistic; reject at level
// `level` when the statistic exceeds ks_two_sample_critical.
double ks_two_sample_statistic(std::vector<double> a, std::vector<double> b);
double ks_two_sample_critical(std::size_t n, std::size_t m, double level);

// Nonparametric percentile bootstrap over rows of a sample.
struct BootstrapCi {
  double lo = 0.0;
  double hi = 0.0;
  double stderr_ = 0.0;
};

}  // namespace stablesde
