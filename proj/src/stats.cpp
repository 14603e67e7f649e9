#include "stablesde/stats.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stablesde {

MeanStderr mean_stderr(std::span<const double> xs) {
  MeanStderr out;
  out.n = xs.size();
  if (xs.empty()) return out;
  double s = 0.0;
  for (double x : xs) s += x;
  out.mean = s / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  const double var = ss / static_cast<double>(xs.size() - 1);
  out.stderr_ = std::sqrt(var / static_cast<double>(xs.size()));
  return out;
}

double student_t_quantile(double p, double dof) {
  boost::math::students_t dist(dof);
  return boost::math::quantile(dist, p);
}

double normal_cdf(double x) {
  static const boost::math::normal dist;
  return boost::math::cdf(dist, x);
}

double normal_quantile(double p) {
  static const boost::math::normal dist;
  return boost::math::quantile(dist, p);
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y,
                   double confidence) {
  if (x.size() != y.size() || x.size() < 3)
    throw std::invalid_argument("fit_line: need >= 3 paired points");
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) throw std::invalid_argument("fit_line: degenerate abscissa");

  LinearFit fit;
  fit.n = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    ssr += r * r;
  }
  const double dof = static_cast<double>(n - 2);
  const double s2 = ssr / dof;
  fit.slope_se = std::sqrt(s2 / sxx);
  const double t = student_t_quantile(0.5 + confidence / 2.0, dof);
  fit.slope_lo = fit.slope - t * fit.slope_se;
  fit.slope_hi = fit.slope + t * fit.slope_se;
  fit.r2 = (syy > 0.0) ? 1.0 - ssr / syy : 1.0;
  return fit;
}

LinearFit fit_loglog(std::span<const double> x, std::span<const double> y,
                     double confidence) {
  std::vector<double> lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] <= 0.0 || y[i] <= 0.0)
      throw std::invalid_argument("fit_loglog: nonpositive input");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  return fit_line(lx, ly, confidence);
}

double ks_two_sample_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  return d;
}

double ks_two_sample_critical(std::size_t n, std::size_t m, double level) {
  // asymptotic Kolmogorov quantile c(level) = sqrt(-0.5 ln(level/2)),
  // scaled by sqrt((n+m)/(nm))
  const double c = std::sqrt(-0.5 * std::log(level / 2.0));
  return c * std::sqrt((static_cast<double>(n) + static_cast<double>(m)) /
                       (static_cast<double>(n) * static_cast<double>(m)));
}

}  // namespace stablesde
