#include <doctest.h>

#include <cmath>
#include <vector>

#include "stablesde/rng.hpp"
#include "stablesde/stats.hpp"

using namespace stablesde;

TEST_CASE("mean_stderr basics") {
  std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
  const auto ms = mean_stderr(xs);
  CHECK(ms.mean == doctest::Approx(2.5));
  // sd = sqrt(5/3), stderr = sd/2
  CHECK(ms.stderr_ == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
}

TEST_CASE("fit_line recovers an exact line with zero residual") {
  std::vector<double> x = {1, 2, 3, 4, 5}, y;
  for (double xi : x) y.push_back(3.0 - 2.0 * xi);
  const auto fit = fit_line(x, y);
  CHECK(fit.slope == doctest::Approx(-2.0));
  CHECK(fit.intercept == doctest::Approx(3.0));
  CHECK(fit.slope_se == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fit_line CI covers the true slope on noisy data") {
  RngStream rng(17);
  int cover = 0;
  const int trials = 200;
  for (int tr = 0; tr < trials; ++tr) {
    std::vector<double> x, y;
    for (int i = 0; i < 12; ++i) {
      x.push_back(i);
      y.push_back(1.0 + 0.5 * i + 0.4 * rng.normal());
    }
    const auto fit = fit_line(x, y, 0.95);
    if (fit.slope_lo <= 0.5 && 0.5 <= fit.slope_hi) ++cover;
  }
  CHECK(cover >= 0.88 * trials);  // nominal 95%
}

TEST_CASE("fit_loglog reads off power-law exponents") {
  std::vector<double> x = {0.02, 0.05, 0.1, 0.2, 0.3}, y;
  for (double xi : x) y.push_back(2.7 * std::pow(xi, 1.25));
  const auto fit = fit_loglog(x, y);
  CHECK(fit.slope == doctest::Approx(1.25).epsilon(1e-10));
  CHECK(std::exp(fit.intercept) == doctest::Approx(2.7).epsilon(1e-10));
}

TEST_CASE("two-sample KS accepts same law, rejects shifted law") {
  RngStream rng(5);
  const int n = 20000;
  std::vector<double> a(n), b(n), c(n);
  for (int i = 0; i < n; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
    c[i] = rng.normal() + 0.1;
  }
  CHECK(ks_two_sample_statistic(a, b) < ks_two_sample_critical(n, n, 0.01));
  CHECK(ks_two_sample_statistic(a, c) > ks_two_sample_critical(n, n, 0.01));
}

TEST_CASE("normal quantile/cdf roundtrip") {
  for (double p : {0.025, 0.5, 0.8, 0.975})
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
  CHECK(student_t_quantile(0.975, 1e9) ==
        doctest::Approx(normal_quantile(0.975)).epsilon(1e-4));
}
