#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "stablesde/rng.hpp"
#include "stablesde/stats.hpp"
#include "stablesde/wasserstein.hpp"

using namespace stablesde;

namespace {

EmpiricalMeasure random_measure(int n, int d, RngStream& rng, double spread = 1.0) {
  Eigen::MatrixXd pts(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) pts(i, j) = spread * rng.normal();
  return EmpiricalMeasure(pts);
}

// exhaustive assignment over all permutations (n <= 8)
double brute_force_w1(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  const int n = static_cast<int>(a.size());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (int i = 0; i < n; ++i)
      cost += (a.points.row(i) - b.points.row(perm[i])).norm();
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / n;
}

}  // namespace

TEST_CASE("w1_sorted_1d point masses and identity") {
  Eigen::MatrixXd a(1, 1), b(1, 1);
  a << 0.0;
  b << 3.0;
  CHECK(w1_sorted_1d(EmpiricalMeasure(a), EmpiricalMeasure(b)).value ==
        doctest::Approx(3.0));
  CHECK(w1_sorted_1d(EmpiricalMeasure(a), EmpiricalMeasure(a)).value ==
        doctest::Approx(0.0));
  Eigen::MatrixXd c(1, 2);
  c << 0.0, 1.0;
  CHECK_THROWS_AS(
      w1_sorted_1d(EmpiricalMeasure(c), EmpiricalMeasure(c)),
      std::invalid_argument);
}

TEST_CASE("weighted sorted W1 agrees with replicated uniform samples") {
  // weights 1/4, 3/4 == the uniform sample with the atom repeated
  Eigen::MatrixXd a(2, 1), au(4, 1), b(4, 1);
  a << -1.0, 2.0;
  Eigen::VectorXd w(2);
  w << 0.25, 0.75;
  au << -1.0, 2.0, 2.0, 2.0;
  b << 0.0, 0.5, 1.0, 1.5;
  const double weighted =
      w1_sorted_1d(EmpiricalMeasure(a, w), EmpiricalMeasure(b)).value;
  const double uniform =
      w1_sorted_1d(EmpiricalMeasure(au), EmpiricalMeasure(b)).value;
  CHECK(weighted == doctest::Approx(uniform).epsilon(1e-12));
}

TEST_CASE("sorted equals assignment in d=1 on random instances") {
  RngStream rng(101);
  for (int rep = 0; rep < 100; ++rep) {
    const auto a = random_measure(50, 1, rng);
    const auto b = random_measure(50, 1, rng, 1.5);
    const double s = w1_sorted_1d(a, b).value;
    const double j = w1_assignment(a, b).value;
    CHECK(s == doctest::Approx(j).epsilon(1e-10));
  }
}

TEST_CASE("assignment equals brute force permutation search (n=6, d=2)") {
  RngStream rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const auto a = random_measure(6, 2, rng);
    const auto b = random_measure(6, 2, rng);
    const auto r = w1_assignment_certified(a, b);
    CHECK(r.result.value == doctest::Approx(brute_force_w1(a, b)).epsilon(1e-10));
    CHECK(r.duality_gap < 1e-8);
  }
}

TEST_CASE("spec example: two-point vertical matching") {
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 0, 0, 1, 0;
  b << 0, 1, 1, 1;
  CHECK(w1_assignment(EmpiricalMeasure(a), EmpiricalMeasure(b)).value ==
        doctest::Approx(1.0));
}

TEST_CASE("metric axioms on random triples") {
  RngStream rng(55);
  for (int rep = 0; rep < 10; ++rep) {
    const auto a = random_measure(24, 2, rng);
    const auto b = random_measure(24, 2, rng);
    const auto c = random_measure(24, 2, rng, 2.0);
    const double ab = w1_assignment(a, b).value;
    const double ba = w1_assignment(b, a).value;
    const double ac = w1_assignment(a, c).value;
    const double cb = w1_assignment(c, b).value;
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(ab <= ac + cb + 1e-10);
    CHECK(w1_assignment(a, a).value == doctest::Approx(0.0));
  }
}

TEST_CASE("translation equivariance of exact methods") {
  RngStream rng(77);
  const auto a = random_measure(64, 3, rng);
  Eigen::MatrixXd shifted = a.points;
  Eigen::RowVector3d v(0.4, -0.2, 1.0);
  shifted.rowwise() += v;
  const double w = w1_assignment(EmpiricalMeasure(a.points),
                                 EmpiricalMeasure(shifted)).value;
  CHECK(w == doctest::Approx(v.norm()).epsilon(1e-10));
}

TEST_CASE("weighted transport matches assignment on uniform weights") {
  RngStream rng(13);
  const int n = 20;
  const auto a = random_measure(n, 2, rng);
  const auto b = random_measure(n, 2, rng);
  // same points, explicitly uniform weights: forces the transport route
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / n);
  const double assignment = w1_assignment(a, b).value;
  const double transport =
      w1_assignment(EmpiricalMeasure(a.points, w), EmpiricalMeasure(b.points, w))
          .value;
  CHECK(transport == doctest::Approx(assignment).epsilon(1e-9));
}

TEST_CASE("weighted transport handles unequal sizes exactly (1-d oracle)") {
  RngStream rng(29);
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::MatrixXd ap(7, 1), bp(13, 1);
    for (int i = 0; i < 7; ++i) ap(i, 0) = rng.normal();
    for (int i = 0; i < 13; ++i) bp(i, 0) = rng.normal() + 0.5;
    Eigen::VectorXd wa = Eigen::VectorXd::Zero(7), wb = Eigen::VectorXd::Zero(13);
    double sa = 0, sb = 0;
    for (int i = 0; i < 7; ++i) sa += (wa[i] = rng.uniform());
    for (int i = 0; i < 13; ++i) sb += (wb[i] = rng.uniform());
    wa /= sa;
    wb /= sb;
    EmpiricalMeasure a(ap, wa), b(bp, wb);
    const double transport = w1_assignment(a, b).value;
    const double quantile = w1_sorted_1d(a, b).value;
    CHECK(transport == doctest::Approx(quantile).epsilon(1e-9));
  }
}

TEST_CASE("size caps route the caller to other estimators") {
  RngStream rng(91);
  const auto a = random_measure(12, 2, rng);
  const auto b = random_measure(12, 2, rng);
  AssignmentOptions opts;
  opts.max_assignment_n = 8;
  CHECK_THROWS_AS(w1_assignment(a, b, opts), std::length_error);
}

TEST_CASE("cdf-integral oracle: trivial and translation cases") {
  const auto g1 = make_gaussian_law(1.0);
  CHECK(w1_cdf_integral(g1, g1, 10.0, 1e-8).value == doctest::Approx(0.0));

  // N(0,1) vs N(m,1): W1 = |m|; shift handled through an asymmetric wrapper
  const double m = 0.75;
  Law1D shifted;
  shifted.symmetric = false;
  shifted.cdf = [m](double x) { return normal_cdf(x - m); };
  shifted.upper_tail_integral = [m](double T) {
    const double u = T - m;
    const double pdf = std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI);
    return pdf - u * (1.0 - normal_cdf(u));
  };
  Law1D base = make_gaussian_law(1.0);
  base.symmetric = false;
  const auto w = w1_cdf_integral(base, shifted, 12.0, 1e-7);
  CHECK(w.value == doctest::Approx(m).epsilon(1e-5));
}

TEST_CASE("stable law cdf sanity and tail") {
  const auto law = make_stable_law(1.5, 1.0);
  CHECK(law.cdf(0.0) == doctest::Approx(0.5));
  CHECK(law.cdf(-3.0) == doctest::Approx(1.0 - law.cdf(3.0)).epsilon(1e-9));
  CHECK(law.cdf(50.0) > 0.99);
  // frozen 30-digit quadrature values either side of the series switch
  CHECK(law.cdf(7.999) == doctest::Approx(0.990524008476).epsilon(2e-7));
  CHECK(law.cdf(8.001) == doctest::Approx(0.990527821472).epsilon(2e-7));
  // tail integral decreases and is positive
  CHECK(law.upper_tail_integral(10.0) > law.upper_tail_integral(20.0));
  CHECK(law.upper_tail_integral(20.0) > 0.0);
}

TEST_CASE("stable-vs-gaussian oracle agrees with large-sample Monte Carlo") {
  // cross-validation of the CDF-integral route against the sampling route
  const double alpha = 1.9;
  const double scale = std::pow(2.0 * alpha, -1.0 / alpha);
  const auto w = w1_cdf_integral(make_stable_law(alpha, scale),
                                 make_gaussian_law(std::sqrt(0.5)), 12.0, 1e-6);

  const int n = 1000000;
  RngStream rng(2024, 3);
  std::vector<double> xs(n), ys(n);
  const double beta = alpha / 2.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(0.0, M_PI);
    const double e = rng.exponential();
    const double la = beta / (1.0 - beta) * std::log(std::sin(beta * u)) +
                      std::log(std::sin((1.0 - beta) * u)) -
                      1.0 / (1.0 - beta) * std::log(std::sin(u));
    const double a = std::exp((1.0 - beta) / beta * (la - std::log(e)));
    xs[i] = std::sqrt(a) * rng.normal() * scale * std::sqrt(2.0);
    ys[i] = rng.normal() * std::sqrt(0.5);
  }
  const double mc = w1_sorted_raw(xs, ys);
  // n = 1e6 sampling noise is a few 1e-4 at these tails
  CHECK(std::abs(mc - w.value) < 2e-3);
}

TEST_CASE("sliced_w1 on point masses matches the |cos| average in d=2") {
  Eigen::MatrixXd a(1, 2), b(1, 2);
  a << 0.0, 0.0;
  b << 2.0, 0.0;
  RngStream rng(41);
  const auto w = sliced_w1(EmpiricalMeasure(a), EmpiricalMeasure(b), 4000, rng);
  CHECK(w.value ==
        doctest::Approx(2.0 * 2.0 / M_PI).epsilon(0.05));  // (2/pi)|u-v|
  CHECK(sliced_w1(EmpiricalMeasure(a), EmpiricalMeasure(a), 16, rng).value ==
        doctest::Approx(0.0));
}

TEST_CASE("sliced_w1 self-consistency under direction-count doubling") {
  RngStream rng(43);
  const auto a = random_measure(2000, 3, rng);
  const auto b = random_measure(2000, 3, rng, 1.3);
  RngStream r1(1, 0), r2(2, 0);
  const auto w32 = sliced_w1(a, b, 32, r1);
  const auto w128 = sliced_w1(a, b, 128, r2);
  CHECK(std::abs(w32.value - w128.value) <
        4.0 * (w32.stderr_.value() + w128.stderr_.value()));
}

TEST_CASE("bootstrap_ci brackets a known translation distance") {
  RngStream rng(59);
  const int n = 4000;
  Eigen::MatrixXd ap(n, 1), bp(n, 1);
  for (int i = 0; i < n; ++i) {
    ap(i, 0) = rng.normal();
    bp(i, 0) = rng.normal() + 1.0;
  }
  auto est = [](const EmpiricalMeasure& x, const EmpiricalMeasure& y) {
    return w1_sorted_1d(x, y).value;
  };
  RngStream boot(60);
  const auto ci =
      bootstrap_ci(est, EmpiricalMeasure(ap), EmpiricalMeasure(bp), 200, boot);
  CHECK(ci.lo < 1.0);
  CHECK(ci.hi > 0.9);  // generous: W1 here is approximately 1
  CHECK(ci.hi - ci.lo < 0.3);

  // zero-distance inputs give a degenerate CI at 0
  RngStream boot2(61);
  const auto ci0 =
      bootstrap_ci(est, EmpiricalMeasure(ap), EmpiricalMeasure(ap), 120, boot2);
  CHECK(ci0.lo == doctest::Approx(0.0));
  CHECK(ci0.hi == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("bootstrap width shrinks like n^{-1/2}") {
  RngStream rng(71);
  std::vector<double> widths;
  std::vector<double> sizes = {1000, 4000, 16000};
  for (double szd : sizes) {
    const int sz = static_cast<int>(szd);
    Eigen::MatrixXd ap(sz, 1), bp(sz, 1);
    for (int i = 0; i < sz; ++i) {
      ap(i, 0) = rng.normal();
      bp(i, 0) = rng.normal() + 1.0;
    }
    auto est = [](const EmpiricalMeasure& x, const EmpiricalMeasure& y) {
      return w1_sorted_1d(x, y).value;
    };
    RngStream boot(72);
    widths.push_back(bootstrap_ci(est, EmpiricalMeasure(ap),
                                  EmpiricalMeasure(bp), 120, boot)
                         .stderr_);
  }
  const auto fit = fit_loglog(sizes, widths);
  CHECK(fit.slope == doctest::Approx(-0.5).epsilon(0.4));
}
