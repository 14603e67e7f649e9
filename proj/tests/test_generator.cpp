#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "stablesde/generator.hpp"
#include "stablesde/model.hpp"
#include "stablesde/stats.hpp"

using namespace stablesde;

namespace {

Eigen::VectorXd unit(int d, int k = 0) { return Eigen::VectorXd::Unit(d, k); }

}  // namespace

TEST_CASE("levy_constant against frozen high-precision values") {
  // c_{1,1} = (1/2)/pi
  CHECK(levy_constant(1, 1.0) == doctest::Approx(0.5 / M_PI).epsilon(1e-13));
  // frozen 40-digit evaluation of the closed form
  CHECK(levy_constant(3, 1.5) == doctest::Approx(0.05952528368835091).epsilon(1e-13));
  // decreasing to zero along alpha -> 2
  double prev = levy_constant(1, 1.9);
  for (double a : {1.99, 1.999}) {
    const double c = levy_constant(1, a);
    CHECK(c < prev);
    prev = c;
  }
  CHECK(prev < 1e-3);
  CHECK_THROWS_AS(levy_constant(1, 2.0), std::domain_error);
  CHECK_THROWS_AS(levy_constant(1, 0.0), std::domain_error);
}

TEST_CASE("normalization ratio tends to 1 and obeys the (2-a)log(1+d) bound") {
  CHECK(std::abs(normalization_ratio(1, 1.999) - 1.0) < 0.01);
  // single constant across the grid (measured max is about 1.33)
  double worst = 0.0;
  for (int d : {1, 2, 3, 5, 10, 20, 50})
    for (double a : {1.5, 1.7, 1.9, 1.99})
      worst = std::max(worst, std::abs(normalization_ratio(d, a) - 1.0) /
                                  ((2.0 - a) * std::log1p(d)));
  CHECK(worst < 2.0);
  // d-growth at fixed alpha stays logarithmic
  const double base = std::abs(normalization_ratio(1, 1.9) - 1.0) / std::log(2.0);
  for (int d = 2; d <= 50; ++d)
    CHECK(std::abs(normalization_ratio(d, 1.9) - 1.0) <=
          2.0 * base * std::log1p(d));
}

TEST_CASE("fractional generator annihilates affine functions") {
  for (int d : {1, 2}) {
    const TestFunction f = make_linear(Eigen::VectorXd::Constant(d, 0.7));
    QuadratureConfig quad;
    const auto ev = fractional_generator_apply(
        f, Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d), 1.5, quad);
    CHECK(std::abs(ev.value) < 1e-12);
  }
}

TEST_CASE("Fourier identity: 2 L^a_I cos = -|xi|^a cos") {
  QuadratureConfig quad;
  for (int d : {1, 2, 3}) {
    for (double alpha : {1.3, 1.7}) {
      for (double xi_norm : {1.0, 2.0}) {
        const Eigen::VectorXd xi = xi_norm * unit(d);
        const TestFunction f = make_cos_wave(xi);
        const Eigen::VectorXd x = 0.3 * unit(d, d - 1);
        const auto ev = fractional_generator_apply(
            f, x, Eigen::MatrixXd::Identity(d, d), alpha, quad);
        const double exact =
            -0.5 * std::pow(xi_norm, alpha) * std::cos(xi.dot(x));
        INFO("d ", d, " alpha ", alpha, " |xi| ", xi_norm, " got ", ev.value,
             " want ", exact, " err_est ", ev.quad_error);
        CHECK(std::abs(ev.value - exact) < 1e-4);
        CHECK(std::abs(ev.value - exact) < std::max(ev.quad_error, 1e-6) * 3.0);
      }
    }
  }
}

TEST_CASE("quadrature self-consistency under node doubling") {
  const TestFunction f = make_cos_wave(unit(2) * 1.5);
  QuadratureConfig quad;
  QuadratureConfig fine = quad;
  fine.radial_nodes *= 2;
  fine.sphere_nodes *= 2;
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  const auto a =
      fractional_generator_apply(f, x, Eigen::MatrixXd::Identity(2, 2), 1.5, quad);
  const auto b =
      fractional_generator_apply(f, x, Eigen::MatrixXd::Identity(2, 2), 1.5, fine);
  CHECK(std::abs(a.value - b.value) <= a.quad_error + 1e-12);
}

TEST_CASE("unbounded tail is reported for quadratically growing f") {
  TestFunction f;
  f.value = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
  QuadratureConfig quad;
  CHECK_THROWS_AS(
      fractional_generator_apply(f, Eigen::VectorXd::Zero(1),
                                 Eigen::MatrixXd::Identity(1, 1), 1.5, quad),
      std::domain_error);
}

TEST_CASE("full generator composes drift and noise parts") {
  const auto ou = make_ou_model(1);
  QuadratureConfig quad;
  // A^Q on f = cos at x = 0: (1/2) f'' = -1/2
  const TestFunction f = make_cos_wave(unit(1));
  const auto brom = full_generator(f, Eigen::VectorXd::Zero(1), *ou,
                                   NoiseSpec::brownian_noise(), quad);
  CHECK(brom.value == doctest::Approx(-0.5));

  // A^Q on linear f with b = -x: <-x, a>
  const TestFunction lin = make_linear(unit(1) * 2.0);
  const auto at_x = full_generator(lin, Eigen::VectorXd::Constant(1, 0.8), *ou,
                                   NoiseSpec::brownian_noise(), quad);
  CHECK(at_x.value == doctest::Approx(-2.0 * 0.8));
}

TEST_CASE("gap decomposition J1+J21+J22 reassembles the direct difference") {
  const auto ou = make_ou_model(1);
  QuadratureConfig quad;
  const TestFunction f = make_cos_wave(unit(1));
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  const double alpha = 1.5;

  const auto gap = generator_gap_stable_vs_brownian(f, x, *ou, alpha, quad);
  CHECK(gap.pieces.count("J1") == 1);
  CHECK(gap.pieces.count("J21") == 1);
  CHECK(gap.pieces.count("J22") == 1);
  CHECK(gap.value ==
        doctest::Approx(gap.pieces_sum()).epsilon(1e-10));  // piece-sum identity

  const auto full_a =
      full_generator(f, x, *ou, NoiseSpec::stable(alpha), quad);
  const auto full_q =
      full_generator(f, x, *ou, NoiseSpec::brownian_noise(), quad);
  const double direct = full_a.value - full_q.value;
  CHECK(std::abs(gap.value - direct) < 1e-6);
}

TEST_CASE("J21 vanishes with the Hessian and as alpha tends to 2") {
  const auto ou = make_ou_model(1);
  QuadratureConfig quad;
  // hessian zero at the probe: cos'' = -cos vanishes at pi/2
  const TestFunction f = make_cos_wave(unit(1));
  Eigen::VectorXd x(1);
  x << M_PI / 2.0;
  const auto gap = generator_gap_stable_vs_brownian(f, x, *ou, 1.5, quad);
  CHECK(std::abs(gap.pieces.at("J21")) < 1e-12);

  // normalization ratio -> 1 kills J21 at fixed f, x
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(1);
  const double j21_15 = std::abs(
      generator_gap_stable_vs_brownian(f, x0, *ou, 1.5, quad).pieces.at("J21"));
  const double j21_199 = std::abs(
      generator_gap_stable_vs_brownian(f, x0, *ou, 1.99, quad).pieces.at("J21"));
  CHECK(j21_199 < 0.1 * j21_15);
}

TEST_CASE("stable-vs-stable gap pieces and the wave oracle") {
  const auto ou = make_ou_model(1);
  QuadratureConfig quad;
  const Eigen::VectorXd x = Eigen::VectorXd::Zero(1);

  // alpha = vartheta: both pieces vanish
  const TestFunction f1 = make_cos_wave(unit(1));
  const auto same = generator_gap_stable_vs_stable(f1, x, *ou, 1.5, 1.5, quad);
  CHECK(same.pieces.at("JJ1") == 0.0);
  CHECK(same.pieces.at("JJ2") == 0.0);

  // linear f: zero regardless of (alpha, vartheta)
  const TestFunction lin = make_linear(unit(1));
  const auto zl = generator_gap_stable_vs_stable(lin, x, *ou, 1.4, 1.6, quad);
  CHECK(std::abs(zl.value) < 1e-10);

  // wave oracle: (A^a - A^t) cos(2x) at 0 = (2^t - 2^a)/2
  const TestFunction f2 = make_cos_wave(unit(1) * 2.0);
  const auto gap = generator_gap_stable_vs_stable(f2, x, *ou, 1.4, 1.6, quad);
  const double exact = (std::pow(2.0, 1.6) - std::pow(2.0, 1.4)) / 2.0;
  CHECK(std::abs(gap.value - exact) < 1e-4);

  // cross-check against differencing two fractional applies
  const auto la = fractional_generator_apply(
      f2, x, Eigen::MatrixXd::Identity(1, 1), 1.4, quad);
  const auto lt = fractional_generator_apply(
      f2, x, Eigen::MatrixXd::Identity(1, 1), 1.6, quad);
  CHECK(std::abs(gap.value - (la.value - lt.value)) <
        3.0 * (la.quad_error + lt.quad_error) + 1e-7);
}

TEST_CASE("generator application is linear in f") {
  const auto ou = make_ou_model(1);
  QuadratureConfig quad;
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.2);
  const TestFunction f1 = make_cos_wave(unit(1));
  const TestFunction f2 = make_cos_wave(unit(1) * 2.0);
  TestFunction combo;
  combo.value = [&](const Eigen::VectorXd& p) {
    return 2.0 * f1.value(p) - 3.0 * f2.value(p);
  };
  combo.gradient = [&](const Eigen::VectorXd& p) {
    return Eigen::VectorXd(2.0 * f1.gradient(p) - 3.0 * f2.gradient(p));
  };
  combo.hessian = [&](const Eigen::VectorXd& p) {
    return Eigen::MatrixXd(2.0 * f1.hessian(p) - 3.0 * f2.hessian(p));
  };
  combo.lip_const = 2.0 * *f1.lip_const + 3.0 * *f2.lip_const;
  combo.sup_const = 5.0;
  const auto e1 = fractional_generator_apply(
      f1, x, Eigen::MatrixXd::Identity(1, 1), 1.5, quad);
  const auto e2 = fractional_generator_apply(
      f2, x, Eigen::MatrixXd::Identity(1, 1), 1.5, quad);
  const auto ec = fractional_generator_apply(
      combo, x, Eigen::MatrixXd::Identity(1, 1), 1.5, quad);
  CHECK(std::abs(ec.value - (2.0 * e1.value - 3.0 * e2.value)) <
        ec.quad_error + 2.0 * e1.quad_error + 3.0 * e2.quad_error + 1e-9);
}

TEST_CASE("analytic derivatives agree with central differences") {
  RngStream rng(8);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd xi(2), x(2);
    xi << rng.uniform(0.5, 2.0), rng.uniform(-1.0, 1.0);
    x << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
    TestFunction f = make_cos_wave(xi);
    TestFunction fd = f;
    fd.gradient = nullptr;
    fd.hessian = nullptr;
    CHECK((f.grad_at(x) - fd.grad_at(x)).norm() <
          1e-6 * (1.0 + f.grad_at(x).norm()));
    CHECK((f.hess_at(x) - fd.hess_at(x)).norm() <
          1e-5 * (1.0 + f.hess_at(x).norm()));
  }
}

TEST_CASE("G-function identity and Lipschitz probe") {
  for (int d : {1, 2, 3}) {
    std::vector<double> grid;
    for (double x = 0.55; x < 0.996; x += 0.02) grid.push_back(x);
    const auto rep = g_function_lipschitz_probe(d, grid);
    CHECK(rep.identity_max_rel_err < 1e-10);
    CHECK(rep.max_slope_over_gamma > 0.0);
    CHECK(rep.max_slope_over_gamma < 50.0);  // single finite constant
  }
  CHECK_THROWS_AS(g_function_lipschitz_probe(1, {0.3}), std::domain_error);
}

TEST_CASE("kolmogorov residual vanishes for constants and smooth waves") {
  const auto ou = make_ou_model(1);
  QuadratureConfig quad;
  McProbeConfig mc;
  mc.n_paths = 150000;
  mc.dt = 2e-3;

  TestFunction c;
  c.value = [](const Eigen::VectorXd&) { return 3.0; };
  c.gradient = [](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(Eigen::VectorXd::Zero(x.size()));
  };
  c.hessian = [](const Eigen::VectorXd& x) {
    return Eigen::MatrixXd(Eigen::MatrixXd::Zero(x.size(), x.size()));
  };
  c.lip_const = 0.0;
  c.sup_const = 3.0;
  const auto r0 = kolmogorov_residual(*ou, c, Eigen::VectorXd::Zero(1), 0.5,
                                      NoiseSpec::brownian_noise(), mc, quad);
  CHECK(r0.time_derivative == doctest::Approx(0.0));
  CHECK(r0.generator_average == doctest::Approx(0.0));

  const TestFunction f = make_cos_wave(unit(1));
  const auto rb = kolmogorov_residual(*ou, f, Eigen::VectorXd::Constant(1, 0.3),
                                      0.5, NoiseSpec::brownian_noise(), mc, quad);
  INFO("brownian residual ", rb.residual, " stderr ", rb.stderr_);
  CHECK(std::abs(rb.studentized) < 3.0 + 2.0);  // O(h^2) FD bias allowance

  const auto rs = kolmogorov_residual(*ou, f, Eigen::VectorXd::Constant(1, 0.3),
                                      0.5, NoiseSpec::stable(1.5), mc, quad);
  INFO("stable residual ", rs.residual, " stderr ", rs.stderr_);
  CHECK(std::abs(rs.studentized) < 4.0 + 2.0);
}

TEST_CASE("semigroup gradient probe orders") {
  const auto ou = make_ou_model(1);
  McProbeConfig mc;
  mc.n_paths = 120000;
  mc.dt = 2e-3;
  TestFunction absf;
  absf.value = [](const Eigen::VectorXd& x) { return std::abs(x[0]); };
  absf.lip_const = 1.0;

  // n = 1: bounded gradient, exponent CI contains 0
  const auto p1 = semigroup_gradient_probe(*ou, absf, {0.125, 0.25, 0.5, 1.0}, 1,
                                           NoiseSpec::brownian_noise(), mc);
  if (!p1.inconclusive) {
    CHECK(p1.ci_lo <= 0.05);
    CHECK(p1.ci_hi >= -0.35);
  }

  // n = 2 Brownian: exponent near -1/2
  const auto p2 = semigroup_gradient_probe(*ou, absf, {0.125, 0.25, 0.5, 1.0}, 2,
                                           NoiseSpec::brownian_noise(), mc);
  INFO("order-2 exponent ", p2.exponent, " ci [", p2.ci_lo, ", ", p2.ci_hi, "]");
  if (!p2.inconclusive) {
    CHECK(p2.ci_lo <= -0.5);
    CHECK(p2.ci_hi >= -0.5);
  }
}
