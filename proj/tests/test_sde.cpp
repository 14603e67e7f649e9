#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "stablesde/model.hpp"
#include "stablesde/sde.hpp"
#include "stablesde/stable.hpp"
#include "stablesde/stats.hpp"
#include "stablesde/wasserstein.hpp"

using namespace stablesde;

namespace {

Eigen::VectorXd v1(double x) {
  Eigen::VectorXd v(1);
  v << x;
  return v;
}

}  // namespace

TEST_CASE("em_step basics") {
  const auto ou = make_ou_model(1);
  // deterministic Euler: x=2, dt=0.5, no noise -> 1
  CHECK(em_step(v1(2.0), *ou, 0.5, v1(0.0))[0] == doctest::Approx(1.0));

  // b = 0, sigma = I: increment passes through
  LambdaModel idm(
      2, "id", [](const Eigen::VectorXd& x) { return Eigen::VectorXd(0.0 * x); },
      [](const Eigen::VectorXd& x) {
        return Eigen::MatrixXd(Eigen::MatrixXd::Identity(x.size(), x.size()));
      },
      ParamTuple{1, 0, 1, 1});
  Eigen::VectorXd w(2);
  w << 0.3, -0.7;
  CHECK((em_step(Eigen::VectorXd::Zero(2), idm, 0.1, w) - w).norm() == 0.0);

  CHECK_THROWS_AS(
      em_step(v1(1e308), *ou, 1e10, v1(1e308)), std::runtime_error);
}

TEST_CASE("sigma evaluated at the pre-jump state") {
  // sigma(x) = 1 + |x| in d=1; a forced jump J from state x must produce
  // x + b dt + (1+|x|) J, not the post-jump coefficient
  LambdaModel m(
      1, "prejump",
      [](const Eigen::VectorXd& x) { return Eigen::VectorXd(-x); },
      [](const Eigen::VectorXd& x) {
        Eigen::MatrixXd s(1, 1);
        s << 1.0 + std::abs(x[0]);
        return s;
      },
      ParamTuple{1, 0, 4, 1});
  const double x = 2.0, dt = 0.01, jump = 5.0;
  const double out = em_step(v1(x), m, dt, v1(jump))[0];
  CHECK(out == doctest::Approx(x - x * dt + (1.0 + x) * jump));
}

TEST_CASE("deterministic limit of the EM scheme (no noise)") {
  // one path, zero increments: terminal -> e^{-1} with O(dt) error
  const auto ou = make_ou_model(1);
  std::vector<double> dts = {0.1, 0.05, 0.025, 0.0125};
  std::vector<double> errs;
  for (double dt : dts) {
    Eigen::VectorXd x = v1(1.0);
    const auto steps = static_cast<int>(std::llround(1.0 / dt));
    for (int k = 0; k < steps; ++k) x = em_step(x, *ou, dt, v1(0.0));
    errs.push_back(std::abs(x[0] - std::exp(-1.0)));
  }
  const auto fit = fit_loglog(dts, errs);
  CHECK(fit.slope > 0.7);
  CHECK(fit.slope < 1.3);
}

TEST_CASE("Brownian OU ensemble matches the stationary law") {
  const auto ou = make_ou_model(1);
  IntegratorConfig cfg;
  cfg.dt = 5e-3;
  cfg.t_end = 12.0;
  cfg.burn_in = 6.0;
  cfg.n_paths = 60000;
  cfg.noise = NoiseSpec::brownian_noise();
  ErgodicityDiagnostic diag;
  const auto mu = estimate_invariant_measure(*ou, cfg, 77, &diag);
  CHECK(diag.converged);
  std::vector<double> sq(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    sq[i] = mu.points(i, 0) * mu.points(i, 0);
  const auto ms = mean_stderr(sq);
  // stationary variance 1/2 up to O(dt) discretization bias
  CHECK(std::abs(ms.mean - 0.5) < 3.0 * ms.stderr_ + 0.5 * cfg.dt);
}

TEST_CASE("stable OU ensemble CF matches the stochastic-convolution law") {
  const double alpha = 1.5;
  const auto ou = make_ou_model(1);
  IntegratorConfig cfg;
  cfg.dt = 5e-3;
  cfg.t_end = 12.0;
  cfg.burn_in = 6.0;
  cfg.n_paths = 60000;
  cfg.noise = NoiseSpec::stable(alpha);
  const auto mu = estimate_invariant_measure(*ou, cfg, 78);
  for (double z : {0.7, 1.5}) {
    std::vector<double> xs(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i) xs[i] = mu.points(i, 0);
    const auto cf = empirical_char_function(xs, z);
    const double exact = std::exp(-std::pow(z, alpha) / (2.0 * alpha));
    CHECK(std::abs(cf.value.real() - exact) <
          3.0 * cf.stderr_re + 2.0 * cfg.dt);
  }
}

TEST_CASE("finite-time OU stable CF matches exp(-|z|^a (1-e^{-a t})/(2a))") {
  const double alpha = 1.5, t = 5.0, z = 1.0;
  const auto ou = make_ou_model(1);
  IntegratorConfig cfg;
  cfg.dt = 2e-3;
  cfg.t_end = t;
  cfg.n_paths = 50000;
  cfg.noise = NoiseSpec::stable(alpha);
  const auto ens = simulate_ensemble(*ou, cfg, 5150);
  std::vector<double> xs(ens.points.rows());
  for (Eigen::Index i = 0; i < ens.points.rows(); ++i) xs[i] = ens.points(i, 0);
  const auto cf = empirical_char_function(xs, z);
  const double exact =
      std::exp(-std::pow(z, alpha) * (1.0 - std::exp(-alpha * t)) /
               (2.0 * alpha));
  CHECK(std::abs(cf.value.real() - exact) < 3.0 * cf.stderr_re + 2.0 * cfg.dt);
}

TEST_CASE("Euler consistency: first-order terminal moments for Brownian OU") {
  const auto ou = make_ou_model(1);
  const double t = 1.0;
  std::vector<double> dts = {0.1, 0.05, 0.025, 0.0125};
  std::vector<double> var_err;
  for (double dt : dts) {
    // exact AR(1) second moment of the Euler chain vs the SDE value;
    // Monte Carlo would need ~1e9 paths to see these gaps, so aggregate the
    // chain recursion exactly over many paths via the closed form
    const double a = 1.0 - dt;
    const auto steps = static_cast<int>(std::llround(t / dt));
    double var = 0.0;
    for (int k = 0; k < steps; ++k) var = a * a * var + dt;
    const double exact_mean = std::exp(-t), exact_var = (1.0 - std::exp(-2 * t)) / 2;
    const double chain_mean = std::pow(a, steps);
    var_err.push_back(std::abs(var - exact_var) + std::abs(chain_mean - exact_mean));
  }
  const auto fit = fit_loglog(dts, var_err);
  CHECK(fit.slope > 0.7);
  CHECK(fit.slope < 1.3);
  (void)ou;
}

TEST_CASE("exchangeability: permuting stream ids permutes rows") {
  const auto ou = make_ou_model(2);
  IntegratorConfig cfg;
  cfg.dt = 0.05;
  cfg.t_end = 1.0;
  cfg.n_paths = 16;
  cfg.noise = NoiseSpec::stable(1.6);
  const std::vector<std::uint64_t> ids = {0, 1, 2,  3,  4,  5,  6,  7,
                                          8, 9, 10, 11, 12, 13, 14, 15};
  std::vector<std::uint64_t> perm = {5, 3, 15, 0, 9, 1, 14, 2,
                                     7, 6, 13, 4, 8, 12, 11, 10};
  const auto base = simulate_ensemble(*ou, cfg, 99, nullptr, &ids);
  const auto shuf = simulate_ensemble(*ou, cfg, 99, nullptr, &perm);
  for (int p = 0; p < 16; ++p)
    CHECK((shuf.points.row(p) - base.points.row(perm[p])).norm() == 0.0);

  // aggregate statistics agree after sorting rows
  std::vector<double> a, b;
  for (int p = 0; p < 16; ++p)
    for (int j = 0; j < 2; ++j) {
      a.push_back(base.points(p, j));
      b.push_back(shuf.points(p, j));
    }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("serial and parallel runs agree bit for bit") {
  const auto ou = make_ou_model(1);
  IntegratorConfig cfg;
  cfg.dt = 0.01;
  cfg.t_end = 2.0;
  cfg.n_paths = 500;
  cfg.noise = NoiseSpec::stable(1.5);
  cfg.threads = 1;
  const auto serial = simulate_ensemble(*ou, cfg, 4242);
  cfg.threads = 2;
  const auto parallel = simulate_ensemble(*ou, cfg, 4242);
  CHECK((serial.points - parallel.points).norm() == 0.0);
}

TEST_CASE("driftless model is flagged as non-convergent") {
  LambdaModel free_model(
      1, "free",
      [](const Eigen::VectorXd& x) { return Eigen::VectorXd(0.0 * x); },
      [](const Eigen::VectorXd&) {
        return Eigen::MatrixXd(Eigen::MatrixXd::Identity(1, 1));
      },
      ParamTuple{1, 0, 1, 1});
  IntegratorConfig cfg;
  cfg.dt = 0.01;
  cfg.t_end = 8.0;
  cfg.burn_in = 4.0;
  cfg.n_paths = 4000;
  cfg.noise = NoiseSpec::stable(1.5);
  ErgodicityDiagnostic diag;
  estimate_invariant_measure(free_model, cfg, 5, &diag);
  CHECK_FALSE(diag.converged);
  CHECK(diag.time_drift_w1 > diag.time_drift_threshold);
}

TEST_CASE("overflow aborts the run with a report") {
  // exploding drift: b(x) = +x^3 with stable jumps blows past the cap
  LambdaModel boom(
      1, "boom",
      [](const Eigen::VectorXd& x) {
        return Eigen::VectorXd(x.array().pow(3).matrix());
      },
      [](const Eigen::VectorXd&) {
        return Eigen::MatrixXd(Eigen::MatrixXd::Identity(1, 1));
      },
      ParamTuple{1, 0, 1, 1});
  IntegratorConfig cfg;
  cfg.dt = 0.1;
  cfg.t_end = 40.0;
  cfg.n_paths = 64;
  cfg.noise = NoiseSpec::stable(1.3);
  cfg.overflow_cap = 1e6;
  RunReport rep;
  CHECK_THROWS_AS(simulate_ensemble(boom, cfg, 2, &rep), std::runtime_error);
  CHECK(rep.overflows.size() > 0);
  CHECK_FALSE(rep.valid);
  CHECK(rep.overflows[0].state_norm >= 0.0);
  CHECK(rep.overflows[0].time > 0.0);
}

TEST_CASE("dissipativity checker on the OU model (DC')") {
  const auto ou = make_ou_model(1);
  const auto rep = check_dissipativity(*ou, DissipativityKind::dc_prime, {});
  CHECK(rep.violations.empty());
  CHECK(rep.fitted_c0 == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rep.fitted_c1 == doctest::Approx(0.0));
}

TEST_CASE("dissipativity fit vs dense-grid oracle for b = -x + sin(x)") {
  LambdaModel m(
      1, "sin",
      [](const Eigen::VectorXd& x) {
        return Eigen::VectorXd((-x.array() + x.array().sin()).matrix());
      },
      [](const Eigen::VectorXd&) {
        return Eigen::MatrixXd(Eigen::MatrixXd::Identity(1, 1));
      },
      ParamTuple{0.5, 2.0, 1, 2});
  ProbeSpec probes;
  probes.n_probes = 8000;
  const auto rep = check_dissipativity(m, DissipativityKind::dc_prime, {}, probes);
  CHECK(rep.fitted_c0 > 0.0);
  CHECK(std::isfinite(rep.fitted_c1));

  // dense-grid oracle: c1 needed at the declared c0 over [-10,10]^2
  double c1_oracle = 0.0;
  for (double x = -10.0; x <= 10.0; x += 0.02)
    for (double y = x + 0.02; y <= 10.0; y += 0.02) {
      const double lhs = (x - y) * ((-x + std::sin(x)) - (-y + std::sin(y)));
      c1_oracle = std::max(c1_oracle, lhs + 0.5 * (x - y) * (x - y));
    }
  CHECK(rep.fitted_c1 <= c1_oracle + 1e-9);       // probes subsample the grid
  CHECK(rep.fitted_c1 > 0.5 * c1_oracle);          // but should land close
}

TEST_CASE("DC with constant sigma doubles the DC' fit") {
  LambdaModel m(
      2, "const-sigma",
      [](const Eigen::VectorXd& x) { return Eigen::VectorXd(-x); },
      [](const Eigen::VectorXd&) {
        Eigen::MatrixXd s(2, 2);
        s << 2.0, 0.3, 0.0, 1.5;
        return s;
      },
      ParamTuple{1, 0, 8, 1});
  const auto dcp = check_dissipativity(m, DissipativityKind::dc_prime, {});
  const auto dc = check_dissipativity(m, DissipativityKind::dc, 0.5);
  CHECK(dc.fitted_c0 == doctest::Approx(2.0 * dcp.fitted_c0).epsilon(1e-6));
  CHECK(dc.violations.empty());
  CHECK_FALSE(dc.sqrt_failed);

  // sigma0 too large: sqrt failure reported with the probe
  const auto bad = check_dissipativity(m, DissipativityKind::dc, 10.0);
  CHECK(bad.sqrt_failed);
  CHECK(bad.sqrt_failure_probe.size() == 2);
}

TEST_CASE("noise-split identity sigma0^2 I + st st^* = sigma sigma^*") {
  const auto m = make_multiplicative_model(2);
  RngStream rng(3);
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd x(2);
    x << rng.uniform(-5, 5), rng.uniform(-5, 5);
    const double s0 = 0.4;
    const Eigen::MatrixXd st = sigma_tilde(*m, x, s0);
    const Eigen::MatrixXd lhs =
        s0 * s0 * Eigen::MatrixXd::Identity(2, 2) + st * st.transpose();
    const Eigen::MatrixXd rhs =
        m->diffusion(x) * m->diffusion(x).transpose();
    CHECK((lhs - rhs).norm() < 1e-10);
  }
}

TEST_CASE("assumption A checker") {
  const auto ou = make_ou_model(2);
  auto rep = check_assumption_A(*ou);
  CHECK(rep.ellipticity_min == doctest::Approx(1.0));
  CHECK(rep.ellipticity_max == doctest::Approx(1.0));
  CHECK(rep.derivative_bound[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rep.derivative_bound[1] < 1e-4);
  CHECK(rep.derivative_bound[2] < 1e-4);
  CHECK(rep.a1_ok);
  CHECK(rep.a2_ok);

  // sigma = diag(2 + sin(x1)) in d=1: ellipticity window [1, 9]
  LambdaModel m(
      1, "sine-sigma",
      [](const Eigen::VectorXd& x) { return Eigen::VectorXd(-x); },
      [](const Eigen::VectorXd& x) {
        Eigen::MatrixXd s(1, 1);
        s << 2.0 + std::sin(x[0]);
        return s;
      },
      ParamTuple{1, 0, 9, 3});
  ProbeSpec probes;
  probes.n_probes = 20000;
  auto rep2 = check_assumption_A(m, probes);
  CHECK(rep2.ellipticity_min == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(rep2.ellipticity_max == doctest::Approx(9.0).epsilon(1e-3));
  CHECK(rep2.a1_ok);
}

TEST_CASE("multiplicative model satisfies its declared constants") {
  const auto m = make_multiplicative_model(2);
  auto a = check_assumption_A(*m);
  CHECK(a.a1_ok);
  CHECK(a.a2_ok);
  auto dcp = check_dissipativity(*m, DissipativityKind::dc_prime, {});
  CHECK(dcp.violations.empty());
  auto dc = check_dissipativity(*m, DissipativityKind::dc, 0.5);
  CHECK_FALSE(dc.sqrt_failed);
  CHECK(dc.violations.empty());
}

TEST_CASE("ensemble persistence: binary round trip and CSV mirror") {
  const auto ou = make_ou_model(3);
  IntegratorConfig cfg;
  cfg.dt = 0.05;
  cfg.t_end = 0.5;
  cfg.n_paths = 40;
  cfg.noise = NoiseSpec::stable(1.7);
  const auto ens = simulate_ensemble(*ou, cfg, 31337);

  const auto dir = std::filesystem::temp_directory_path();
  const auto bin = (dir / "stablesde_test_ens.bin").string();
  const auto csv = (dir / "stablesde_test_ens.csv").string();
  save_ensemble(bin, ens);
  const auto back = load_ensemble(bin);
  CHECK(back.time == ens.time);
  CHECK(back.seed == ens.seed);
  CHECK((back.points - ens.points).norm() == 0.0);

  export_ensemble_csv(csv, ens);
  std::ifstream f(csv);
  std::string header;
  std::getline(f, header);
  CHECK(header.substr(0, 8) == "x0,x1,x2");
  int rows = 0;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 40);
  std::filesystem::remove(bin);
  std::filesystem::remove(csv);
}

TEST_CASE("warm start reuses a previous ensemble") {
  const auto ou = make_ou_model(1);
  IntegratorConfig cfg;
  cfg.dt = 0.01;
  cfg.t_end = 1.0;
  cfg.n_paths = 100;
  cfg.noise = NoiseSpec::brownian_noise();
  const auto first = simulate_ensemble(*ou, cfg, 1);
  IntegratorConfig cfg2 = cfg;
  cfg2.warm_start = first.points;
  const auto second = simulate_ensemble(*ou, cfg2, 2);
  CHECK(second.points.rows() == 100);
  CHECK(second.points.allFinite());
}
