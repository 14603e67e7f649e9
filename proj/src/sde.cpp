#include "stablesde/sde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <stdexcept>

#include "stablesde/parallel.hpp"
#include "stablesde/stats.hpp"

namespace stablesde {

void IntegratorConfig::validate(int dim) const {
  if (!(dt > 0.0)) throw std::domain_error("IntegratorConfig: dt > 0");
  if (!(t_end > 0.0)) throw std::domain_error("IntegratorConfig: t_end > 0");
  if (burn_in < 0.0 || burn_in > t_end)
    throw std::domain_error("IntegratorConfig: 0 <= burn_in <= t_end");
  if (n_paths < 1) throw std::domain_error("IntegratorConfig: n_paths >= 1");
  if (!noise.brownian && !(noise.alpha > 1.0 && noise.alpha <= 2.0))
    throw std::domain_error("IntegratorConfig: stable noise needs alpha in (1,2]");
  if (x0.size() != 0 && x0.size() != dim)
    throw std::domain_error("IntegratorConfig: x0 dimension mismatch");
  if (warm_start.size() != 0 &&
      (warm_start.rows() != n_paths || warm_start.cols() != dim))
    throw std::domain_error("IntegratorConfig: warm_start shape mismatch");
}

Eigen::VectorXd em_step(const Eigen::VectorXd& state, const Model& model,
                        double dt, const Eigen::VectorXd& increment) {
  const int d = model.dim();
  if (state.size() != d || increment.size() != d)
    throw std::invalid_argument("em_step: dimension mismatch");
  Eigen::VectorXd b(d), s(d);
  model.drift(state.data(), b.data());
  model.diffusion_apply(state.data(), increment.data(), s.data());
  Eigen::VectorXd out = state + dt * b + s;
  if (!out.allFinite())
    throw std::runtime_error("em_step: non-finite state (heavy-tail overflow)");
  return out;
}

namespace {

struct StepPlan {
  std::int64_t n_steps = 0;
  double dt = 0.0;
};

StepPlan plan_steps(const IntegratorConfig& c) {
  StepPlan p;
  p.dt = c.dt;
  p.n_steps = static_cast<std::int64_t>(std::llround(c.t_end / c.dt));
  if (std::abs(p.n_steps * c.dt - c.t_end) > 1e-9 * std::max(1.0, c.t_end))
    throw std::domain_error("IntegratorConfig: dt must divide t_end");
  return p;
}

}  // namespace

std::vector<Ensemble> simulate_snapshots(const Model& model,
                                         const IntegratorConfig& config,
                                         std::uint64_t seed,
                                         std::vector<double> times,
                                         RunReport* report,
                                         const std::vector<std::uint64_t>* stream_ids) {
  const int d = model.dim();
  if (stream_ids &&
      static_cast<std::int64_t>(stream_ids->size()) != config.n_paths)
    throw std::invalid_argument("simulate_snapshots: stream_ids size mismatch");
  config.validate(d);
  const auto plan = plan_steps(config);
  std::sort(times.begin(), times.end());
  std::vector<std::int64_t> snap_steps;
  snap_steps.reserve(times.size());
  for (double t : times) {
    const auto k = static_cast<std::int64_t>(std::llround(t / config.dt));
    if (std::abs(k * config.dt - t) > 1e-9 * std::max(1.0, config.t_end) ||
        k < 0 || k > plan.n_steps)
      throw std::domain_error("simulate_snapshots: time off the dt grid");
    snap_steps.push_back(k);
  }

  std::vector<Ensemble> out(times.size());
  for (std::size_t s = 0; s < times.size(); ++s) {
    out[s].points.resize(config.n_paths, d);
    out[s].time = times[s];
    out[s].model_id = model.id();
    out[s].seed = seed;
    out[s].config = config;
  }

  std::mutex report_mtx;
  std::vector<OverflowRecord> overflows;

  const bool stable_noise = !config.noise.brownian && config.noise.alpha < 2.0;
  const double alpha = config.noise.alpha;
  const double beta = alpha / 2.0;
  // subordinator rescale (matches the Laplace transform exponent)
  const double sub_scale =
      stable_noise ? std::pow(std::exp2((alpha - 2.0) / 2.0) * config.dt, 2.0 / alpha)
                   : 0.0;
  const double sqrt_dt = std::sqrt(config.dt);

  parallel_for(config.n_paths, config.threads, [&](std::int64_t lo, std::int64_t hi) {
    std::vector<double> x(d), b(d), w(d), sw(d);
    std::vector<OverflowRecord> local_overflow;
    for (std::int64_t p = lo; p < hi; ++p) {
      const std::uint64_t sid =
          stream_ids ? (*stream_ids)[p] : static_cast<std::uint64_t>(p);
      RngStream gauss(seed, sid, 0);
      RngStream subord(seed, sid, 1);
      if (config.warm_start.size() != 0)
        for (int i = 0; i < d; ++i) x[i] = config.warm_start(p, i);
      else if (config.x0.size() != 0)
        for (int i = 0; i < d; ++i) x[i] = config.x0[i];
      else
        std::fill(x.begin(), x.end(), 0.0);

      std::size_t snap_idx = 0;
      auto record_snaps = [&](std::int64_t step) {
        while (snap_idx < snap_steps.size() && snap_steps[snap_idx] == step) {
          for (int i = 0; i < d; ++i) out[snap_idx].points(p, i) = x[i];
          ++snap_idx;
        }
      };
      record_snaps(0);

      bool frozen = false;
      for (std::int64_t k = 0; k < plan.n_steps; ++k) {
        if (!frozen) {
          double radius;
          if (stable_noise) {
            // draw order per step: subordinator pair first, then d Gaussians
            radius = std::sqrt(sub_scale * sample_one_sided_stable(beta, subord));
          } else {
            radius = sqrt_dt;
          }
          for (int i = 0; i < d; ++i) w[i] = radius * gauss.normal();
          model.drift(x.data(), b.data());
          model.diffusion_apply(x.data(), w.data(), sw.data());
          double norm2 = 0.0;
          bool finite = true;
          for (int i = 0; i < d; ++i) {
            const double xi = x[i] + config.dt * b[i] + sw[i];
            if (!std::isfinite(xi)) finite = false;
            w[i] = xi;  // reuse as scratch for the candidate state
            norm2 += xi * xi;
          }
          if (!finite || norm2 > config.overflow_cap * config.overflow_cap) {
            local_overflow.push_back(
                {p, (k + 1) * config.dt, std::sqrt(norm2)});
            frozen = true;  // path aborted; state stays at last finite value
          } else {
            for (int i = 0; i < d; ++i) x[i] = w[i];
          }
        }
        record_snaps(k + 1);
      }
    }
    if (!local_overflow.empty()) {
      std::lock_guard<std::mutex> lk(report_mtx);
      overflows.insert(overflows.end(), local_overflow.begin(),
                       local_overflow.end());
    }
  });

  const double frac = static_cast<double>(overflows.size()) /
                      static_cast<double>(config.n_paths);
  if (report) {
    report->overflows = overflows;
    report->n_paths = config.n_paths;
    report->valid = frac <= config.max_capped_fraction;
  }
  if (frac > config.max_capped_fraction) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "simulate: %.4f%% of paths hit the overflow cap (limit %.4f%%)",
                  100.0 * frac, 100.0 * config.max_capped_fraction);
    throw std::runtime_error(buf);
  }
  return out;
}

Ensemble simulate_ensemble(const Model& model, const IntegratorConfig& config,
                           std::uint64_t seed, RunReport* report,
                           const std::vector<std::uint64_t>* stream_ids) {
  auto snaps =
      simulate_snapshots(model, config, seed, {config.t_end}, report, stream_ids);
  return std::move(snaps[0]);
}

namespace {

double same_law_null_threshold(const Eigen::MatrixXd& pts, RngStream& rng) {
  // reshuffled half-vs-half W1 as a same-law null scale; returns mean + 3 sd
  const auto n = pts.rows();
  std::vector<Eigen::Index> idx(n);
  for (Eigen::Index i = 0; i < n; ++i) idx[i] = i;
  std::vector<double> vals;
  for (int rep = 0; rep < 8; ++rep) {
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const auto j = static_cast<Eigen::Index>(rng.uniform() * (i + 1));
      std::swap(idx[i], idx[std::min(j, i)]);
    }
    const auto h = n / 2;
    if (pts.cols() == 1) {
      std::vector<double> a(h), b(h);
      for (Eigen::Index i = 0; i < h; ++i) {
        a[i] = pts(idx[i], 0);
        b[i] = pts(idx[h + i], 0);
      }
      vals.push_back(w1_sorted_raw(std::move(a), std::move(b)));
    } else {
      Eigen::MatrixXd a(h, pts.cols()), b(h, pts.cols());
      for (Eigen::Index i = 0; i < h; ++i) {
        a.row(i) = pts.row(idx[i]);
        b.row(i) = pts.row(idx[h + i]);
      }
      RngStream dir_rng(7, 7, 7);
      vals.push_back(
          sliced_w1(EmpiricalMeasure(a), EmpiricalMeasure(b), 16, dir_rng).value);
    }
  }
  const auto ms = mean_stderr(vals);
  const double sd = ms.stderr_ * std::sqrt(static_cast<double>(vals.size()));
  return ms.mean + 3.0 * sd;
}

double w1_between(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() == 1) {
    std::vector<double> xs(a.rows()), ys(b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) xs[i] = a(i, 0);
    for (Eigen::Index i = 0; i < b.rows(); ++i) ys[i] = b(i, 0);
    return w1_sorted_raw(std::move(xs), std::move(ys));
  }
  RngStream dir_rng(7, 7, 7);
  return sliced_w1(EmpiricalMeasure(a), EmpiricalMeasure(b), 16, dir_rng).value;
}

}  // namespace

EmpiricalMeasure estimate_invariant_measure(const Model& model,
                                            const IntegratorConfig& config,
                                            std::uint64_t seed,
                                            ErgodicityDiagnostic* diag) {
  const double mid = std::max(config.burn_in, 0.5 * config.t_end);
  const auto k_mid = std::llround(mid / config.dt);
  std::vector<double> times = {k_mid * config.dt, config.t_end};
  auto snaps = simulate_snapshots(model, config, seed, times, nullptr);
  const auto& terminal = snaps[1].points;

  ErgodicityDiagnostic d;
  RngStream rng(seed, 0xd1a6, 0);
  const auto h = terminal.rows() / 2;
  d.half_batch_w1 = w1_between(terminal.topRows(h), terminal.bottomRows(h));
  d.half_batch_threshold = same_law_null_threshold(terminal, rng);
  d.time_drift_w1 = w1_between(snaps[0].points, terminal);
  d.time_drift_threshold = d.half_batch_threshold;
  d.converged = d.half_batch_w1 <= d.half_batch_threshold &&
                d.time_drift_w1 <= d.time_drift_threshold;
  if (diag) *diag = d;
  return EmpiricalMeasure(terminal);
}

Eigen::MatrixXd sigma_tilde(const Model& model, const Eigen::VectorXd& x,
                            double sigma0) {
  const Eigen::MatrixXd s = model.diffusion(x);
  Eigen::MatrixXd a = s * s.transpose();
  a.diagonal().array() -= sigma0 * sigma0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.eigenvalues().minCoeff() < 1e-12)
    throw std::runtime_error(
        "sigma_tilde: sigma sigma^* - sigma0^2 I not positive definite");
  return es.operatorSqrt();
}

namespace {

double dc_lhs(const Model& model, DissipativityKind kind,
              std::optional<double> sigma0, const Eigen::VectorXd& x,
              const Eigen::VectorXd& y) {
  const Eigen::VectorXd dxy = x - y;
  const Eigen::VectorXd db = model.drift(x) - model.drift(y);
  if (kind == DissipativityKind::dc_prime) return dxy.dot(db);
  if (!sigma0)
    throw std::invalid_argument("check_dissipativity: DC requires sigma0");
  const Eigen::MatrixXd ds =
      sigma_tilde(model, x, *sigma0) - sigma_tilde(model, y, *sigma0);
  const double r2 = dxy.squaredNorm();
  const Eigen::VectorXd proj = ds.transpose() * dxy;
  return 2.0 * dxy.dot(db) + ds.squaredNorm() - proj.squaredNorm() / r2;
}

}  // namespace

DissipativityReport check_dissipativity(const Model& model,
                                        DissipativityKind kind,
                                        std::optional<double> sigma0,
                                        const ProbeSpec& probes) {
  const int d = model.dim();
  const auto& theta = model.theta();
  RngStream rng(probes.seed, 0xdc, 0);
  DissipativityReport rep;

  std::vector<double> lhs(probes.n_probes), r2(probes.n_probes);
  std::vector<Eigen::VectorXd> xs(probes.n_probes), ys(probes.n_probes);
  for (int k = 0; k < probes.n_probes; ++k) {
    Eigen::VectorXd x(d), y(d);
    do {
      for (int i = 0; i < d; ++i) {
        x[i] = rng.uniform(-probes.box_radius, probes.box_radius);
        y[i] = rng.uniform(-probes.box_radius, probes.box_radius);
      }
    } while ((x - y).squaredNorm() < 1e-16);
    try {
      lhs[k] = dc_lhs(model, kind, sigma0, x, y);
    } catch (const std::runtime_error&) {
      rep.sqrt_failed = true;
      rep.sqrt_failure_probe = x;
      return rep;
    }
    r2[k] = (x - y).squaredNorm();
    xs[k] = std::move(x);
    ys[k] = std::move(y);
  }

  // fitted c1 at the declared c0
  double c1_need = 0.0;
  for (int k = 0; k < probes.n_probes; ++k)
    c1_need = std::max(c1_need, lhs[k] + theta.c0 * r2[k]);
  rep.fitted_c1 = std::max(0.0, c1_need);

  // largest feasible c0 at the declared c1 (max(lhs + c0 r^2) grows in c0)
  const double tol = 1e-9 * std::max(1.0, theta.c1);
  auto feasible = [&](double c0) {
    double m = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < probes.n_probes; ++k)
      m = std::max(m, lhs[k] + c0 * r2[k]);
    return m <= theta.c1 + tol;
  };
  if (!feasible(0.0)) {
    rep.fitted_c0 = 0.0;
  } else {
    double lo = 0.0, hi = 1.0;
    while (feasible(hi) && hi < 1e6) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (feasible(mid) ? lo : hi) = mid;
    }
    rep.fitted_c0 = lo;
  }

  for (int k = 0; k < probes.n_probes; ++k) {
    const double bound = -theta.c0 * r2[k] + theta.c1;
    if (lhs[k] > bound + 1e-9 * std::max(1.0, std::abs(bound)))
      rep.violations.push_back({xs[k], ys[k], lhs[k], bound});
  }
  return rep;
}

AssumptionReport check_assumption_A(const Model& model,
                                    const ProbeSpec& probes) {
  const int d = model.dim();
  const auto& theta = model.theta();
  RngStream rng(probes.seed, 0xa1, 0);
  AssumptionReport rep;
  rep.ellipticity_min = std::numeric_limits<double>::infinity();
  rep.ellipticity_max = 0.0;

  auto unit = [&](Eigen::VectorXd& v) {
    double n2 = 0.0;
    do {
      for (int i = 0; i < d; ++i) v[i] = rng.normal();
      n2 = v.squaredNorm();
    } while (n2 == 0.0);
    v /= std::sqrt(n2);
  };

  Eigen::VectorXd x(d), y1(d), y2(d), y3(d);
  for (int k = 0; k < probes.n_probes; ++k) {
    for (int i = 0; i < d; ++i) x[i] = rng.uniform(-probes.box_radius, probes.box_radius);
    unit(y1);
    const Eigen::VectorXd sy = model.diffusion(x) * y1;
    const double e = sy.squaredNorm();
    rep.ellipticity_min = std::min(rep.ellipticity_min, e);
    rep.ellipticity_max = std::max(rep.ellipticity_max, e);

    unit(y2);
    unit(y3);
    // directional finite differences of b and sigma, orders 1..3
    const double h1 = 1e-5, h2 = 1e-3, h3 = 1e-2;
    auto bval = [&](const Eigen::VectorXd& p) { return model.drift(p); };
    auto sval = [&](const Eigen::VectorXd& p) { return model.diffusion(p); };

    const Eigen::VectorXd d1b = (bval(x + h1 * y1) - bval(x - h1 * y1)) / (2 * h1);
    const Eigen::MatrixXd d1s = (sval(x + h1 * y1) - sval(x - h1 * y1)) / (2 * h1);
    rep.derivative_bound[0] =
        std::max(rep.derivative_bound[0], d1b.norm() + d1s.operatorNorm());

    const Eigen::VectorXd d2b =
        (bval(x + h2 * (y1 + y2)) - bval(x + h2 * (y1 - y2)) -
         bval(x + h2 * (y2 - y1)) + bval(x - h2 * (y1 + y2))) /
        (4 * h2 * h2);
    const Eigen::MatrixXd d2s =
        (sval(x + h2 * (y1 + y2)) - sval(x + h2 * (y1 - y2)) -
         sval(x + h2 * (y2 - y1)) + sval(x - h2 * (y1 + y2))) /
        (4 * h2 * h2);
    rep.derivative_bound[1] =
        std::max(rep.derivative_bound[1], d2b.norm() + d2s.operatorNorm());

    auto third = [&](auto f) -> decltype(f(x)) {
      return ((f(x + h3 * (y1 + y2 + y3)) - f(x + h3 * (y1 + y2 - y3)) -
               f(x + h3 * (y1 - y2 + y3)) + f(x + h3 * (y1 - y2 - y3)) -
               f(x + h3 * (-y1 + y2 + y3)) + f(x + h3 * (-y1 + y2 - y3)) +
               f(x + h3 * (-y1 - y2 + y3)) - f(x - h3 * (y1 + y2 + y3))) /
              (8 * h3 * h3 * h3))
          .eval();
    };
    const Eigen::VectorXd d3b = third(bval);
    const Eigen::MatrixXd d3s = third(sval);
    rep.derivative_bound[2] =
        std::max(rep.derivative_bound[2], d3b.norm() + d3s.operatorNorm());
  }

  const double tol_a1 = 1e-9;
  rep.a1_ok = rep.ellipticity_min >= 1.0 / theta.c2 - tol_a1 &&
              rep.ellipticity_max <= theta.c2 + tol_a1;
  const double tol_a2 = 0.02 * theta.c3 + 1e-6;
  rep.a2_ok = rep.derivative_bound[0] <= theta.c3 + tol_a2 &&
              rep.derivative_bound[1] <= theta.c3 + tol_a2 &&
              rep.derivative_bound[2] <= theta.c3 + tol_a2;
  return rep;
}

// ---------------------------------------------------------------------------
// persistence
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'S', 'S', 'D', 'E', 'N', 'S', '0', '1'};
}

void save_ensemble(const std::string& path, const Ensemble& e) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_ensemble: cannot open " + path);
  f.write(kMagic, 8);
  const std::uint32_t version = 1;
  const std::uint32_t d = static_cast<std::uint32_t>(e.points.cols());
  const std::uint64_t n = static_cast<std::uint64_t>(e.points.rows());
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&d), 4);
  f.write(reinterpret_cast<const char*>(&n), 8);
  f.write(reinterpret_cast<const char*>(&e.time), 8);
  f.write(reinterpret_cast<const char*>(&e.seed), 8);
  for (Eigen::Index i = 0; i < e.points.rows(); ++i)
    for (Eigen::Index j = 0; j < e.points.cols(); ++j) {
      const double v = e.points(i, j);
      f.write(reinterpret_cast<const char*>(&v), 8);
    }
  if (!f) throw std::runtime_error("save_ensemble: write failed for " + path);
}

Ensemble load_ensemble(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_ensemble: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_ensemble: bad magic in " + path);
  std::uint32_t version = 0, d = 0;
  std::uint64_t n = 0;
  Ensemble e;
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&d), 4);
  f.read(reinterpret_cast<char*>(&n), 8);
  f.read(reinterpret_cast<char*>(&e.time), 8);
  f.read(reinterpret_cast<char*>(&e.seed), 8);
  if (version != 1) throw std::runtime_error("load_ensemble: bad version");
  e.points.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < e.points.rows(); ++i)
    for (Eigen::Index j = 0; j < e.points.cols(); ++j) {
      double v = 0.0;
      f.read(reinterpret_cast<char*>(&v), 8);
      e.points(i, j) = v;
    }
  if (!f) throw std::runtime_error("load_ensemble: truncated file " + path);
  return e;
}

void export_ensemble_csv(const std::string& path, const Ensemble& e) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("export_ensemble_csv: cannot open " + path);
  for (Eigen::Index j = 0; j < e.points.cols(); ++j)
    f << (j ? ",x" : "x") << j;
  f << "\r\n";
  char buf[32];
  for (Eigen::Index i = 0; i < e.points.rows(); ++i) {
    for (Eigen::Index j = 0; j < e.points.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", e.points(i, j));
      f << (j ? "," : "") << buf;
    }
    f << "\r\n";
  }
}

}  // namespace stablesde
