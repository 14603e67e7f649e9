#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stablesde/model.hpp"
#include "stablesde/rng.hpp"
#include "stablesde/stable.hpp"
#include "stablesde/wasserstein.hpp"

namespace stablesde {

struct NoiseSpec {
  bool brownian = false;
  double alpha = 2.0;  // used when !brownian

  static NoiseSpec stable(double a) { return {false, a}; }
  static NoiseSpec brownian_noise() { return {true, 2.0}; }
};

struct IntegratorConfig {
  double dt = 1e-2;
  double t_end = 1.0;
  double burn_in = 0.0;
  std::int64_t n_paths = 1;
  NoiseSpec noise;
  double overflow_cap = 1e12;
  // fraction of capped paths above which a run is invalid
  double max_capped_fraction = 1e-4;
  Eigen::VectorXd x0;            // empty -> point mass at 0
  Eigen::MatrixXd warm_start;    // n_paths x d, overrides x0 when nonempty
  int threads = 0;

  void validate(int dim) const;
};

struct OverflowRecord {
  std::int64_t path = 0;
  double time = 0.0;
  double state_norm = 0.0;
};

struct RunReport {
  std::vector<OverflowRecord> overflows;
  std::int64_t n_paths = 0;
  bool valid = true;
};

struct Ensemble {
  Eigen::MatrixXd points;  // n_paths x d
  double time = 0.0;
  std::string model_id;
  std::uint64_t seed = 0;
  IntegratorConfig config;
};

// One Euler-Maruyama update x + b(x) dt + sigma(x) * increment; sigma is
// evaluated at the pre-jump state.
Eigen::VectorXd em_step(const Eigen::VectorXd& state, const Model& model,
                        double dt, const Eigen::VectorXd& increment);

// Evolves n_paths independent paths to t_end. Path p draws Gaussians from
// RngStream(seed, p, 0) and subordinator variables from RngStream(seed, p, 1),
// so runs with equal seeds share Gaussian streams across alpha values.
// `stream_ids`, when provided, remaps path p to stream stream_ids[p].
Ensemble simulate_ensemble(const Model& model, const IntegratorConfig& config,
                           std::uint64_t seed, RunReport* report = nullptr,
                           const std::vector<std::uint64_t>* stream_ids = nullptr);

// Snapshots at the given times (each must be a multiple of dt, <= t_end).
std::vector<Ensemble> simulate_snapshots(const Model& model,
                                         const IntegratorConfig& config,
                                         std::uint64_t seed,
                                         std::vector<double> times,
                                         RunReport* report = nullptr,
                                         const std::vector<std::uint64_t>* stream_ids = nullptr);

struct ErgodicityDiagnostic {
  double half_batch_w1 = 0.0;       // two independent half-batches at t_end
  double half_batch_threshold = 0.0;
  double time_drift_w1 = 0.0;       // ensemble at burn-in point vs t_end
  double time_drift_threshold = 0.0;
  bool converged = true;
};

// Terminal ensemble after burn-in, as a sample of the invariant measure.
// Spatial half-batch and temporal drift diagnostics flag non-convergence.
EmpiricalMeasure estimate_invariant_measure(const Model& model,
                                            const IntegratorConfig& config,
                                            std::uint64_t seed,
                                            ErgodicityDiagnostic* diag = nullptr);

enum class DissipativityKind { dc, dc_prime };

struct ProbeSpec {
  int n_probes = 4096;
  double box_radius = 10.0;
  std::uint64_t seed = 42;
};

struct DissipativityViolation {
  Eigen::VectorXd x, y;
  double lhs = 0.0;
  double bound = 0.0;
};

struct DissipativityReport {
  // largest c0 on a grid for which the declared c1 fits all probes
  double fitted_c0 = 0.0;
  // smallest c1 that fits all probes at the declared c0
  double fitted_c1 = 0.0;
  std::vector<DissipativityViolation> violations;
  bool sqrt_failed = false;
  Eigen::VectorXd sqrt_failure_probe;
};

DissipativityReport check_dissipativity(const Model& model,
                                        DissipativityKind kind,
                                        std::optional<double> sigma0,
                                        const ProbeSpec& probes = {});

struct AssumptionReport {
  double ellipticity_min = 0.0;  // min over probes of |sigma(x) y|^2
  double ellipticity_max = 0.0;
  double derivative_bound[3] = {0.0, 0.0, 0.0};  // orders 1..3
  bool a1_ok = true;
  bool a2_ok = true;
};

AssumptionReport check_assumption_A(const Model& model,
                                    const ProbeSpec& probes = {});

// sigma_tilde = (sigma sigma^* - sigma0^2 I)^{1/2} by symmetric
// eigendecomposition; eigenvalues below sigma0^2 + 1e-12 throw.
Eigen::MatrixXd sigma_tilde(const Model& model, const Eigen::VectorXd& x,
                            double sigma0);

// flat binary snapshot layout + CSV mirror
void save_ensemble(const std::string& path, const Ensemble& e);
Ensemble load_ensemble(const std::string& path);
void export_ensemble_csv(const std::string& path, const Ensemble& e);

}  // namespace stablesde
