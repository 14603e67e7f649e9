#pragma once

#include <string>
#include <vector>

#include "stablesde/config.hpp"
#include "stablesde/coupling.hpp"
#include "stablesde/sde.hpp"
#include "stablesde/stats.hpp"
#include "stablesde/wasserstein.hpp"

namespace stablesde {

inline constexpr const char* kLibraryVersion = "0.1.0";

struct ExperimentConfig {
  std::string experiment_id;
  std::string model_id = "ou";
  std::vector<double> alpha_grid = {1.7, 1.8, 1.9, 1.95, 1.98};
  std::vector<double> vartheta_grid = {1.5};
  std::vector<int> dims = {1};
  std::int64_t n_paths = 20000;
  double dt = 1e-3;
  double t_end = 8.0;
  double burn_in = 4.0;
  double sigma0 = 0.5;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string output_dir = "out";

  static ExperimentConfig from_config(const FlatConfig& cfg);
};

enum class AbscissaKind { two_minus_alpha, alpha_gap, dimension, time };

struct RatePoint {
  double abscissa = 0.0;
  double w1 = 0.0;
  double stderr_ = 0.0;
};

struct RateFit {
  AbscissaKind kind = AbscissaKind::two_minus_alpha;
  std::string label;
  std::vector<RatePoint> points;
  LinearFit fit;  // log-log
  bool baseline_subtracted = false;
};

struct CellRecord {
  std::string experiment;
  int d = 1;
  double alpha = 2.0;
  double vartheta = 2.0;
  double t = 0.0;          // 0 -> stationary cell
  double abscissa = 0.0;
  double w1_oracle = 0.0;  // NaN when no oracle
  double oracle_err = 0.0;
  double w1_mc_raw = 0.0;
  double mc_baseline = 0.0;  // base_F + base_G bias bound
  double mc_stderr = 0.0;
  double w1_mc_mid = 0.0;    // raw - baseline/2
  std::string oracle_tag;    // exact-cdf | monte-carlo
  bool converged = true;
};

struct ExperimentResult {
  std::string experiment_id;
  std::vector<CellRecord> cells;
  std::vector<RateFit> fits;
  std::vector<std::string> notes;
  bool acceptance_ok = true;
  bool convergence_ok = true;
};

// stationary law scale of the OU system driven by the paper-normalized
// alpha-stable noise: CF exp(-|z|^alpha/(2 alpha)) = exp(-(scale |z|)^alpha)
double stationary_stable_scale(double alpha);

// CDF-integral oracles for the OU stationary laws (d = 1)
W1Result oracle_w1_stable_vs_gauss(double alpha);
W1Result oracle_w1_stable_vs_stable(double alpha, double vartheta);

// raw sorted W1 plus split-half same-law baselines; |E raw - W1| <= baseline
struct DebiasedW1 {
  double raw = 0.0;
  double baseline = 0.0;  // base_a + base_b
  double mid = 0.0;       // raw - baseline/2
  double stderr_ = 0.0;   // bootstrap stderr of raw
};
DebiasedW1 mc_w1_sorted_debiased(const Eigen::VectorXd& a,
                                 const Eigen::VectorXd& b,
                                 std::uint64_t boot_seed = 7,
                                 int boot_resamples = 48);

ExperimentResult run_rate_vs_brownian(const ExperimentConfig& cfg);
ExperimentResult run_rate_stable_stable(const ExperimentConfig& cfg);
ExperimentResult run_finite_time_uniformity(const ExperimentConfig& cfg);
ExperimentResult run_generator_checks(const ExperimentConfig& cfg);
ExperimentResult run_coupling_rates(const ExperimentConfig& cfg);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// CSV tables, flat key-value manifest, and a self-contained SVG plot script;
// deterministic file names and byte-deterministic content for a fixed config.
void emit_report(const ExperimentResult& result, const ExperimentConfig& cfg);

}  // namespace stablesde
