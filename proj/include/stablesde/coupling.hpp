#pragma once

#include <Eigen/Dense>
#include <vector>

#include "stablesde/generator.hpp"
#include "stablesde/model.hpp"
#include "stablesde/sde.hpp"

namespace stablesde {

// kappa(r) = c0 - c1/r on (0,1], c0 - c1/r^2 on (1,inf); continuous,
// nondecreasing, liminf at infinity is c0 > 0.
struct KappaSpec {
  double c0 = 1.0;
  double c1 = 0.0;

  double operator()(double r) const;
  // int_0^r (s kappa(s))^- ds, closed form for this family
  double neg_part_integral(double r) const;
  double r0() const;  // first point after which kappa stays nonnegative

  void validate() const;
};

struct PsiGridConfig {
  int cells = 4096;      // quadrature cells up to r1
  double r_max = 0.0;    // table extent; 0 -> 4 * r1
  double check_tol = 1e-7;
  int max_refines = 2;
};

// Concave comparison function Psi and its ingredients, tabulated on a graded
// grid. phi is evaluated in closed form; Phi, g, Psi by cumulative quadrature.
class PsiFunction {
 public:
  double sigma0 = 0.0;
  double r0 = 0.0;
  double r1 = 0.0;
  double lambda = 0.0;

  double phi(double r) const;       // exp(-sigma0^{-2} int (s kappa)^-)
  double Phi(double r) const;       // int_0^r phi
  double g(double r) const;         // 1 - lambda/(4 sigma0^2) int_0^{r^r1} Phi/phi
  double psi(double r) const;       // int_0^r phi g
  double psi_prime(double r) const;
  double psi_second(double r) const;  // defined off r1

  double grid_max() const { return r_max_; }

 private:
  friend PsiFunction build_psi(const KappaSpec&, double, const PsiGridConfig&);
  KappaSpec kappa_;
  double r_max_ = 0.0;
  std::vector<double> grid_;       // nodes
  std::vector<double> cum_phi_;    // Phi at nodes
  std::vector<double> cum_phig_;   // psi at nodes
  std::vector<double> cum_phi_over_phi_;  // int Phi/phi at nodes

  double interp(const std::vector<double>& table, double r) const;
};

// Builds (phi, Phi, g, lambda, Psi) per the Eberle construction; verifies the
// sandwich bounds and the differential inequality pointwise off r1, refining
// the grid on failure.
PsiFunction build_psi(const KappaSpec& kappa, double sigma0,
                      const PsiGridConfig& grid = {});

struct CouplingResult {
  std::vector<double> t_grid;
  std::vector<double> mean_distance;   // E |Ytilde_t - Y_t|
  std::vector<double> stderr_distance;
  std::vector<double> coupling_times;  // +inf when not coupled by t_end
  Eigen::MatrixXd y_final;
  Eigen::MatrixXd ytilde_final;
  double merge_threshold = 0.0;
};

// Euler simulation of the reflection-coupled pair sharing (B, Btilde); paths
// glue once the distance crosses merge_threshold = 1e-6 |x - y|.
CouplingResult reflection_coupling_simulate(const Model& model, double sigma0,
                                            const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& y,
                                            const IntegratorConfig& config,
                                            std::uint64_t seed);

struct JumpOverlapSpec {
  double eta = 1.0;        // truncation of nu_0
  double kappa_cap = 1.0;  // the (x-y)_kappa cap
  double alpha = 1.5;
  const Model* model = nullptr;
  Eigen::VectorXd x, y;

  void validate() const;
};

struct OverlapResult {
  double mass_fwd = 0.0;
  double mass_bwd = 0.0;
  double moment_fwd = 0.0;   // int |z|^m mu_{nu0,Psi}(dz)
  double moment_bwd = 0.0;
  double stderr_ = 0.0;      // nonzero only for the Monte Carlo fallback
};

// Overlap measures of the truncated jump measure and its shift by the
// (x-y)_kappa map; deterministic quadrature for d <= 3, Monte Carlo above.
OverlapResult jump_overlap_integrals(const JumpOverlapSpec& spec, double m,
                                     const QuadratureConfig& quad);

struct ContractionFit {
  double rate = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool baseline_dominated = false;
  std::vector<double> t_grid;
  std::vector<double> w1;        // baseline-subtracted
  std::vector<double> baseline;
};

// Exponential-decay fit of W1(L_t^x, L_t^y) over the time grid from two
// independently-driven ensembles (same-law baseline subtracted).
ContractionFit w1_contraction_probe(const Model& model, const NoiseSpec& kind,
                                    const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& y,
                                    std::vector<double> t_grid,
                                    const IntegratorConfig& config,
                                    std::uint64_t seed);

struct StableRateInputs {
  double K1 = 0.0, K2 = 0.0, K3 = 0.0, ell0 = 0.0;
};

struct StableRateResult {
  double C = 0.0;
  double lambda = 0.0;
  StableRateInputs inputs;  // the admissible constants used
};

// Assembles the exponential-ergodicity pair (C, lambda) for the stable SDE
// from g1, g2 integrals of rho(r) = K3^{-1} r^{-1} (r ^ kappa)^{2-alpha}.
// K1, K2, K3, ell0 are derived from theta (and the overlap-integral fit)
// unless supplied; the result is one admissible pair, not a canonical one.
StableRateResult stable_rate_formula(const ParamTuple& theta, int d,
                                     double alpha0, double vartheta0, double eta,
                                     const QuadratureConfig& quad,
                                     double sigma_lip = 0.0,
                                     const StableRateInputs* supplied = nullptr);

}  // namespace stablesde
