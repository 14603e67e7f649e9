#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stablesde/model.hpp"
#include "stablesde/sde.hpp"

namespace stablesde {

// Test function with optional analytic derivatives; central differences fill
// in when absent. lip_const / sup_const feed the truncation-tail estimates.
struct TestFunction {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hessian;
  std::optional<double> lip_const;
  std::optional<double> sup_const;

  Eigen::VectorXd grad_at(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd hess_at(const Eigen::VectorXd& x) const;
};

TestFunction make_cos_wave(const Eigen::VectorXd& xi);  // cos(<xi, x>)
TestFunction make_linear(const Eigen::VectorXd& a);     // <a, x>

struct QuadratureConfig {
  double inner_cut = 1e-4;
  double outer_cut = 2500.0;
  int radial_nodes = 3072;   // total composite panels across both radial regions
  int sphere_nodes = 32;     // per-sphere nodes (d-dependent meaning, see impl)
  std::uint64_t mc_seed = 1234;  // sphere fallback for d > 3

  void validate() const;
};

struct GeneratorEvaluation {
  double value = 0.0;
  double quad_error = 0.0;
  std::map<std::string, double> pieces;

  double pieces_sum() const;
};

double sphere_area(int d);                    // S_d = 2 pi^{d/2} / Gamma(d/2)
double levy_constant(int d, double alpha);    // c_{d,alpha}
double normalization_ratio(int d, double alpha);  // c_{d,a} S_d / (d(2-a))

// L^alpha_sigma f(x): compensated jump integral with analytic second-order
// inner region, product radial x sphere quadrature in the middle, and a
// truncation-tail bound folded into quad_error.
GeneratorEvaluation fractional_generator_apply(const TestFunction& f,
                                               const Eigen::VectorXd& x,
                                               const Eigen::MatrixXd& sigma_at_x,
                                               double alpha,
                                               const QuadratureConfig& quad);

// A^alpha f = L^alpha_sigma f + <b, grad f>;  A^Q f = (1/2)<hess f, sigma sigma^*> + <b, grad f>
GeneratorEvaluation full_generator(const TestFunction& f, const Eigen::VectorXd& x,
                                   const Model& model, const NoiseSpec& kind,
                                   const QuadratureConfig& quad);

// (A^alpha - A^Q) f split as J1 (outer), J21 (closed form), J22 (Taylor
// remainder); pieces cross-check against direct differencing.
GeneratorEvaluation generator_gap_stable_vs_brownian(const TestFunction& f,
                                                     const Eigen::VectorXd& x,
                                                     const Model& model,
                                                     double alpha,
                                                     const QuadratureConfig& quad);

// (A^alpha - A^vartheta) f split as JJ1 (kernel difference) + JJ2 (constant
// difference), 1 < alpha < vartheta < 2.
GeneratorEvaluation generator_gap_stable_vs_stable(const TestFunction& f,
                                                   const Eigen::VectorXd& x,
                                                   const Model& model,
                                                   double alpha, double vartheta,
                                                   const QuadratureConfig& quad);

struct GFunctionReport {
  double max_slope = 0.0;            // max |G'| estimate over the grid
  double max_slope_over_gamma = 0.0; // max slope / Gamma(d/2 + 1)
  double identity_max_rel_err = 0.0; // c_{d,2x} S_d vs G(x)/(pi Gamma(d/2))
};

GFunctionReport g_function_lipschitz_probe(int d, std::vector<double> grid);

struct McProbeConfig {
  std::int64_t n_paths = 200000;
  double dt = 2e-3;
  std::uint64_t seed = 99;
  int threads = 0;
};

struct ResidualEstimate {
  double time_derivative = 0.0;
  double generator_average = 0.0;
  double residual = 0.0;   // difference
  double stderr_ = 0.0;    // Monte Carlo stderr of the difference
  double studentized = 0.0;
  bool noise_dominated = false;
};

// d/dt P_t f(x) vs P_t (A f)(x) by common-random-number Monte Carlo.
ResidualEstimate kolmogorov_residual(const Model& model, const TestFunction& f,
                                     const Eigen::VectorXd& x, double t,
                                     const NoiseSpec& kind,
                                     const McProbeConfig& mc,
                                     const QuadratureConfig& quad);

struct ExponentProbe {
  double exponent = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool inconclusive = false;
  std::vector<double> t_grid;
  std::vector<double> estimates;
};

// Fits log |grad^n P_t g| vs log t at a probe point by common-random-number
// finite differences over initial conditions; order n in {1, 2}.
ExponentProbe semigroup_gradient_probe(const Model& model, const TestFunction& g,
                                       std::vector<double> t_grid, int order,
                                       const NoiseSpec& kind,
                                       const McProbeConfig& mc);

}  // namespace stablesde
