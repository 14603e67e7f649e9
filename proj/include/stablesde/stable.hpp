#pragma once

#include <Eigen/Dense>
#include <complex>
#include <span>

#include "stablesde/rng.hpp"

namespace stablesde {

// Stability index alpha in (1, 2]. alpha = 2 is the Brownian endpoint and
// is handled by deterministic branches in the samplers.
class StabilityIndex {
 public:
  explicit StabilityIndex(double alpha);
  double value() const { return alpha_; }
  bool is_brownian() const { return alpha_ == 2.0; }

 private:
  double alpha_;
};

struct StableIncrementSpec {
  StabilityIndex alpha;
  int dim = 1;
  double dt = 1.0;

  StableIncrementSpec(StabilityIndex a, int d, double h);
};

// One-sided beta-stable variate with Laplace transform E e^{-u A} = e^{-u^beta},
// beta in (0,1). Kanter construction; consumes one uniform and one exponential.
double sample_one_sided_stable(double beta, RngStream& rng);

// Draw of the subordinator increment S_dt with
// E e^{-u S_dt} = exp(-2^{(alpha-2)/2} u^{alpha/2} dt).
// At alpha = 2 returns dt exactly (deterministic drift).
double sample_subordinator_increment(StabilityIndex alpha, double dt,
                                     RngStream& rng);

// Draw of the rotationally invariant alpha-stable increment L_dt = W_{S_dt},
// i.e. sqrt(S_dt) * G with G standard Gaussian from `gauss`, S_dt from
// `subord`. Characteristic function exp(-dt |z|^alpha / 2).
Eigen::VectorXd sample_stable_increment(const StableIncrementSpec& spec,
                                        RngStream& gauss, RngStream& subord);

// Convenience single-stream version: consumes the subordinator pair first,
// then the d Gaussians, all from one stream.
Eigen::VectorXd sample_stable_increment(const StableIncrementSpec& spec,
                                        RngStream& rng);

struct CfEstimate {
  std::complex<double> value;
  double stderr_re = 0.0;
  double stderr_im = 0.0;
};

// (1/n) sum_k exp(i <z, x_k>) with per-component standard errors.
// `samples` is n x d; z has length d.
CfEstimate empirical_char_function(const Eigen::MatrixXd& samples,
                                   const Eigen::VectorXd& z);
CfEstimate empirical_char_function(std::span<const double> samples_1d,
                                   double z);

}  // namespace stablesde
