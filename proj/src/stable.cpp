#include "stablesde/stable.hpp"

#include <cmath>
#include <stdexcept>

namespace stablesde {

StabilityIndex::StabilityIndex(double alpha) : alpha_(alpha) {
  if (!(alpha > 1.0) || !(alpha <= 2.0))
    throw std::domain_error("StabilityIndex: alpha must lie in (1, 2]");
}

StableIncrementSpec::StableIncrementSpec(StabilityIndex a, int d, double h)
    : alpha(a), dim(d), dt(h) {
  if (d < 1) throw std::domain_error("StableIncrementSpec: dim >= 1 required");
  if (!(h > 0.0)) throw std::domain_error("StableIncrementSpec: dt > 0 required");
}

double sample_one_sided_stable(double beta, RngStream& rng) {
  if (!(beta > 0.0) || !(beta < 1.0))
    throw std::domain_error("sample_one_sided_stable: beta must lie in (0,1)");
  const double u = rng.uniform(0.0, M_PI);
  const double e = rng.exponential();
  // log a(u) = (b/(1-b)) log sin(bu) + log sin((1-b)u) - (1/(1-b)) log sin(u);
  // the direct form overflows as beta -> 1, so stay in log space.
  const double la = beta / (1.0 - beta) * std::log(std::sin(beta * u)) +
                    std::log(std::sin((1.0 - beta) * u)) -
                    1.0 / (1.0 - beta) * std::log(std::sin(u));
  return std::exp((1.0 - beta) / beta * (la - std::log(e)));
}

double sample_subordinator_increment(StabilityIndex alpha, double dt,
                                     RngStream& rng) {
  if (!(dt > 0.0))
    throw std::domain_error("sample_subordinator_increment: dt > 0 required");
  const double a = alpha.value();
  if (alpha.is_brownian()) return dt;
  const double beta = a / 2.0;
  const double one_sided = sample_one_sided_stable(beta, rng);
  // E e^{-u c A} = e^{-(uc)^beta}; matching exponents against
  // exp(-2^{(a-2)/2} u^{a/2} dt) gives c = (2^{(a-2)/2} dt)^{2/a}.
  const double scale = std::pow(std::exp2((a - 2.0) / 2.0) * dt, 2.0 / a);
  return scale * one_sided;
}

Eigen::VectorXd sample_stable_increment(const StableIncrementSpec& spec,
                                        RngStream& gauss, RngStream& subord) {
  const double s = sample_subordinator_increment(spec.alpha, spec.dt, subord);
  const double r = std::sqrt(s);
  Eigen::VectorXd out(spec.dim);
  for (int i = 0; i < spec.dim; ++i) out[i] = r * gauss.normal();
  return out;
}

Eigen::VectorXd sample_stable_increment(const StableIncrementSpec& spec,
                                        RngStream& rng) {
  return sample_stable_increment(spec, rng, rng);
}

CfEstimate empirical_char_function(const Eigen::MatrixXd& samples,
                                   const Eigen::VectorXd& z) {
  const auto n = samples.rows();
  if (n == 0)
    throw std::invalid_argument("empirical_char_function: empty sample set");
  if (samples.cols() != z.size())
    throw std::invalid_argument("empirical_char_function: dimension mismatch");
  double sc = 0.0, ss = 0.0, sc2 = 0.0, ss2 = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = samples.row(k).dot(z);
    const double c = std::cos(t), s = std::sin(t);
    sc += c;
    ss += s;
    sc2 += c * c;
    ss2 += s * s;
  }
  const double nn = static_cast<double>(n);
  CfEstimate out;
  out.value = {sc / nn, ss / nn};
  if (n > 1) {
    const double vc = (sc2 - sc * sc / nn) / (nn - 1.0);
    const double vs = (ss2 - ss * ss / nn) / (nn - 1.0);
    out.stderr_re = std::sqrt(std::max(0.0, vc) / nn);
    out.stderr_im = std::sqrt(std::max(0.0, vs) / nn);
  }
  return out;
}

CfEstimate empirical_char_function(std::span<const double> samples_1d,
                                   double z) {
  Eigen::MatrixXd m(samples_1d.size(), 1);
  for (std::size_t i = 0; i < samples_1d.size(); ++i) m(i, 0) = samples_1d[i];
  Eigen::VectorXd zz(1);
  zz[0] = z;
  return empirical_char_function(m, zz);
}

}  // namespace stablesde
