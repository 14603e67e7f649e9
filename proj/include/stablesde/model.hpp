#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>

namespace stablesde {

// Declared structural constants theta = (c0, c1, c2, c3) of the coefficient
// pair: dissipativity (c0, c1), ellipticity window c2 >= 1, derivative bound c3.
struct ParamTuple {
  double c0 = 1.0;
  double c1 = 0.0;
  double c2 = 1.0;
  double c3 = 1.0;

  void validate() const;
};

// SDE coefficients (b, sigma) on R^d. Implementations must be total and
// deterministic; diffusion_apply evaluates out = sigma(x) * w (used with the
// pre-jump state by the integrator).
class Model {
 public:
  virtual ~Model() = default;
  virtual int dim() const = 0;
  virtual std::string id() const = 0;
  virtual void drift(const double* x, double* out) const = 0;
  virtual void diffusion_apply(const double* x, const double* w,
                               double* out) const = 0;
  virtual Eigen::MatrixXd diffusion(const Eigen::VectorXd& x) const = 0;
  virtual const ParamTuple& theta() const = 0;
  // declared invertibility of sigma everywhere (needed by the coupling module)
  virtual bool elliptic() const { return true; }

  Eigen::VectorXd drift(const Eigen::VectorXd& x) const;
};

// b(x) = -x, sigma = I. theta = (1, 0, 1, 1).
std::shared_ptr<const Model> make_ou_model(int dim);

// b(x) = -x, sigma(x) = diag(sqrt(1 + x_i^2/(1+x_i^2)) / 2^{1/4}).
// Certified constants: c0 = 1, c1 = 0, c2 = sqrt(2), c3 = 2.5
// (the third sigma derivative peaks near 2.17).
std::shared_ptr<const Model> make_multiplicative_model(int dim);

// Adapter for tests and custom experiments.
class LambdaModel : public Model {
 public:
  LambdaModel(int dim, std::string id,
              std::function<Eigen::VectorXd(const Eigen::VectorXd&)> drift,
              std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> diffusion,
              ParamTuple theta, bool elliptic = true);

  int dim() const override { return dim_; }
  std::string id() const override { return id_; }
  void drift(const double* x, double* out) const override;
  void diffusion_apply(const double* x, const double* w,
                       double* out) const override;
  Eigen::MatrixXd diffusion(const Eigen::VectorXd& x) const override;
  const ParamTuple& theta() const override { return theta_; }
  bool elliptic() const override { return elliptic_; }

 private:
  int dim_;
  std::string id_;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> drift_;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> diffusion_;
  ParamTuple theta_;
  bool elliptic_;
};

// Named model lookup used by the CLI/config layer ("ou", "multiplicative").
std::shared_ptr<const Model> model_registry_get(const std::string& name, int dim);

}  // namespace stablesde
