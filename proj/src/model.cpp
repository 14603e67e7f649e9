#include "stablesde/model.hpp"

#include <cmath>
#include <stdexcept>

namespace stablesde {

void ParamTuple::validate() const {
  if (!(c0 > 0.0)) throw std::domain_error("ParamTuple: c0 > 0 required");
  if (c1 < 0.0) throw std::domain_error("ParamTuple: c1 >= 0 required");
  if (c2 < 1.0) throw std::domain_error("ParamTuple: c2 >= 1 required");
  if (!(c3 > 0.0)) throw std::domain_error("ParamTuple: c3 > 0 required");
}

Eigen::VectorXd Model::drift(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out(dim());
  drift(x.data(), out.data());
  return out;
}

namespace {

class OuModel final : public Model {
 public:
  explicit OuModel(int dim) : dim_(dim) { theta_ = {1.0, 0.0, 1.0, 1.0}; }
  int dim() const override { return dim_; }
  std::string id() const override { return "ou"; }
  void drift(const double* x, double* out) const override {
    for (int i = 0; i < dim_; ++i) out[i] = -x[i];
  }
  void diffusion_apply(const double*, const double* w, double* out) const override {
    for (int i = 0; i < dim_; ++i) out[i] = w[i];
  }
  Eigen::MatrixXd diffusion(const Eigen::VectorXd&) const override {
    return Eigen::MatrixXd::Identity(dim_, dim_);
  }
  const ParamTuple& theta() const override { return theta_; }

 private:
  int dim_;
  ParamTuple theta_;
};

class MultiplicativeDiagModel final : public Model {
 public:
  explicit MultiplicativeDiagModel(int dim) : dim_(dim) {
    theta_ = {1.0, 0.0, std::sqrt(2.0), 2.5};
  }
  int dim() const override { return dim_; }
  std::string id() const override { return "multiplicative"; }
  void drift(const double* x, double* out) const override {
    for (int i = 0; i < dim_; ++i) out[i] = -x[i];
  }
  static double sig(double xi) {
    // values in [2^{-1/4}, 2^{1/4}]; |sigma y|^2 in [1/sqrt2, sqrt2]
    return std::sqrt(1.0 + xi * xi / (1.0 + xi * xi)) * kInvRoot4;
  }
  void diffusion_apply(const double* x, const double* w, double* out) const override {
    for (int i = 0; i < dim_; ++i) out[i] = sig(x[i]) * w[i];
  }
  Eigen::MatrixXd diffusion(const Eigen::VectorXd& x) const override {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim_, dim_);
    for (int i = 0; i < dim_; ++i) m(i, i) = sig(x[i]);
    return m;
  }
  const ParamTuple& theta() const override { return theta_; }

 private:
  static constexpr double kInvRoot4 = 0.8408964152537145;  // 2^{-1/4}
  int dim_;
  ParamTuple theta_;
};

}  // namespace

std::shared_ptr<const Model> make_ou_model(int dim) {
  if (dim < 1) throw std::domain_error("make_ou_model: dim >= 1");
  return std::make_shared<OuModel>(dim);
}

std::shared_ptr<const Model> make_multiplicative_model(int dim) {
  if (dim < 1) throw std::domain_error("make_multiplicative_model: dim >= 1");
  return std::make_shared<MultiplicativeDiagModel>(dim);
}

LambdaModel::LambdaModel(
    int dim, std::string id,
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> drift,
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> diffusion,
    ParamTuple theta, bool elliptic)
    : dim_(dim),
      id_(std::move(id)),
      drift_(std::move(drift)),
      diffusion_(std::move(diffusion)),
      theta_(theta),
      elliptic_(elliptic) {}

void LambdaModel::drift(const double* x, double* out) const {
  Eigen::Map<const Eigen::VectorXd> xv(x, dim_);
  Eigen::VectorXd r = drift_(xv);
  for (int i = 0; i < dim_; ++i) out[i] = r[i];
}

void LambdaModel::diffusion_apply(const double* x, const double* w,
                                  double* out) const {
  Eigen::Map<const Eigen::VectorXd> xv(x, dim_);
  Eigen::Map<const Eigen::VectorXd> wv(w, dim_);
  Eigen::VectorXd r = diffusion_(xv) * wv;
  for (int i = 0; i < dim_; ++i) out[i] = r[i];
}

Eigen::MatrixXd LambdaModel::diffusion(const Eigen::VectorXd& x) const {
  return diffusion_(x);
}

std::shared_ptr<const Model> model_registry_get(const std::string& name,
                                                int dim) {
  if (name == "ou") return make_ou_model(dim);
  if (name == "multiplicative") return make_multiplicative_model(dim);
  throw std::invalid_argument("unknown model '" + name +
                              "' (registry: ou, multiplicative)");
}

}  // namespace stablesde
