#pragma once

#include "ebmlab/energy_model.hpp"

namespace ebmlab {

/// E(x) = 1/2 (x - mu)^T P (x - mu) with P the symmetric part of the stored
/// precision matrix. Parameter layout: mu (d), then P row-major (d*d).
class AnalyticGaussianEnergy final : public EnergyModel {
 public:
  AnalyticGaussianEnergy(Vector mu, Matrix precision) : mu_(std::move(mu)), p_(std::move(precision)) {
    if (p_.rows() != mu_.size() || p_.cols() != mu_.size())
      throw Error("AnalyticGaussianEnergy: precision shape does not match mean");
    if (mu_.size() == 0) throw Error("AnalyticGaussianEnergy: empty dimension");
  }

  static AnalyticGaussianEnergy standard(Eigen::Index d) {
    return {Vector::Zero(d), Matrix::Identity(d, d)};
  }

  const Vector& mean() const { return mu_; }
  Matrix precision() const { return 0.5 * (p_ + p_.transpose()); }

  Eigen::Index dim() const override { return mu_.size(); }
  Eigen::Index num_params() const override { return mu_.size() + p_.size(); }
  std::string kind() const override { return "gaussian"; }

  Vector params() const override {
    const Eigen::Index d = dim();
    Vector out(num_params());
    out.head(d) = mu_;
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) out[d + i * d + j] = p_(i, j);
    return out;
  }

  std::unique_ptr<EnergyModel> clone() const override {
    return std::make_unique<AnalyticGaussianEnergy>(*this);
  }

  /// Exact normalized log-density (requires P positive definite).
  double log_pdf(const Vector& x) const {
    const Matrix ps = precision();
    Eigen::LLT<Matrix> llt(ps);
    if (llt.info() != Eigen::Success) throw Error("log_pdf: precision not positive definite");
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -energy(x) + 0.5 * logdet - 0.5 * static_cast<double>(dim()) * std::log(2.0 * M_PI);
  }

 protected:
  void do_set_params(const Vector& p) override {
    const Eigen::Index d = dim();
    mu_ = p.head(d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) p_(i, j) = p[d + i * d + j];
  }

  double do_energy(const Vector& x) const override {
    const Vector r = x - mu_;
    return 0.5 * r.dot(precision() * r);
  }

  Vector do_energy_grad(const Vector& x) const override { return precision() * (x - mu_); }

  Vector do_param_grad(const Vector& x) const override {
    const Eigen::Index d = dim();
    const Vector r = x - mu_;
    Vector g(num_params());
    g.head(d) = -(precision() * r);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) g[d + i * d + j] = 0.5 * r[i] * r[j];
    return g;
  }

  double do_laplacian(const Vector&) const override { return p_.trace(); }

  Vector do_laplacian_param_grad(const Vector&) const override {
    const Eigen::Index d = dim();
    Vector g = Vector::Zero(num_params());
    for (Eigen::Index i = 0; i < d; ++i) g[d + i * d + i] = 1.0;
    return g;
  }

  Vector do_mixed_param_grad(const Vector& x, const Vector& u) const override {
    const Eigen::Index d = dim();
    const Vector r = x - mu_;
    Vector g(num_params());
    g.head(d) = -(precision() * u);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) g[d + i * d + j] = 0.5 * (u[i] * r[j] + r[i] * u[j]);
    return g;
  }

 private:
  Vector mu_;
  Matrix p_;
};

}  // namespace ebmlab
