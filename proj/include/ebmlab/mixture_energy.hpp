#pragma once

#include "ebmlab/density.hpp"
#include "ebmlab/energy_model.hpp"

#include <vector>

namespace ebmlab {

struct MixtureComponent {
  double weight;
  Vector mean;
  Vector variance;  // diagonal
};

/// E(x) = -log sum_k w_k N(x; mu_k, diag(var_k)). Exactly normalized, so it
/// doubles as a data target and as fixed noise. Has no trainable parameters.
class GaussianMixtureEnergy final : public EnergyModel, public Density {
 public:
  explicit GaussianMixtureEnergy(std::vector<MixtureComponent> components)
      : comps_(std::move(components)) {
    if (comps_.empty()) throw Error("GaussianMixtureEnergy: no components");
    const Eigen::Index d = comps_.front().mean.size();
    if (d == 0) throw Error("GaussianMixtureEnergy: empty dimension");
    double total = 0.0;
    for (const auto& c : comps_) {
      if (c.mean.size() != d || c.variance.size() != d)
        throw Error("GaussianMixtureEnergy: inconsistent component dimension");
      if (!(c.weight > 0.0)) throw Error("GaussianMixtureEnergy: weights must be positive");
      if (!(c.variance.array() > 0.0).all())
        throw Error("GaussianMixtureEnergy: variances must be positive");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error("GaussianMixtureEnergy: weights must sum to 1");
    for (const auto& c : comps_)
      log_norm_.push_back(std::log(c.weight) - 0.5 * static_cast<double>(d) * std::log(2.0 * M_PI) -
                          0.5 * c.variance.array().log().sum());
  }

  static GaussianMixtureEnergy isotropic_normal(const Vector& mean, double variance) {
    return GaussianMixtureEnergy({{1.0, mean, Vector::Constant(mean.size(), variance)}});
  }

  /// Equal-weight mixture of four isotropic Gaussians at (+-c, +-c).
  static GaussianMixtureEnergy four_mode(double c = 4.0, double stddev = 1.5) {
    std::vector<MixtureComponent> comps;
    const Vector var = Vector::Constant(2, stddev * stddev);
    for (double sx : {-1.0, 1.0})
      for (double sy : {-1.0, 1.0}) comps.push_back({0.25, Eigen::Vector2d(sx * c, sy * c), var});
    return GaussianMixtureEnergy(std::move(comps));
  }

  /// Two-component 1D mixture.
  static GaussianMixtureEnergy two_mode_1d(double left = -2.0, double right = 2.0,
                                           double stddev = 0.7, double left_weight = 0.5) {
    return GaussianMixtureEnergy({{left_weight, Vector::Constant(1, left), Vector::Constant(1, stddev * stddev)},
                                  {1.0 - left_weight, Vector::Constant(1, right),
                                   Vector::Constant(1, stddev * stddev)}});
  }

  const std::vector<MixtureComponent>& components() const { return comps_; }

  /// The same mixture convolved with N(0, sigma^2 I).
  GaussianMixtureEnergy smoothed(double sigma) const {
    if (!(sigma > 0.0)) throw Error("smoothed: sigma must be positive");
    auto comps = comps_;
    for (auto& c : comps) c.variance.array() += sigma * sigma;
    return GaussianMixtureEnergy(std::move(comps));
  }

  Eigen::Index dim() const override { return comps_.front().mean.size(); }
  Eigen::Index num_params() const override { return 0; }
  Vector params() const override { return Vector(0); }
  std::string kind() const override { return "gaussian_mixture"; }

  std::unique_ptr<EnergyModel> clone() const override {
    return std::make_unique<GaussianMixtureEnergy>(*this);
  }

  Eigen::Index density_dim() const override { return dim(); }
  std::string density_name() const override { return "gaussian_mixture"; }

  double log_pdf(const Vector& x) const override { return -energy(x); }

  Vector sample(Rng& rng) const override {
    double u = rng.uniform();
    std::size_t k = 0;
    for (; k + 1 < comps_.size(); ++k) {
      if (u < comps_[k].weight) break;
      u -= comps_[k].weight;
    }
    const auto& c = comps_[k];
    Vector x(dim());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = c.mean[i] + std::sqrt(c.variance[i]) * rng.normal();
    return x;
  }

  /// Component responsibilities at x.
  Vector responsibilities(const Vector& x) const {
    Vector logs = component_logs(x);
    const double lse = log_sum_exp(logs);
    return (logs.array() - lse).exp().matrix();
  }

 protected:
  void do_set_params(const Vector&) override {}

  double do_energy(const Vector& x) const override { return -log_sum_exp(component_logs(x)); }

  Vector do_energy_grad(const Vector& x) const override {
    const Vector gamma = responsibilities(x);
    Vector g = Vector::Zero(dim());
    for (std::size_t k = 0; k < comps_.size(); ++k)
      g += gamma[k] * ((x - comps_[k].mean).array() / comps_[k].variance.array()).matrix();
    return g;
  }

  Vector do_param_grad(const Vector&) const override { return Vector(0); }

  // Tr(hess E) = ||s||^2 - sum_k gamma_k (||Lambda_k r_k||^2 - Tr Lambda_k), s = grad log p.
  double do_laplacian(const Vector& x) const override {
    const Vector gamma = responsibilities(x);
    const Vector s = -do_energy_grad(x);
    double acc = 0.0;
    for (std::size_t k = 0; k < comps_.size(); ++k) {
      const Eigen::ArrayXd lam = comps_[k].variance.array().inverse();
      const Eigen::ArrayXd lr = lam * (x - comps_[k].mean).array();
      acc += gamma[k] * (lr.square().sum() - lam.sum());
    }
    return s.squaredNorm() - acc;
  }

  Vector do_laplacian_param_grad(const Vector&) const override { return Vector(0); }
  Vector do_mixed_param_grad(const Vector&, const Vector&) const override { return Vector(0); }

 private:
  Vector component_logs(const Vector& x) const {
    Vector logs(static_cast<Eigen::Index>(comps_.size()));
    for (std::size_t k = 0; k < comps_.size(); ++k) {
      const auto& c = comps_[k];
      logs[static_cast<Eigen::Index>(k)] =
          log_norm_[k] - 0.5 * ((x - c.mean).array().square() / c.variance.array()).sum();
    }
    return logs;
  }

  std::vector<MixtureComponent> comps_;
  std::vector<double> log_norm_;
};

}  // namespace ebmlab
