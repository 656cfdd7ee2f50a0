#pragma once

#include "ebmlab/energy_model.hpp"

#include <vector>

namespace ebmlab {

struct MlpOptions {
  std::vector<Eigen::Index> widths{2, 64, 64, 1};
  double leaky_slope = 0.2;
  bool spectral_norm = false;
  int power_iters = 1;
  /// Power-iteration cycles for the very first estimate, before any warm start exists.
  int initial_power_iters = 100;
};

/// Fully connected leaky-ReLU network with a scalar output used as the energy.
/// With spectral_norm on, layer l multiplies by W_l / sigma_l where sigma_l is
/// the cached power-iteration estimate. param_grad and friends hold sigma
/// fixed; normalized_gradient() adds the dependence of sigma on W. The cache
/// changes only in spectral_normalize_forward().
///
/// Parameter layout: for each layer, W (out x in, row-major) then b (out).
class MlpEnergy final : public EnergyModel {
 public:
  MlpEnergy(MlpOptions opts, Rng& rng) : opts_(std::move(opts)) {
    validate_options();
    const std::size_t n_layers = opts_.widths.size() - 1;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const Eigen::Index in = opts_.widths[l], out = opts_.widths[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      Matrix w(out, in);
      for (Eigen::Index i = 0; i < out; ++i)
        for (Eigen::Index j = 0; j < in; ++j) w(i, j) = rng.uniform(-bound, bound);
      Vector b(out);
      for (Eigen::Index i = 0; i < out; ++i) b[i] = rng.uniform(-bound, bound);
      w_.push_back(std::move(w));
      b_.push_back(std::move(b));
      Vector u = rng.normal_vector(out);
      u /= u.norm();
      u_.push_back(std::move(u));
      sigma_.push_back(1.0);
    }
    if (opts_.spectral_norm) spectral_normalize_forward(opts_.initial_power_iters);
  }

  const MlpOptions& options() const { return opts_; }
  std::size_t num_layers() const { return w_.size(); }
  const Matrix& weight(std::size_t l) const { return w_.at(l); }
  const Vector& bias(std::size_t l) const { return b_.at(l); }
  /// Cached divisor of layer l (1 when spectral normalization is off).
  double layer_sigma(std::size_t l) const { return opts_.spectral_norm ? sigma_.at(l) : 1.0; }
  const Vector& warm_start(std::size_t l) const { return u_.at(l); }
  Matrix effective_weight(std::size_t l) const { return w_.at(l) / layer_sigma(l); }

  /// Refresh each layer's sigma estimate with power_iters warm-started cycles
  /// and return the effective weights that subsequent passes use.
  std::vector<Matrix> spectral_normalize_forward() { return spectral_normalize_forward(opts_.power_iters); }

  std::vector<Matrix> spectral_normalize_forward(int n_iters) {
    if (!opts_.spectral_norm) throw Error("spectral_normalize_forward: spectral_norm is off");
    if (is_frozen()) throw Error("frozen model is read-only");
    std::vector<Matrix> eff;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      const SpectralEstimate est = power_iteration_warm(w_[l], n_iters, u_[l]);
      u_[l] = est.u;
      sigma_[l] = est.sigma;
      eff.push_back(w_[l] / sigma_[l]);
    }
    return eff;
  }

  /// Maps a fixed-sigma parameter gradient to the gradient of the same loss as
  /// a function of the raw weights through W / sigma(W), with the power-iteration
  /// vectors held fixed: G_W - <G_W, W> / sigma * u v^T per layer.
  Vector normalized_gradient(const Vector& g) const {
    if (g.size() != num_params()) throw Error("normalized_gradient: size mismatch");
    if (!opts_.spectral_norm) return g;
    Vector out = g;
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      const Matrix& w = w_[l];
      Vector v = w.transpose() * u_[l];
      const double vn = v.norm();
      if (vn > 0.0) {
        v /= vn;
        double inner = 0.0;
        for (Eigen::Index i = 0; i < w.rows(); ++i)
          for (Eigen::Index j = 0; j < w.cols(); ++j) inner += g[k + i * w.cols() + j] * w(i, j);
        const double scale = inner / sigma_[l];
        for (Eigen::Index i = 0; i < w.rows(); ++i)
          for (Eigen::Index j = 0; j < w.cols(); ++j) out[k + i * w.cols() + j] -= scale * u_[l][i] * v[j];
      }
      k += w.size() + b_[l].size();
    }
    return out;
  }

  /// Restore spectral-norm state (used when loading checkpoints).
  void set_spectral_state(const std::vector<Vector>& us, const std::vector<double>& sigmas) {
    if (is_frozen()) throw Error("frozen model is read-only");
    if (us.size() != w_.size() || sigmas.size() != w_.size())
      throw Error("set_spectral_state: layer count mismatch");
    for (std::size_t l = 0; l < w_.size(); ++l) {
      if (us[l].size() != w_[l].rows()) throw Error("set_spectral_state: warm-start size mismatch");
      if (!(sigmas[l] > 0.0)) throw Error("set_spectral_state: sigma must be positive");
    }
    u_ = us;
    sigma_ = sigmas;
  }

  std::string layout() const {
    std::string s = "mlp:";
    for (std::size_t i = 0; i < opts_.widths.size(); ++i)
      s += (i ? "-" : "") + std::to_string(opts_.widths[i]);
    return s;
  }

  Eigen::Index dim() const override { return opts_.widths.front(); }

  Eigen::Index num_params() const override {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) n += w_[l].size() + b_[l].size();
    return n;
  }

  Vector params() const override {
    Vector p(num_params());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      for (Eigen::Index i = 0; i < w_[l].rows(); ++i)
        for (Eigen::Index j = 0; j < w_[l].cols(); ++j) p[k++] = w_[l](i, j);
      p.segment(k, b_[l].size()) = b_[l];
      k += b_[l].size();
    }
    return p;
  }

  std::string kind() const override { return "mlp"; }

  std::unique_ptr<EnergyModel> clone() const override { return std::make_unique<MlpEnergy>(*this); }

 protected:
  void do_set_params(const Vector& p) override {
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      for (Eigen::Index i = 0; i < w_[l].rows(); ++i)
        for (Eigen::Index j = 0; j < w_[l].cols(); ++j) w_[l](i, j) = p[k++];
      b_[l] = p.segment(k, b_[l].size());
      k += b_[l].size();
    }
  }

  double do_energy(const Vector& x) const override { return do_energies(x.transpose())[0]; }

  Vector do_energy_grad(const Vector& x) const override {
    return do_energy_grads(x.transpose()).row(0).transpose();
  }

  Vector do_param_grad(const Vector& x) const override {
    return do_param_grad_sum(x.transpose(), Vector::Ones(1));
  }

  // The network is piecewise linear in x, so the input Hessian vanishes
  // wherever it exists.
  double do_laplacian(const Vector&) const override { return 0.0; }
  Vector do_laplacian_param_grad(const Vector&) const override { return Vector::Zero(num_params()); }

  Vector do_mixed_param_grad(const Vector& x, const Vector& u) const override {
    return do_mixed_param_grad_sum(x.transpose(), u.transpose(), Vector::Ones(1));
  }

  Vector do_energies(const Matrix& xs) const override {
    Forward f = forward(xs);
    return f.z.back().col(0);
  }

  Matrix do_energy_grads(const Matrix& xs) const override {
    const Forward f = forward(xs);
    const std::vector<Matrix> delta = backward(f);
    return delta.front() * effective_weight(0);
  }

  Vector do_param_grad_sum(const Matrix& xs, const Vector& w) const override {
    const Forward f = forward(xs);
    const std::vector<Matrix> delta = backward(f);
    return assemble(delta, f.h, w, true);
  }

  // d/dtheta of u . grad_x E. The tangent a_dot follows the forward pass with
  // the activation pattern held fixed; bias entries are zero.
  Vector do_mixed_param_grad_sum(const Matrix& xs, const Matrix& us, const Vector& w) const override {
    const Forward f = forward(xs);
    const std::vector<Matrix> delta = backward(f);
    std::vector<Matrix> tangent{us};
    for (std::size_t l = 0; l + 1 < w_.size(); ++l) {
      Matrix zdot = tangent.back() * effective_weight(l).transpose();
      tangent.push_back(zdot.cwiseProduct(slope_mask(f.z[l])));
    }
    return assemble(delta, tangent, w, false);
  }

 private:
  struct Forward {
    std::vector<Matrix> h;  // h[0] = input, h[l] = activation feeding layer l
    std::vector<Matrix> z;  // pre-activations per layer
  };

  void validate_options() const {
    if (opts_.widths.size() < 2) throw Error("MlpEnergy: need at least input and output widths");
    if (opts_.widths.back() != 1) throw Error("MlpEnergy: last width must be 1");
    for (auto w : opts_.widths)
      if (w < 1) throw Error("MlpEnergy: widths must be positive");
    if (!(opts_.leaky_slope > 0.0 && opts_.leaky_slope < 1.0))
      throw Error("MlpEnergy: leaky_slope must lie in (0, 1)");
    if (opts_.power_iters < 1 || opts_.initial_power_iters < 1)
      throw Error("MlpEnergy: power_iters must be >= 1");
  }

  Matrix slope_mask(const Matrix& z) const {
    return (z.array() > 0.0).select(Matrix::Ones(z.rows(), z.cols()), opts_.leaky_slope);
  }

  Forward forward(const Matrix& xs) const {
    Forward f;
    f.h.push_back(xs);
    for (std::size_t l = 0; l < w_.size(); ++l) {
      Matrix z = f.h.back() * effective_weight(l).transpose();
      z.rowwise() += b_[l].transpose();
      if (l + 1 < w_.size()) f.h.push_back((z.array() > 0.0).select(z, opts_.leaky_slope * z));
      f.z.push_back(std::move(z));
    }
    return f;
  }

  // delta[l] = dE/dz_l per row.
  std::vector<Matrix> backward(const Forward& f) const {
    const std::size_t n = w_.size();
    std::vector<Matrix> delta(n);
    delta[n - 1] = Matrix::Ones(f.h[0].rows(), 1);
    for (std::size_t l = n - 1; l > 0; --l)
      delta[l - 1] = (delta[l] * effective_weight(l)).cwiseProduct(slope_mask(f.z[l - 1]));
    return delta;
  }

  Vector assemble(const std::vector<Matrix>& delta, const std::vector<Matrix>& inputs, const Vector& w,
                  bool with_bias) const {
    Vector g(num_params());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      const Matrix wd = delta[l].array().colwise() * w.array();
      const Matrix gw = wd.transpose() * inputs[l] / layer_sigma(l);
      for (Eigen::Index i = 0; i < gw.rows(); ++i)
        for (Eigen::Index j = 0; j < gw.cols(); ++j) g[k++] = gw(i, j);
      const Eigen::Index nb = b_[l].size();
      if (with_bias)
        g.segment(k, nb) = wd.colwise().sum().transpose();
      else
        g.segment(k, nb).setZero();
      k += nb;
    }
    return g;
  }

  MlpOptions opts_;
  std::vector<Matrix> w_;
  std::vector<Vector> b_;
  std::vector<Vector> u_;
  std::vector<double> sigma_;
};

}  // namespace ebmlab
