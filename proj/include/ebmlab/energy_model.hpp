#pragma once

// The contract shared by every continuous energy function E(x):
// p(x) is proportional to exp(-E(x)); the partition function is never formed.

#include "ebmlab/numerics.hpp"

#include <memory>
#include <string>

namespace ebmlab {

class EnergyModel {
 public:
  virtual ~EnergyModel() = default;

  virtual Eigen::Index dim() const = 0;
  virtual Eigen::Index num_params() const = 0;
  virtual Vector params() const = 0;
  virtual std::string kind() const = 0;

  void set_params(const Vector& p) {
    if (frozen_) throw Error("frozen model is read-only");
    if (p.size() != num_params())
      throw Error("set_params: expected " + std::to_string(num_params()) + " parameters, got " +
                  std::to_string(p.size()));
    do_set_params(p);
  }

  double energy(const Vector& x) const {
    check_dim(x);
    return do_energy(x);
  }

  /// Gradient of the energy with respect to the input.
  Vector energy_grad(const Vector& x) const {
    check_dim(x);
    return do_energy_grad(x);
  }

  /// Input score: grad_x log p(x) = -grad_x E(x).
  Vector score(const Vector& x) const { return -energy_grad(x); }

  /// Gradient of the energy with respect to the flat parameter vector.
  Vector param_grad(const Vector& x) const {
    check_dim(x);
    return do_param_grad(x);
  }

  /// Trace of the input Hessian of E.
  double laplacian(const Vector& x) const {
    check_dim(x);
    return do_laplacian(x);
  }

  /// Parameter gradient of the input-Hessian trace of E.
  Vector laplacian_param_grad(const Vector& x) const {
    check_dim(x);
    return do_laplacian_param_grad(x);
  }

  /// Parameter gradient of u . grad_x E(x), the mixed second derivative
  /// applied along the input direction u.
  Vector mixed_param_grad(const Vector& x, const Vector& u) const {
    check_dim(x);
    check_dim(u);
    return do_mixed_param_grad(x, u);
  }

  // Batched forms operate on points stored as rows.

  Vector energies(const Matrix& xs) const {
    check_cols(xs);
    return do_energies(xs);
  }

  Matrix energy_grads(const Matrix& xs) const {
    check_cols(xs);
    return do_energy_grads(xs);
  }

  /// sum_i w_i grad_theta E(x_i).
  Vector param_grad_sum(const Matrix& xs, const Vector& w) const {
    check_cols(xs);
    if (w.size() != xs.rows()) throw Error("param_grad_sum: weight count mismatch");
    return do_param_grad_sum(xs, w);
  }

  /// sum_i w_i grad_theta (u_i . grad_x E(x_i)).
  Vector mixed_param_grad_sum(const Matrix& xs, const Matrix& us, const Vector& w) const {
    check_cols(xs);
    check_cols(us);
    if (us.rows() != xs.rows() || w.size() != xs.rows())
      throw Error("mixed_param_grad_sum: row count mismatch");
    return do_mixed_param_grad_sum(xs, us, w);
  }

  virtual std::unique_ptr<EnergyModel> clone() const = 0;

  /// Deep copy marked frozen: its parameters can no longer be set.
  std::unique_ptr<EnergyModel> snapshot() const {
    auto copy = clone();
    copy->frozen_ = true;
    return copy;
  }

  bool is_frozen() const { return frozen_; }

 protected:
  EnergyModel() = default;
  EnergyModel(const EnergyModel&) = default;
  EnergyModel& operator=(const EnergyModel&) = default;

  virtual void do_set_params(const Vector& p) = 0;
  virtual double do_energy(const Vector& x) const = 0;
  virtual Vector do_energy_grad(const Vector& x) const = 0;
  virtual Vector do_param_grad(const Vector& x) const = 0;

  // Central finite differences of the analytic input gradient.
  virtual double do_laplacian(const Vector& x) const {
    constexpr double h = 1e-4;
    double tr = 0.0;
    Vector xp = x, xm = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      xp[i] += h;
      xm[i] -= h;
      tr += (do_energy_grad(xp)[i] - do_energy_grad(xm)[i]) / (2 * h);
      xp[i] = x[i];
      xm[i] = x[i];
    }
    return tr;
  }

  virtual Vector do_laplacian_param_grad(const Vector& x) const {
    Vector total = Vector::Zero(num_params());
    Vector e = Vector::Zero(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      e[i] = 1.0;
      constexpr double h = 1e-4;
      total += (do_mixed_param_grad(x + h * e, e) - do_mixed_param_grad(x - h * e, e)) / (2 * h);
      e[i] = 0.0;
    }
    return total;
  }

  virtual Vector do_mixed_param_grad(const Vector& x, const Vector& u) const {
    const double n = u.norm();
    if (n == 0.0) return Vector::Zero(num_params());
    constexpr double h = 1e-5;
    const Vector step = (h / n) * u;
    return (do_param_grad(x + step) - do_param_grad(x - step)) * (n / (2 * h));
  }

  virtual Vector do_energies(const Matrix& xs) const {
    Vector out(xs.rows());
    for (Eigen::Index i = 0; i < xs.rows(); ++i) out[i] = do_energy(xs.row(i).transpose());
    return out;
  }

  virtual Matrix do_energy_grads(const Matrix& xs) const {
    Matrix out(xs.rows(), xs.cols());
    for (Eigen::Index i = 0; i < xs.rows(); ++i)
      out.row(i) = do_energy_grad(xs.row(i).transpose()).transpose();
    return out;
  }

  virtual Vector do_param_grad_sum(const Matrix& xs, const Vector& w) const {
    Vector total = Vector::Zero(num_params());
    for (Eigen::Index i = 0; i < xs.rows(); ++i)
      if (w[i] != 0.0) total += w[i] * do_param_grad(xs.row(i).transpose());
    return total;
  }

  virtual Vector do_mixed_param_grad_sum(const Matrix& xs, const Matrix& us, const Vector& w) const {
    Vector total = Vector::Zero(num_params());
    for (Eigen::Index i = 0; i < xs.rows(); ++i)
      if (w[i] != 0.0)
        total += w[i] * do_mixed_param_grad(xs.row(i).transpose(), us.row(i).transpose());
    return total;
  }

 private:
  void check_dim(const Vector& x) const {
    if (x.size() != dim())
      throw Error("dimension mismatch: model dim " + std::to_string(dim()) + ", input dim " +
                  std::to_string(x.size()));
  }
  void check_cols(const Matrix& xs) const {
    if (xs.cols() != dim())
      throw Error("dimension mismatch: model dim " + std::to_string(dim()) + ", input dim " +
                  std::to_string(xs.cols()));
  }

  bool frozen_ = false;
};

}  // namespace ebmlab
