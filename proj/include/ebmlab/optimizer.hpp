#pragma once

#include "ebmlab/numerics.hpp"

#include <string>

namespace ebmlab {

struct OptimizerConfig {
  std::string kind = "adam";  // "adam" or "sgd"
  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Plain SGD or Adam with bias correction. Minimizes: params -= step(grad).
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(std::move(cfg)) {
    if (cfg_.kind != "adam" && cfg_.kind != "sgd") throw Error("unknown optimizer '" + cfg_.kind + "'");
    if (!(cfg_.lr > 0.0)) throw Error("optimizer: lr must be positive");
    if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0))
      throw Error("optimizer: betas must lie in [0, 1)");
    if (!(cfg_.eps > 0.0)) throw Error("optimizer: eps must be positive");
  }

  const OptimizerConfig& config() const { return cfg_; }
  long steps_taken() const { return t_; }
  const Vector& first_moment() const { return m_; }
  const Vector& second_moment() const { return v_; }

  void restore(long t, Vector m, Vector v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
  }

  Vector step(const Vector& params, const Vector& grad, long iteration = -1) {
    if (params.size() != grad.size()) throw Error("optimizer: parameter/gradient size mismatch");
    if (!grad.allFinite())
      throw Error("optimizer: non-finite gradient" +
                  (iteration >= 0 ? " at iteration " + std::to_string(iteration) : std::string()));
    if (cfg_.kind == "sgd") {
      ++t_;
      return params - cfg_.lr * grad;
    }
    if (m_.size() != grad.size()) {
      m_ = Vector::Zero(grad.size());
      v_ = Vector::Zero(grad.size());
      t_ = 0;
    }
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const Eigen::ArrayXd mhat = m_.array() / c1, vhat = v_.array() / c2;
    return params - (cfg_.lr * mhat / (vhat.sqrt() + cfg_.eps)).matrix();
  }

 private:
  OptimizerConfig cfg_;
  long t_ = 0;
  Vector m_, v_;
};

}  // namespace ebmlab
