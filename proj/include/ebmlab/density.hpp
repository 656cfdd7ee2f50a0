#pragma once

// Normalized densities with exact log-pdf and a direct sampler. Used as
// data targets, fixed NCE noise and replay-buffer priors.

#include "ebmlab/numerics.hpp"

#include <string>

namespace ebmlab {

class Density {
 public:
  virtual ~Density() = default;

  virtual Eigen::Index density_dim() const = 0;
  virtual double log_pdf(const Vector& x) const = 0;
  virtual Vector sample(Rng& rng) const = 0;
  virtual std::string density_name() const = 0;

  /// n draws as rows.
  Matrix sample_n(Eigen::Index n, Rng& rng) const {
    Matrix out(n, density_dim());
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = sample(rng).transpose();
    return out;
  }

  Vector log_pdf_rows(const Matrix& x) const {
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = log_pdf(x.row(i).transpose());
    return out;
  }
};

/// Uniform density on an axis-aligned box.
class UniformBox final : public Density {
 public:
  UniformBox(Vector lo, Vector hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.size() != hi_.size() || lo_.size() == 0) throw Error("UniformBox: bad bounds");
    if (!((hi_ - lo_).array() > 0.0).all()) throw Error("UniformBox: need lo < hi");
    log_volume_ = (hi_ - lo_).array().log().sum();
  }

  /// Bounding box of the rows of `points`, padded by `pad` times its extent.
  static UniformBox bounding(const Matrix& points, double pad = 0.0) {
    if (points.rows() == 0) throw Error("UniformBox: no points");
    Vector lo = points.colwise().minCoeff().transpose();
    Vector hi = points.colwise().maxCoeff().transpose();
    Vector extent = (hi - lo).cwiseMax(1e-6);
    return UniformBox(lo - pad * extent, hi + pad * extent);
  }

  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }

  Eigen::Index density_dim() const override { return lo_.size(); }

  double log_pdf(const Vector& x) const override {
    if (x.size() != lo_.size()) throw Error("UniformBox: dimension mismatch");
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (x[i] < lo_[i] || x[i] > hi_[i]) return -std::numeric_limits<double>::infinity();
    return -log_volume_;
  }

  Vector sample(Rng& rng) const override {
    Vector x(lo_.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(lo_[i], hi_[i]);
    return x;
  }

  std::string density_name() const override { return "uniform_box"; }

 private:
  Vector lo_, hi_;
  double log_volume_;
};

}  // namespace ebmlab
