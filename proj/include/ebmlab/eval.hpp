#pragma once

// Sample-quality and fit metrics: Frechet distance between Gaussian fits,
// exact log-likelihood under analytic targets, and grid-quadrature KL.

#include "ebmlab/density.hpp"
#include "ebmlab/energy_model.hpp"

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace ebmlab {

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}). The trace of the
/// cross term is evaluated as Tr((R S_b R)^{1/2}) with R = S_a^{1/2}, which is
/// symmetric and has the same eigenvalues as (S_a S_b)^{1/2}.
inline double frechet_gaussian(const GaussianSummary& a, const GaussianSummary& b) {
  const Eigen::Index d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || b.cov.rows() != d || a.cov.cols() != d || b.cov.cols() != d)
    throw Error("frechet_gaussian: dimension mismatch");
  const Matrix r = psd_sqrt(a.cov);
  Matrix inner = r * b.cov * r;
  inner = 0.5 * (inner + inner.transpose());
  const double cross = psd_sqrt(inner).trace();
  const double value = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(0.0, value);
}

inline double frechet_samples(const Matrix& a, const Matrix& b) {
  return frechet_gaussian(gaussian_fit(a), gaussian_fit(b));
}

/// Mean exact log-density of the rows of `samples`.
inline double oracle_log_likelihood(const Density& target, const Matrix& samples) {
  if (samples.rows() == 0) throw Error("oracle_log_likelihood: no samples");
  return target.log_pdf_rows(samples).mean();
}

struct GridAxis {
  double lo;
  double hi;
  int n_points;
};

struct GridSpec {
  std::vector<GridAxis> axes;

  static GridSpec uniform(Eigen::Index d, double lo, double hi, int n) {
    return {std::vector<GridAxis>(static_cast<std::size_t>(d), GridAxis{lo, hi, n})};
  }

  void validate() const {
    if (axes.empty() || axes.size() > 3) throw Error("grid_kl: grid dimension must be 1, 2 or 3");
    for (const auto& a : axes) {
      if (!(a.lo < a.hi)) throw Error("grid_kl: need lo < hi on every axis");
      if (a.n_points < 16) throw Error("grid_kl: need at least 16 points per axis");
    }
  }

  std::size_t total_points() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= static_cast<std::size_t>(a.n_points);
    return n;
  }

  /// Grid nodes as rows plus log trapezoid weights.
  std::pair<Matrix, Vector> nodes() const {
    validate();
    const std::size_t total = total_points();
    const Eigen::Index d = static_cast<Eigen::Index>(axes.size());
    Matrix pts(static_cast<Eigen::Index>(total), d);
    Vector logw(static_cast<Eigen::Index>(total));
    for (std::size_t k = 0; k < total; ++k) {
      std::size_t rem = k;
      double lw = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const GridAxis& a = axes[static_cast<std::size_t>(j)];
        const std::size_t i = rem % static_cast<std::size_t>(a.n_points);
        rem /= static_cast<std::size_t>(a.n_points);
        const double h = (a.hi - a.lo) / (a.n_points - 1);
        pts(static_cast<Eigen::Index>(k), j) = a.lo + h * static_cast<double>(i);
        const bool edge = i == 0 || i + 1 == static_cast<std::size_t>(a.n_points);
        lw += std::log(edge ? 0.5 * h : h);
      }
      logw[static_cast<Eigen::Index>(k)] = lw;
    }
    return {pts, logw};
  }
};

struct GridKlResult {
  double kl;
  double coverage;  // trapezoid mass of the target on the grid
  double model_log_z;  // log of the quadrature integral of exp(-E)
};

inline GridKlResult grid_kl_detail(const EnergyModel& model, const Density& target, const GridSpec& grid,
                                   double min_coverage = 0.999) {
  grid.validate();
  if (static_cast<Eigen::Index>(grid.axes.size()) != model.dim() || target.density_dim() != model.dim())
    throw Error("grid_kl: grid, model and target dimensions must agree");
  const auto [pts, logw] = grid.nodes();
  const Vector log_t = target.log_pdf_rows(pts);
  const Vector log_m = -model.energies(pts);
  const double coverage = std::exp(log_sum_exp(log_t + logw));
  if (!(coverage >= min_coverage))
    throw Error("grid_kl: insufficient grid coverage " + std::to_string(coverage) + " < " +
                std::to_string(min_coverage));
  const double log_zt = log_sum_exp(log_t + logw);
  const double log_zm = log_sum_exp(log_m + logw);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const double lp = log_t[i] - log_zt;
    if (!std::isfinite(lp)) continue;
    kl += std::exp(lp + logw[i]) * (lp - (log_m[i] - log_zm));
  }
  return {kl, coverage, log_zm};
}

/// KL(target || model) in nats with the model normalized on the grid.
inline double grid_kl(const EnergyModel& model, const Density& target, const GridSpec& grid) {
  return grid_kl_detail(model, target, grid).kl;
}

/// 64-bit FNV-1a hash, hex encoded.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

inline void write_eval_header(std::ostream& os) { os << "run_id,metric,value,config_hash\n"; }

inline void write_eval_row(std::ostream& os, const std::string& run_id, const std::string& metric, double value,
                           const std::string& config_hash) {
  std::ostringstream v;
  v.precision(17);
  v << value;
  os << run_id << ',' << metric << ',' << v.str() << ',' << config_hash << '\n';
}

}  // namespace ebmlab
