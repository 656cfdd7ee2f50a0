#pragma once

// Dense linear algebra helpers, seeded randomness and Gaussian moment fitting.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ebmlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base error type for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Seeded 64-bit Mersenne twister with hand-rolled distributions so that a
/// seed yields the same draw sequence regardless of the standard library.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n) by rejection (no modulo bias).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw Error("uniform_index: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  Vector normal_vector(Eigen::Index d) {
    Vector out(d);
    for (Eigen::Index i = 0; i < d; ++i) out[i] = normal();
    return out;
  }

  /// Independent child stream derived from this generator's seed and a
  /// stream index (splitmix64 finalizer).
  Rng split(std::uint64_t stream) const {
    std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return Rng(z);
  }

  /// Full generator state as text; restoring it reproduces the sequence.
  std::string state() const {
    std::ostringstream os;
    os << seed_ << ' ' << has_spare_ << ' ';
    os << std::hexfloat << spare_ << std::defaultfloat << ' ' << engine_;
    return os.str();
  }

  static Rng from_state(const std::string& text) {
    std::istringstream is(text);
    Rng r;
    std::string spare_text;
    if (!(is >> r.seed_ >> r.has_spare_ >> spare_text >> r.engine_))
      throw Error("corrupt rng state");
    r.spare_ = std::strtod(spare_text.c_str(), nullptr);
    return r;
  }

  bool operator==(const Rng& o) const {
    return seed_ == o.seed_ && engine_ == o.engine_ && has_spare_ == o.has_spare_ &&
           (!has_spare_ || spare_ == o.spare_);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct SymmetricEigen {
  Vector values;   // unsorted, aligned with columns of vectors
  Matrix vectors;  // orthonormal columns
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
inline SymmetricEigen jacobi_eigen(const Matrix& m, int max_sweeps = 100, double tol = 1e-15) {
  if (m.rows() != m.cols()) throw Error("jacobi_eigen: matrix not square");
  const Eigen::Index n = m.rows();
  Matrix a = 0.5 * (m + m.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= tol * scale) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  return {a.diagonal(), v};
}

struct SpectralEstimate {
  double sigma;
  Vector u;  // left singular vector estimate, length rows(W)
  Vector v;  // right singular vector estimate, length cols(W)
};

/// Power iteration for the largest singular value, continuing from the
/// supplied left vector `u` (warm start).
inline SpectralEstimate power_iteration_warm(const Matrix& w, int n_iters, const Vector& u0) {
  if (n_iters < 1) throw Error("power iteration: n_iters must be >= 1");
  if (!all_finite(w)) throw Error("power iteration: non-finite matrix entries");
  if (w.size() == 0 || (w.array() == 0.0).all()) throw Error("degenerate spectrum");
  if (u0.size() != w.rows()) throw Error("power iteration: warm-start size mismatch");
  Vector u = u0;
  Vector v(w.cols());
  for (int i = 0; i < n_iters; ++i) {
    v = w.transpose() * u;
    const double vn = v.norm();
    if (!(vn > 0.0)) throw Error("degenerate spectrum");
    v /= vn;
    u = w * v;
    const double un = u.norm();
    if (!(un > 0.0)) throw Error("degenerate spectrum");
    u /= un;
  }
  return {u.dot(w * v), u, v};
}

inline SpectralEstimate power_iteration_sigma_max(const Matrix& w, int n_iters, Rng& rng) {
  Vector u0 = rng.normal_vector(w.rows());
  const double n = u0.norm();
  if (n > 0.0) u0 /= n;
  return power_iteration_warm(w, n_iters, u0);
}

inline void require_symmetric(const Matrix& m, double tol, const char* what) {
  if (m.rows() != m.cols()) throw Error(std::string(what) + ": matrix not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * scale)
    throw Error(std::string(what) + ": matrix not symmetric");
}

/// Symmetric square root of a PSD matrix. Eigenvalues in [-1e-9, 0] are
/// clamped to zero; anything more negative is rejected.
inline Matrix psd_sqrt(const Matrix& m) {
  require_symmetric(m, 1e-9, "psd_sqrt");
  if (!all_finite(m)) throw Error("psd_sqrt: non-finite matrix entries");
  const SymmetricEigen eig = jacobi_eigen(m);
  Vector root(eig.values.size());
  for (Eigen::Index i = 0; i < root.size(); ++i) {
    const double lam = eig.values[i];
    if (lam < -1e-9) throw Error("not PSD: eigenvalue " + std::to_string(lam));
    root[i] = lam > 0.0 ? std::sqrt(lam) : 0.0;
  }
  Matrix r = eig.vectors * root.asDiagonal() * eig.vectors.transpose();
  return 0.5 * (r + r.transpose());
}

struct GaussianSummary {
  Vector mean;
  Matrix cov;
};

/// Sample mean and unbiased covariance of the rows of `samples`.
inline GaussianSummary gaussian_fit(const Matrix& samples) {
  const Eigen::Index n = samples.rows();
  if (n < 2) throw Error("insufficient samples: need at least 2, got " + std::to_string(n));
  Vector mean = samples.colwise().mean().transpose();
  Matrix centered = samples.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.transpose());
  return {mean, cov};
}

inline double log_sigmoid(double z) {
  return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double log_sum_exp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace ebmlab
