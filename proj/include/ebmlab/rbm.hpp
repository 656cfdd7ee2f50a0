#pragma once

// Binary restricted Boltzmann machine over +-1 units.
// E(v, h) = -(v^T W h + a^T v + b^T h).

#include "ebmlab/numerics.hpp"

#include <optional>

namespace ebmlab {

class Rbm {
 public:
  Rbm(Matrix w, Vector a, Vector b) : w_(std::move(w)), a_(std::move(a)), b_(std::move(b)) {
    if (w_.rows() != a_.size() || w_.cols() != b_.size()) throw Error("Rbm: shape mismatch");
    if (a_.size() == 0 || b_.size() == 0) throw Error("Rbm: empty layer");
  }

  /// Entries of W, a and b drawn from N(0, scale^2).
  static Rbm random(Eigen::Index n_visible, Eigen::Index n_hidden, double scale, Rng& rng) {
    Matrix w(n_visible, n_hidden);
    for (Eigen::Index i = 0; i < n_visible; ++i)
      for (Eigen::Index j = 0; j < n_hidden; ++j) w(i, j) = scale * rng.normal();
    Vector a = scale * rng.normal_vector(n_visible);
    Vector b = scale * rng.normal_vector(n_hidden);
    return {w, a, b};
  }

  Eigen::Index n_visible() const { return a_.size(); }
  Eigen::Index n_hidden() const { return b_.size(); }
  const Matrix& w() const { return w_; }
  const Vector& a() const { return a_; }
  const Vector& b() const { return b_; }

  double energy(const Vector& v, const Vector& h) const {
    check_state(v, n_visible(), "v");
    check_state(h, n_hidden(), "h");
    return -(v.dot(w_ * h) + a_.dot(v) + b_.dot(h));
  }

  /// Same energy written as explicit sums, kept as a cross-check.
  double energy_sums(const Vector& v, const Vector& h) const {
    check_state(v, n_visible(), "v");
    check_state(h, n_hidden(), "h");
    double e = 0.0;
    for (Eigen::Index i = 0; i < n_visible(); ++i)
      for (Eigen::Index j = 0; j < n_hidden(); ++j) e -= v[i] * w_(i, j) * h[j];
    for (Eigen::Index i = 0; i < n_visible(); ++i) e -= a_[i] * v[i];
    for (Eigen::Index j = 0; j < n_hidden(); ++j) e -= b_[j] * h[j];
    return e;
  }

  /// P(v_i = +1 | h) for each i.
  Vector visible_given_hidden(const Vector& h) const {
    check_state(h, n_hidden(), "h");
    Vector p(n_visible());
    const Vector act = w_ * h + a_;
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = sigmoid(2.0 * act[i]);
    return p;
  }

  /// P(h_j = +1 | v) for each j.
  Vector hidden_given_visible(const Vector& v) const {
    check_state(v, n_visible(), "v");
    Vector p(n_hidden());
    const Vector act = w_.transpose() * v + b_;
    for (Eigen::Index j = 0; j < p.size(); ++j) p[j] = sigmoid(2.0 * act[j]);
    return p;
  }

  static void check_state(const Vector& s, Eigen::Index n, const char* what) {
    if (s.size() != n) throw Error(std::string("Rbm: ") + what + " has wrong length");
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s[i] != 1.0 && s[i] != -1.0) throw Error(std::string("Rbm: ") + what + " entries must be +-1");
  }

 private:
  Matrix w_;
  Vector a_, b_;
};

/// Conditional activation probabilities for whichever layer is absent.
inline Vector rbm_conditionals(const Rbm& rbm, const std::optional<Vector>& v, const std::optional<Vector>& h) {
  if (v.has_value() == h.has_value())
    throw Error("rbm_conditionals: supply exactly one of v and h");
  return v ? rbm.hidden_given_visible(*v) : rbm.visible_given_hidden(*h);
}

/// The +-1 state encoded by the low `n` bits of `code`; bit i set means unit i is +1.
inline Vector rbm_state_from_bits(std::uint64_t code, Eigen::Index n) {
  Vector s(n);
  for (Eigen::Index i = 0; i < n; ++i) s[i] = (code >> i) & 1U ? 1.0 : -1.0;
  return s;
}

inline std::uint64_t rbm_bits_from_state(const Vector& s) {
  std::uint64_t code = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > 0) code |= std::uint64_t{1} << i;
  return code;
}

/// Exact p(v) by enumerating every joint state. Index k of the result is the
/// visible configuration rbm_state_from_bits(k, V).
inline Vector rbm_exact_marginal(const Rbm& rbm) {
  const Eigen::Index nv = rbm.n_visible(), nh = rbm.n_hidden();
  if (nv + nh > 20) throw Error("enumeration too large: V + H = " + std::to_string(nv + nh) + " > 20");
  const std::uint64_t n_v_states = std::uint64_t{1} << nv, n_h_states = std::uint64_t{1} << nh;
  std::vector<Vector> hidden;
  for (std::uint64_t k = 0; k < n_h_states; ++k) hidden.push_back(rbm_state_from_bits(k, nh));
  Vector log_p(static_cast<Eigen::Index>(n_v_states));
  Vector terms(static_cast<Eigen::Index>(n_h_states));
  for (std::uint64_t kv = 0; kv < n_v_states; ++kv) {
    const Vector v = rbm_state_from_bits(kv, nv);
    for (std::uint64_t kh = 0; kh < n_h_states; ++kh)
      terms[static_cast<Eigen::Index>(kh)] = -rbm.energy(v, hidden[kh]);
    log_p[static_cast<Eigen::Index>(kv)] = log_sum_exp(terms);
  }
  const double log_z = log_sum_exp(log_p);
  return (log_p.array() - log_z).exp().matrix();
}

}  // namespace ebmlab
