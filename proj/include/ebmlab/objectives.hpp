#pragma once

// Training objectives and their parameter-gradient estimators. Every
// estimator returns the gradient of the reported loss (to be minimized),
// except mle_grad, which returns the log-likelihood ascent direction.

#include "ebmlab/density.hpp"
#include "ebmlab/energy_model.hpp"
#include "ebmlab/samplers.hpp"

#include <functional>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace ebmlab {

struct GradEstimate {
  double loss = 0.0;
  /// Model-parameter gradient, followed by d/dc when has_log_partition.
  Vector grad;
  bool has_log_partition = false;
  Eigen::Index n_data = 0;
  Eigen::Index n_noise = 0;

  Vector param_grad() const { return has_log_partition ? Vector(grad.head(grad.size() - 1)) : grad; }
  double log_partition_grad() const { return has_log_partition ? grad[grad.size() - 1] : 0.0; }
};

// ---------------------------------------------------------------------------
// Convex generators and (S0, S1) pairs

struct ConvexFunction {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> df;
  bool positive_domain = true;
};

/// Ratio-matching pair derived from a convex Psi: S1 = Psi', S0 = u Psi' - Psi.
/// The *_log members take t = log g and are what the estimators call:
///   s0_log(t) = S0(e^t), s1_log(t) = S1(e^t),
///   w0(t) = S0'(g) g,    w1(t) = S1'(g) g.
struct SPair {
  std::string name;
  std::string psi_description;
  ConvexFunction psi;
  std::function<double(double)> s0, s1, ds0, ds1;
  std::function<double(double)> s0_log, s1_log, w0, w1;
};

namespace detail {

constexpr double kExpClamp = 300.0;

inline double clamped_exp(double z) { return std::exp(std::clamp(z, -kExpClamp, kExpClamp)); }

}  // namespace detail

struct SPairCheck {
  bool ok = true;
  double ratio_residual = 0.0;       // max |S0'(g)/S1'(g) - g|
  double min_ds1 = 0.0;              // min S1'(g) on the grid
  double derivative_residual = 0.0;  // analytic vs finite-difference derivatives
  double log_form_residual = 0.0;    // log-space evaluators vs direct ones
  std::string message;
};

/// Checks S0'(g) / S1'(g) = g and S1'(g) > 0 on g = 0.1, 0.2, ..., 10, plus
/// internal consistency of the derivative and log-space members.
inline SPairCheck check_spair(const SPair& p, double tol = 1e-8) {
  SPairCheck c;
  c.min_ds1 = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 100; ++k) {
    const double g = 0.1 * k;
    const double d0 = p.ds0(g), d1 = p.ds1(g);
    c.min_ds1 = std::min(c.min_ds1, d1);
    c.ratio_residual = std::max(c.ratio_residual, std::abs(d0 / d1 - g));
    const double h = 1e-6 * g;
    const double fd0 = (p.s0(g + h) - p.s0(g - h)) / (2 * h);
    const double fd1 = (p.s1(g + h) - p.s1(g - h)) / (2 * h);
    c.derivative_residual = std::max({c.derivative_residual, std::abs(fd0 - d0) / std::max(1.0, std::abs(d0)),
                                      std::abs(fd1 - d1) / std::max(1.0, std::abs(d1))});
    const double t = std::log(g);
    c.log_form_residual = std::max({c.log_form_residual, std::abs(p.s0_log(t) - p.s0(g)),
                                    std::abs(p.s1_log(t) - p.s1(g)), std::abs(p.w0(t) - d0 * g),
                                    std::abs(p.w1(t) - d1 * g)});
  }
  if (!(c.ratio_residual <= tol)) {
    c.ok = false;
    c.message = "S0'/S1' != g, residual " + std::to_string(c.ratio_residual);
  } else if (!(c.min_ds1 > 0.0)) {
    c.ok = false;
    c.message = "S1' not positive";
  } else if (!(c.derivative_residual <= 1e-5)) {
    c.ok = false;
    c.message = "derivative mismatch, residual " + std::to_string(c.derivative_residual);
  } else if (!(c.log_form_residual <= 1e-10)) {
    c.ok = false;
    c.message = "log-space form mismatch, residual " + std::to_string(c.log_form_residual);
  }
  return c;
}

inline const SPair& validate_spair(const SPair& p) {
  const SPairCheck c = check_spair(p);
  if (!c.ok) throw Error("invalid SPair '" + p.name + "': " + c.message);
  return p;
}

/// Psi(u) = u log u - (1 + u) log(1 + u); recovers NCE.
inline SPair spair_log() {
  SPair p;
  p.name = "log";
  p.psi_description = "u log u - (1+u) log(1+u)";
  p.psi = {"log", [](double u) { return u * std::log(u) - (1 + u) * std::log1p(u); },
           [](double u) { return std::log(u) - std::log1p(u); }, true};
  p.s0 = [](double u) { return std::log1p(u); };
  p.s1 = [](double u) { return std::log(u) - std::log1p(u); };
  p.ds0 = [](double u) { return 1.0 / (1.0 + u); };
  p.ds1 = [](double u) { return 1.0 / (u * (1.0 + u)); };
  p.s0_log = [](double t) { return softplus(t); };
  p.s1_log = [](double t) { return log_sigmoid(t); };
  p.w0 = [](double t) { return sigmoid(t); };
  p.w1 = [](double t) { return sigmoid(-t); };
  return p;
}

/// Psi(u) = u log u.
inline SPair spair_kl() {
  SPair p;
  p.name = "kl";
  p.psi_description = "u log u";
  p.psi = {"kl", [](double u) { return u * std::log(u); }, [](double u) { return std::log(u) + 1.0; }, true};
  p.s0 = [](double u) { return u; };
  p.s1 = [](double u) { return std::log(u) + 1.0; };
  p.ds0 = [](double) { return 1.0; };
  p.ds1 = [](double u) { return 1.0 / u; };
  p.s0_log = [](double t) { return detail::clamped_exp(t); };
  p.s1_log = [](double t) { return t + 1.0; };
  p.w0 = [](double t) { return detail::clamped_exp(t); };
  p.w1 = [](double) { return 1.0; };
  return p;
}

/// Psi(u) = u^2 / 2.
inline SPair spair_quadratic() {
  SPair p;
  p.name = "quadratic";
  p.psi_description = "u^2 / 2";
  p.psi = {"quadratic", [](double u) { return 0.5 * u * u; }, [](double u) { return u; }, false};
  p.s0 = [](double u) { return 0.5 * u * u; };
  p.s1 = [](double u) { return u; };
  p.ds0 = [](double u) { return u; };
  p.ds1 = [](double) { return 1.0; };
  p.s0_log = [](double t) { return 0.5 * detail::clamped_exp(2.0 * t); };
  p.s1_log = [](double t) { return detail::clamped_exp(t); };
  p.w0 = [](double t) { return detail::clamped_exp(2.0 * t); };
  p.w1 = [](double t) { return detail::clamped_exp(t); };
  return p;
}

inline std::vector<SPair> spair_catalog() {
  std::vector<SPair> out{spair_log(), spair_kl(), spair_quadratic()};
  for (const auto& p : out) validate_spair(p);
  return out;
}

inline SPair spair_by_name(const std::string& name) {
  for (auto& p : spair_catalog())
    if (p.name == name) return p;
  throw Error("unknown SPair '" + name + "'");
}

inline double bregman_point(const ConvexFunction& psi, double x, double y) {
  if (psi.positive_domain && !(x > 0.0 && y > 0.0))
    throw Error("bregman_point: " + psi.name + " requires positive arguments");
  return psi.f(x) - psi.f(y) - psi.df(y) * (x - y);
}

inline double bregman_point(const SPair& p, double x, double y) { return bregman_point(p.psi, x, y); }

/// Separable extension: sum of coordinate-wise divergences.
inline double bregman_point(const ConvexFunction& psi, const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw Error("bregman_point: dimension mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += bregman_point(psi, x[i], y[i]);
  return s;
}

// ---------------------------------------------------------------------------
// Noise specifications

struct ExactNoise {
  std::shared_ptr<const Density> density;
};

struct FrozenNoise {
  std::shared_ptr<const EnergyModel> snapshot;
  ChainConfig chain;
  std::shared_ptr<ReplayBuffer> buffer;
};

using NoiseSpec = std::variant<ExactNoise, FrozenNoise>;

inline const Density& require_exact_noise(const NoiseSpec& spec) {
  const auto* exact = std::get_if<ExactNoise>(&spec);
  if (!exact || !exact->density) throw Error("objective requires a noise distribution with an exact log-pdf");
  return *exact->density;
}

namespace detail {

inline void require_rows(const Matrix& m, const char* what) {
  if (m.rows() == 0) throw Error(std::string(what) + ": empty batch");
}

inline Vector with_c(const Vector& g, double gc) {
  Vector out(g.size() + 1);
  out << g, gc;
  return out;
}

inline void require_snapshot(const EnergyModel& model, const EnergyModel& frozen) {
  if (&model == &frozen || !frozen.is_frozen()) throw Error("noise model must be frozen");
  if (frozen.dim() != model.dim()) throw Error("dimension mismatch between model and frozen noise model");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Maximum likelihood

/// grad = mean grad_theta E over model_batch - mean over data_batch (ascent
/// direction of the log-likelihood). loss = mean E(data) - mean E(model).
inline GradEstimate mle_grad(const EnergyModel& model, const Matrix& data, const Matrix& model_batch) {
  detail::require_rows(data, "mle_grad");
  detail::require_rows(model_batch, "mle_grad");
  const double nd = static_cast<double>(data.rows()), nm = static_cast<double>(model_batch.rows());
  GradEstimate g;
  g.n_data = data.rows();
  g.n_noise = model_batch.rows();
  g.loss = model.energies(data).mean() - model.energies(model_batch).mean();
  g.grad = model.param_grad_sum(model_batch, Vector::Constant(model_batch.rows(), 1.0 / nm)) -
           model.param_grad_sum(data, Vector::Constant(data.rows(), 1.0 / nd));
  return g;
}

// ---------------------------------------------------------------------------
// Noise-contrastive estimation

/// Binary NCE with p_theta = exp(-E - c) and ratio v of data to noise samples.
inline GradEstimate nce_binary(const EnergyModel& model, double c, const Density& noise, const Matrix& data,
                               const Matrix& noise_batch, double v = 1.0) {
  detail::require_rows(data, "nce_binary");
  detail::require_rows(noise_batch, "nce_binary");
  if (!(v > 0.0)) throw Error("nce_binary: v must be positive");
  const double lv = std::log(v);
  const Vector ad = lv - model.energies(data).array() - c - noise.log_pdf_rows(data).array();
  const Vector an = lv - model.energies(noise_batch).array() - c - noise.log_pdf_rows(noise_batch).array();
  const double nd = static_cast<double>(data.rows()), nn = static_cast<double>(noise_batch.rows());
  GradEstimate g;
  g.n_data = data.rows();
  g.n_noise = noise_batch.rows();
  g.has_log_partition = true;
  Vector wd(ad.size()), wn(an.size());
  double loss = 0.0, gc = 0.0;
  for (Eigen::Index i = 0; i < ad.size(); ++i) {
    loss -= log_sigmoid(ad[i]) / nd;
    wd[i] = sigmoid(-ad[i]) / nd;
    gc += wd[i];
  }
  for (Eigen::Index i = 0; i < an.size(); ++i) {
    loss -= log_sigmoid(-an[i]) / nn;
    wn[i] = -sigmoid(an[i]) / nn;
    gc += wn[i];
  }
  g.loss = loss;
  g.grad = detail::with_c(model.param_grad_sum(data, wd) + model.param_grad_sum(noise_batch, wn), gc);
  return g;
}

inline GradEstimate nce_binary(const EnergyModel& model, double c, const NoiseSpec& noise, const Matrix& data,
                               const Matrix& noise_batch, double v = 1.0) {
  return nce_binary(model, c, require_exact_noise(noise), data, noise_batch, v);
}

/// Softmax posterior over a collection: logits log rho_i + log p_theta(x_i) - log p_n(x_i).
inline Vector rank_posterior(const EnergyModel& model, double c, const Density& noise, const Matrix& collection,
                             const Vector& rho) {
  const Vector logits = rho.array().log() - model.energies(collection).array() - c -
                        noise.log_pdf_rows(collection).array();
  const double lse = log_sum_exp(logits);
  return (logits.array() - lse).exp().matrix();
}

inline void validate_class_probs(const Vector& rho) {
  if (rho.size() < 2) throw Error("nce_rank: need at least two classes");
  if (!(rho.array() > 0.0).all() || std::abs(rho.sum() - 1.0) > 1e-9)
    throw Error("nce_rank: class probabilities must be positive and sum to 1");
}

/// Rank NCE. collections[n] holds L points; data_index[n] marks the observed one.
inline GradEstimate nce_rank(const EnergyModel& model, double c, const Density& noise,
                             const std::vector<Matrix>& collections, const std::vector<int>& data_index,
                             const Vector& rho) {
  validate_class_probs(rho);
  if (collections.empty()) throw Error("nce_rank: no collections");
  if (collections.size() != data_index.size()) throw Error("nce_rank: one data index per collection required");
  const double n = static_cast<double>(collections.size());
  GradEstimate g;
  g.has_log_partition = true;
  g.n_data = static_cast<Eigen::Index>(collections.size());
  Vector grad = Vector::Zero(model.num_params());
  for (std::size_t k = 0; k < collections.size(); ++k) {
    const Matrix& col = collections[k];
    if (col.rows() != rho.size()) throw Error("nce_rank: collection size must equal the number of classes");
    const int di = data_index[k];
    if (di < 0 || di >= col.rows()) throw Error("nce_rank: data index out of range");
    const Vector post = rank_posterior(model, c, noise, col, rho);
    g.loss -= std::log(post[di]) / n;
    // d(-log post_di)/dtheta = grad E(x_di) - sum_i post_i grad E(x_i)
    Vector w = -post / n;
    w[di] += 1.0 / n;
    grad += model.param_grad_sum(col, w);
    g.n_noise += col.rows() - 1;
  }
  g.grad = detail::with_c(grad, 0.0);  // c cancels inside the softmax
  return g;
}

/// Builds collections by placing each datum at a position drawn from rho and
/// filling the other L - 1 slots with noise draws.
inline std::pair<std::vector<Matrix>, std::vector<int>> make_rank_collections(const Matrix& data,
                                                                              const Density& noise,
                                                                              const Vector& rho, Rng& rng) {
  validate_class_probs(rho);
  std::vector<Matrix> cols;
  std::vector<int> idx;
  const Eigen::Index l = rho.size();
  for (Eigen::Index n = 0; n < data.rows(); ++n) {
    double u = rng.uniform();
    int k = 0;
    for (; k + 1 < l; ++k) {
      if (u < rho[k]) break;
      u -= rho[k];
    }
    Matrix col(l, data.cols());
    for (Eigen::Index i = 0; i < l; ++i) {
      if (i == k)
        col.row(i) = data.row(n);
      else
        col.row(i) = noise.sample(rng).transpose();
    }
    cols.push_back(std::move(col));
    idx.push_back(k);
  }
  return {std::move(cols), std::move(idx)};
}

inline Vector binary_posterior(double log_model, double log_noise, double v = 1.0) {
  Vector p(1);
  p[0] = sigmoid(std::log(v) + log_model - log_noise);
  return p;
}

// ---------------------------------------------------------------------------
// Conditional NCE

/// Data/noise pairs y ~ N(x, sigma^2 I) with kappa draws per datum.
inline Matrix cnce_noise(const Matrix& data, double sigma, int kappa, Rng& rng) {
  if (!(sigma > 0.0)) throw Error("cnce: sigma must be positive");
  if (kappa < 1) throw Error("cnce: kappa must be >= 1");
  Matrix y(data.rows() * kappa, data.cols());
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    for (int k = 0; k < kappa; ++k)
      for (Eigen::Index j = 0; j < data.cols(); ++j)
        y(i * kappa + k, j) = data(i, j) + sigma * rng.normal();
  return y;
}

/// CNCE on explicit pairs (row i of `x` with row i of `y`). The Gaussian
/// kernel is symmetric, so the posterior that x is the datum reduces to
/// sigmoid(E(y) - E(x) - log v). The loss averages the pair presented in both
/// orders: -log sigmoid(E(y) - E(x) - log v) and -log sigmoid(E(y) - E(x) + log v).
inline GradEstimate cnce_pairs(const EnergyModel& model, const Matrix& x, const Matrix& y, double v = 1.0) {
  detail::require_rows(x, "cnce");
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw Error("cnce: pair shape mismatch");
  if (!(v > 0.0)) throw Error("cnce: v must be positive");
  const double lv = std::log(v), n = static_cast<double>(x.rows());
  const Vector delta = model.energies(y) - model.energies(x);
  Vector wy(x.rows());
  GradEstimate g;
  g.n_data = x.rows();
  g.n_noise = y.rows();
  for (Eigen::Index i = 0; i < delta.size(); ++i) {
    g.loss -= 0.5 * (log_sigmoid(delta[i] - lv) + log_sigmoid(delta[i] + lv)) / n;
    wy[i] = -0.5 * (sigmoid(lv - delta[i]) + sigmoid(-lv - delta[i])) / n;
  }
  g.grad = model.param_grad_sum(y, wy) - model.param_grad_sum(x, wy);
  return g;
}

inline double cnce_posterior(const EnergyModel& model, const Vector& x, const Vector& y, double v = 1.0) {
  return sigmoid(model.energy(y) - model.energy(x) - std::log(v));
}

inline GradEstimate cnce(const EnergyModel& model, const Matrix& data, double sigma, int kappa, double v,
                         Rng& rng) {
  detail::require_rows(data, "cnce");
  const Matrix y = cnce_noise(data, sigma, kappa, rng);
  Matrix x(y.rows(), data.cols());
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    for (int k = 0; k < kappa; ++k) x.row(i * kappa + k) = data.row(i);
  return cnce_pairs(model, x, y, v);
}

// ---------------------------------------------------------------------------
// Self-adapting NCE and Bregman ratio matching

/// Equal-prior classification between data and samples of a frozen copy of
/// the model, on unnormalized densities.
inline GradEstimate adance(const EnergyModel& model, const EnergyModel& frozen, const Matrix& data,
                           const Matrix& noise_batch) {
  detail::require_snapshot(model, frozen);
  detail::require_rows(data, "adance");
  detail::require_rows(noise_batch, "adance");
  const Vector ed = model.energies(data), edm = frozen.energies(data);
  const Vector en = model.energies(noise_batch), enm = frozen.energies(noise_batch);
  const double nd = static_cast<double>(data.rows()), nn = static_cast<double>(noise_batch.rows());
  GradEstimate g;
  g.n_data = data.rows();
  g.n_noise = noise_batch.rows();
  Vector wd(ed.size()), wn(en.size());
  for (Eigen::Index i = 0; i < ed.size(); ++i) {
    g.loss -= log_sigmoid(edm[i] - ed[i]) / nd;
    wd[i] = sigmoid(ed[i] - edm[i]) / nd;
  }
  for (Eigen::Index i = 0; i < en.size(); ++i) {
    g.loss -= log_sigmoid(en[i] - enm[i]) / nn;
    wn[i] = -sigmoid(enm[i] - en[i]) / nn;
  }
  g.grad = model.param_grad_sum(data, wd) + model.param_grad_sum(noise_batch, wn);
  return g;
}

namespace detail {

inline const double kLogRatioMax = std::log(1e300);

inline void check_log_ratio(const Vector& t, const Matrix& pts) {
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (!(t[i] <= kLogRatioMax)) {
      std::ostringstream os;
      os << "ratio overflow at point (" << pts.row(i) << "), log ratio " << t[i];
      throw Error(os.str());
    }
  }
}

// L = mean_noise S0(g) - mean_data S1(g), with log g = t. Returns the loss and
// the per-row weights on grad_theta E, and accumulates d/dt weights for c.
struct RatioTerms {
  double loss = 0.0;
  Vector wd, wn;
  double dt_sum = 0.0;  // sum over rows of dL/dt
};

inline RatioTerms ratio_terms(const SPair& sp, const Vector& td, const Vector& tn) {
  RatioTerms r;
  const double nd = static_cast<double>(td.size()), nn = static_cast<double>(tn.size());
  r.wd.resize(td.size());
  r.wn.resize(tn.size());
  // dt/dtheta = -grad E, so dL/dtheta = sum (dL/dt) (-grad E).
  for (Eigen::Index i = 0; i < tn.size(); ++i) {
    r.loss += sp.s0_log(tn[i]) / nn;
    const double dl_dt = sp.w0(tn[i]) / nn;
    r.wn[i] = -dl_dt;
    r.dt_sum += dl_dt;
  }
  for (Eigen::Index i = 0; i < td.size(); ++i) {
    r.loss -= sp.s1_log(td[i]) / nd;
    const double dl_dt = -sp.w1(td[i]) / nd;
    r.wd[i] = -dl_dt;
    r.dt_sum += dl_dt;
  }
  return r;
}

}  // namespace detail

/// Bregman ratio matching against fixed noise: g = exp(-E - c) / p_n.
inline GradEstimate brm(const EnergyModel& model, double c, const Density& noise, const SPair& sp,
                        const Matrix& data, const Matrix& noise_batch) {
  detail::require_rows(data, "brm");
  detail::require_rows(noise_batch, "brm");
  const Vector td = -model.energies(data).array() - c - noise.log_pdf_rows(data).array();
  const Vector tn = -model.energies(noise_batch).array() - c - noise.log_pdf_rows(noise_batch).array();
  detail::check_log_ratio(td, data);
  detail::check_log_ratio(tn, noise_batch);
  const detail::RatioTerms r = detail::ratio_terms(sp, td, tn);
  GradEstimate g;
  g.n_data = data.rows();
  g.n_noise = noise_batch.rows();
  g.has_log_partition = true;
  g.loss = r.loss;
  // dt/dc = -1
  g.grad = detail::with_c(model.param_grad_sum(data, r.wd) + model.param_grad_sum(noise_batch, r.wn), -r.dt_sum);
  return g;
}

inline GradEstimate brm(const EnergyModel& model, double c, const NoiseSpec& noise, const SPair& sp,
                        const Matrix& data, const Matrix& noise_batch) {
  return brm(model, c, require_exact_noise(noise), sp, data, noise_batch);
}

/// Bregman ratio matching against a frozen copy: g = exp(E_m - E_theta).
inline GradEstimate adabrm(const EnergyModel& model, const EnergyModel& frozen, const SPair& sp,
                           const Matrix& data, const Matrix& noise_batch) {
  detail::require_snapshot(model, frozen);
  detail::require_rows(data, "adabrm");
  detail::require_rows(noise_batch, "adabrm");
  const Vector td = frozen.energies(data) - model.energies(data);
  const Vector tn = frozen.energies(noise_batch) - model.energies(noise_batch);
  detail::check_log_ratio(td, data);
  detail::check_log_ratio(tn, noise_batch);
  const detail::RatioTerms r = detail::ratio_terms(sp, td, tn);
  GradEstimate g;
  g.n_data = data.rows();
  g.n_noise = noise_batch.rows();
  g.loss = r.loss;
  g.grad = model.param_grad_sum(data, r.wd) + model.param_grad_sum(noise_batch, r.wn);
  return g;
}

// ---------------------------------------------------------------------------
// Score matching

/// Implicit score matching: mean of 1/2 ||grad E||^2 - Tr(hess E).
inline GradEstimate sm_implicit(const EnergyModel& model, const Matrix& data) {
  detail::require_rows(data, "sm_implicit");
  const double n = static_cast<double>(data.rows());
  const Matrix grads = model.energy_grads(data);
  GradEstimate g;
  g.n_data = data.rows();
  Vector lap_grad = Vector::Zero(model.num_params());
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const Vector x = data.row(i).transpose();
    g.loss += (0.5 * grads.row(i).squaredNorm() - model.laplacian(x)) / n;
    lap_grad += model.laplacian_param_grad(x);
  }
  g.grad = model.mixed_param_grad_sum(data, grads, Vector::Constant(data.rows(), 1.0 / n)) - lap_grad / n;
  return g;
}

/// Conditional-form DSM on given noisy points: target (x - x_noisy) / sigma^2.
inline GradEstimate sm_denoising_pairs(const EnergyModel& model, const Matrix& clean, const Matrix& noisy,
                                       double sigma) {
  if (!(sigma > 0.0)) throw Error("sm_denoising: sigma must be positive");
  detail::require_rows(clean, "sm_denoising");
  if (clean.rows() != noisy.rows() || clean.cols() != noisy.cols())
    throw Error("sm_denoising: clean/noisy shape mismatch");
  const double n = static_cast<double>(clean.rows());
  const Matrix target = (clean - noisy) / (sigma * sigma);
  const Matrix resid = target + model.energy_grads(noisy);  // target - score
  GradEstimate g;
  g.n_data = clean.rows();
  g.loss = 0.5 * resid.rowwise().squaredNorm().mean();
  g.grad = model.mixed_param_grad_sum(noisy, resid, Vector::Constant(clean.rows(), 1.0 / n));
  return g;
}

inline Matrix perturb(const Matrix& data, double sigma, Rng& rng) {
  Matrix out = data;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) += sigma * rng.normal();
  return out;
}

inline GradEstimate sm_denoising(const EnergyModel& model, const Matrix& data, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw Error("sm_denoising: sigma must be positive");
  return sm_denoising_pairs(model, data, perturb(data, sigma, rng), sigma);
}

/// Explicit form: match the exact score of the smoothed data density, given
/// as an energy whose negative gradient is that score.
inline GradEstimate sm_denoising_explicit(const EnergyModel& model, const EnergyModel& smoothed_target,
                                          const Matrix& noisy) {
  detail::require_rows(noisy, "sm_denoising_explicit");
  const double n = static_cast<double>(noisy.rows());
  const Matrix resid = model.energy_grads(noisy) - smoothed_target.energy_grads(noisy);
  GradEstimate g;
  g.n_data = noisy.rows();
  g.loss = 0.5 * resid.rowwise().squaredNorm().mean();
  g.grad = model.mixed_param_grad_sum(noisy, resid, Vector::Constant(noisy.rows(), 1.0 / n));
  return g;
}

/// Per-sample parameter gradients (rows) of the conditional DSM loss.
inline Matrix sm_denoising_sample_grads(const EnergyModel& model, const Matrix& clean, const Matrix& noisy,
                                        double sigma) {
  const Matrix resid = (clean - noisy) / (sigma * sigma) + model.energy_grads(noisy);
  Matrix out(clean.rows(), model.num_params());
  for (Eigen::Index i = 0; i < clean.rows(); ++i)
    out.row(i) = model.mixed_param_grad(noisy.row(i).transpose(), resid.row(i).transpose()).transpose();
  return out;
}

/// Per-sample parameter gradients (rows) of the explicit DSM loss.
inline Matrix sm_denoising_explicit_sample_grads(const EnergyModel& model, const EnergyModel& smoothed_target,
                                                 const Matrix& noisy) {
  const Matrix resid = model.energy_grads(noisy) - smoothed_target.energy_grads(noisy);
  Matrix out(noisy.rows(), model.num_params());
  for (Eigen::Index i = 0; i < noisy.rows(); ++i)
    out.row(i) = model.mixed_param_grad(noisy.row(i).transpose(), resid.row(i).transpose()).transpose();
  return out;
}

enum class ProjectionDist { rademacher, gaussian };

/// All 2^d sign vectors as rows.
inline Matrix rademacher_all(Eigen::Index d) {
  if (d < 1 || d > 20) throw Error("rademacher_all: d must lie in [1, 20]");
  const std::uint64_t n = std::uint64_t{1} << d;
  Matrix out(static_cast<Eigen::Index>(n), d);
  for (std::uint64_t k = 0; k < n; ++k)
    for (Eigen::Index j = 0; j < d; ++j) out(static_cast<Eigen::Index>(k), j) = (k >> j) & 1U ? 1.0 : -1.0;
  return out;
}

inline Matrix draw_projections(Eigen::Index n, Eigen::Index d, ProjectionDist dist, Rng& rng) {
  Matrix v(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      v(i, j) = dist == ProjectionDist::gaussian ? rng.normal() : (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return v;
}

namespace detail {

// Row r of x is paired with row r of v.
inline GradEstimate sliced_pairs(const EnergyModel& model, const Matrix& x, const Matrix& v, double fd_step) {
  const Eigen::Index rows = x.rows(), d = x.cols();
  const Matrix xp = x + fd_step * v, xm = x - fd_step * v;
  const Vector vg = (model.energy_grads(x).array() * v.array()).rowwise().sum();
  const Vector vgp = (model.energy_grads(xp).array() * v.array()).rowwise().sum();
  const Vector vgm = (model.energy_grads(xm).array() * v.array()).rowwise().sum();
  const double inv = 1.0 / static_cast<double>(rows);
  GradEstimate g;
  // 1/2 (v.s)^2 + v^T (grad s) v with s = -grad E
  g.loss = (0.5 * vg.array().square() - (vgp - vgm).array() / (2 * fd_step)).sum() * inv;
  Matrix pts(3 * rows, d), dirs(3 * rows, d);
  Vector w(3 * rows);
  pts << x, xp, xm;
  dirs << (v.array().colwise() * vg.array()).matrix(), v, v;
  w << Vector::Constant(rows, inv), Vector::Constant(rows, -inv / (2 * fd_step)),
      Vector::Constant(rows, inv / (2 * fd_step));
  g.grad = model.mixed_param_grad_sum(pts, dirs, w);
  return g;
}

}  // namespace detail

/// Sliced score matching where every datum uses every row of `projections`.
/// v^T (grad_x s) v comes from a central difference of the score along v.
inline GradEstimate sm_sliced_with(const EnergyModel& model, const Matrix& data, const Matrix& projections,
                                   double fd_step = 1e-4) {
  detail::require_rows(data, "sm_sliced");
  if (projections.rows() < 1) throw Error("sm_sliced: need at least one projection");
  if (projections.cols() != data.cols()) throw Error("sm_sliced: projection dimension mismatch");
  const Eigen::Index n = data.rows(), m = projections.rows(), d = data.cols();
  Matrix x(n * m, d), v(n * m, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < m; ++k) {
      x.row(i * m + k) = data.row(i);
      v.row(i * m + k) = projections.row(k);
    }
  GradEstimate g = detail::sliced_pairs(model, x, v, fd_step);
  g.n_data = n;
  return g;
}

/// Sliced score matching with n_projections fresh directions per datum.
inline GradEstimate sm_sliced(const EnergyModel& model, const Matrix& data, int n_projections,
                              ProjectionDist dist, Rng& rng) {
  if (n_projections < 1) throw Error("sm_sliced: n_projections must be >= 1");
  detail::require_rows(data, "sm_sliced");
  const Eigen::Index n = data.rows(), d = data.cols();
  Matrix x(n * n_projections, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < n_projections; ++k) x.row(i * n_projections + k) = data.row(i);
  GradEstimate g = detail::sliced_pairs(model, x, draw_projections(x.rows(), d, dist, rng), 1e-4);
  g.n_data = n;
  return g;
}

}  // namespace ebmlab
