#pragma once

// MCMC kernels (Metropolis-Hastings, Langevin, HMC, RBM block Gibbs), the
// persistent replay buffer and the nu gradient-magnitude diagnostic.

#include "ebmlab/density.hpp"
#include "ebmlab/energy_model.hpp"
#include "ebmlab/rbm.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace ebmlab {

enum class NoiseMode { matched, decoupled };

struct ChainConfig {
  int steps = 100;                 // K
  double step_size = 0.01;         // tau
  double noise_scale = 0.1;        // used only in decoupled mode
  NoiseMode noise_mode = NoiseMode::matched;
  bool metropolis_adjust = false;  // MALA when on
  int leapfrog_steps = 20;         // L
  double leapfrog_eps = 0.1;
  Matrix mass;                     // empty means identity
  double divergence_threshold = 1e6;

  /// Noise standard deviation applied per Langevin step.
  double langevin_noise() const {
    return noise_mode == NoiseMode::matched ? std::sqrt(step_size) : noise_scale;
  }

  static ChainConfig matched(double tau, int k) {
    ChainConfig c;
    c.step_size = tau;
    c.steps = k;
    c.noise_mode = NoiseMode::matched;
    return c;
  }

  /// Step size 1, noise std 0.005, 100 steps, noise decoupled from the step.
  static ChainConfig paper() {
    ChainConfig c;
    c.step_size = 1.0;
    c.noise_scale = 0.005;
    c.steps = 100;
    c.noise_mode = NoiseMode::decoupled;
    return c;
  }

  void validate() const {
    if (steps < 0) throw Error("ChainConfig: steps must be >= 0");
    if (!(step_size >= 0.0) || !std::isfinite(step_size)) throw Error("ChainConfig: step_size must be >= 0");
    if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) throw Error("ChainConfig: noise_scale must be >= 0");
    if (leapfrog_steps < 1) throw Error("ChainConfig: leapfrog_steps must be >= 1");
    if (!(leapfrog_eps > 0.0)) throw Error("ChainConfig: leapfrog_eps must be > 0");
  }
};

struct ChainDiagnostics {
  double acceptance_rate = 1.0;
  double nu = 0.0;
  std::vector<double> energies;
  std::size_t rejected_nonfinite = 0;
};

/// Raised when a Langevin chain produces a score norm beyond the threshold.
class SamplerDiverged : public Error {
 public:
  SamplerDiverged(int step, std::vector<double> nu_history)
      : Error("sampler diverged at step " + std::to_string(step)), step_(step),
        nu_history_(std::move(nu_history)) {}
  int step() const { return step_; }
  const std::vector<double>& nu_history() const { return nu_history_; }

 private:
  int step_;
  std::vector<double> nu_history_;
};

// ---------------------------------------------------------------------------
// Metropolis-Hastings

struct Proposal {
  Vector x;
  double log_q_forward;  // log q(x* | x)
  double log_q_reverse;  // log q(x | x*)
};

struct MhResult {
  Matrix samples;  // one row per step
  ChainDiagnostics diag;
};

inline double mh_log_acceptance(double log_pi_new, double log_pi_old, double log_q_fwd, double log_q_rev) {
  return std::min(0.0, log_pi_new - log_pi_old + log_q_rev - log_q_fwd);
}

template <class LogTarget, class ProposalFn>
MhResult mh_chain(LogTarget&& log_target, ProposalFn&& propose, const Vector& init, int steps, Rng& rng) {
  if (steps < 1) throw Error("mh_chain: steps must be >= 1");
  Vector x = init;
  double lp = log_target(x);
  if (!std::isfinite(lp)) throw Error("mh_chain: target not finite at init");
  MhResult out;
  out.samples.resize(steps, init.size());
  std::size_t accepted = 0;
  for (int t = 0; t < steps; ++t) {
    const Proposal p = propose(static_cast<const Vector&>(x), rng);
    const double lp_new = log_target(p.x);
    if (std::isfinite(lp_new)) {
      const double log_a = mh_log_acceptance(lp_new, lp, p.log_q_forward, p.log_q_reverse);
      if (log_a >= 0.0 || std::log(rng.uniform()) < log_a) {
        x = p.x;
        lp = lp_new;
        ++accepted;
      }
    } else {
      ++out.diag.rejected_nonfinite;
    }
    out.samples.row(t) = x.transpose();
  }
  out.diag.acceptance_rate = static_cast<double>(accepted) / steps;
  return out;
}

/// Transition matrix of the MH kernel on a finite state space with target p
/// and proposal matrix Q (rows sum to 1).
inline Matrix mh_kernel_matrix(const Vector& p, const Matrix& q) {
  const Eigen::Index n = p.size();
  if (q.rows() != n || q.cols() != n) throw Error("mh_kernel_matrix: proposal shape mismatch");
  Matrix k = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || q(i, j) == 0.0) continue;
      k(i, j) = q(i, j) * std::min(1.0, p[j] * q(j, i) / (p[i] * q(i, j)));
      off += k(i, j);
    }
    k(i, i) = 1.0 - off;
  }
  return k;
}

// ---------------------------------------------------------------------------
// Langevin

/// Mean L2 norm of grad_x E over the rows of `path`.
inline double grad_magnitude_nu(const EnergyModel& model, const Matrix& path) {
  if (path.rows() == 0) throw Error("grad_magnitude_nu: empty path");
  return model.energy_grads(path).rowwise().norm().mean();
}

struct LangevinResult {
  Vector final_sample;
  Matrix path;  // K + 1 rows
  ChainDiagnostics diag;
};

struct LangevinBatchResult {
  Matrix finals;
  ChainDiagnostics diag;  // nu averaged over chains and steps
  std::vector<double> nu_per_step;
};

namespace detail {

inline double log_gauss_kernel(const Matrix& diff, Eigen::Index row, double sd) {
  return -0.5 * diff.row(row).squaredNorm() / (sd * sd);
}

}  // namespace detail

/// Runs one Langevin update per step on every row of `starts` simultaneously:
/// x <- x + (tau / 2) score(x) + noise * eps.
inline LangevinBatchResult langevin_batch(const EnergyModel& model, const Matrix& starts, const ChainConfig& cfg,
                                          Rng& rng) {
  cfg.validate();
  const Eigen::Index n = starts.rows(), d = starts.cols();
  const double tau = cfg.step_size, sd = cfg.langevin_noise();
  const bool mala = cfg.metropolis_adjust && sd > 0.0;
  Matrix x = starts;
  Matrix g = model.energy_grads(x);
  Vector e = mala ? model.energies(x) : Vector();
  LangevinBatchResult out;
  std::size_t accepted = 0, proposed = 0;
  double nu_total = 0.0;
  for (int k = 0; k < cfg.steps; ++k) {
    const Vector norms = g.rowwise().norm();
    const double nu_k = norms.mean();
    out.nu_per_step.push_back(nu_k);
    nu_total += nu_k;
    if (!norms.allFinite() || norms.maxCoeff() > cfg.divergence_threshold)
      throw SamplerDiverged(k, out.nu_per_step);
    Matrix noise(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j) noise(i, j) = rng.normal();
    Matrix prop = x - 0.5 * tau * g + sd * noise;
    if (!mala) {
      x = std::move(prop);
      g = model.energy_grads(x);
      continue;
    }
    const Matrix g_new = model.energy_grads(prop);
    const Vector e_new = model.energies(prop);
    const Matrix fwd = prop - (x - 0.5 * tau * g);
    const Matrix rev = x - (prop - 0.5 * tau * g_new);
    for (Eigen::Index i = 0; i < n; ++i) {
      ++proposed;
      if (!std::isfinite(e_new[i])) {
        ++out.diag.rejected_nonfinite;
        continue;
      }
      const double log_a = mh_log_acceptance(-e_new[i], -e[i], detail::log_gauss_kernel(fwd, i, sd),
                                             detail::log_gauss_kernel(rev, i, sd));
      if (log_a >= 0.0 || std::log(rng.uniform()) < log_a) {
        x.row(i) = prop.row(i);
        g.row(i) = g_new.row(i);
        e[i] = e_new[i];
        ++accepted;
      }
    }
  }
  if (cfg.steps == 0) {
    out.nu_per_step.push_back(g.rowwise().norm().mean());
    nu_total = out.nu_per_step.back();
  }
  out.diag.nu = nu_total / static_cast<double>(out.nu_per_step.size());
  out.diag.acceptance_rate = mala && proposed ? static_cast<double>(accepted) / proposed : 1.0;
  out.finals = std::move(x);
  return out;
}

/// Single chain with the full path recorded.
inline LangevinResult langevin_chain(const EnergyModel& model, const Vector& init, const ChainConfig& cfg,
                                     Rng& rng) {
  cfg.validate();
  LangevinResult out;
  out.path.resize(cfg.steps + 1, init.size());
  out.path.row(0) = init.transpose();
  ChainConfig one = cfg;
  one.steps = 1;
  Matrix x = init.transpose();
  std::vector<double> nu_hist;
  std::size_t accepted = 0;
  out.diag.energies.push_back(model.energy(init));
  for (int k = 0; k < cfg.steps; ++k) {
    LangevinBatchResult r;
    try {
      r = langevin_batch(model, x, one, rng);
    } catch (const SamplerDiverged&) {
      throw SamplerDiverged(k, nu_hist);
    }
    nu_hist.push_back(r.nu_per_step.front());
    if (r.diag.acceptance_rate == 1.0) ++accepted;
    x = r.finals;
    out.path.row(k + 1) = x.row(0);
    out.diag.energies.push_back(model.energy(x.row(0).transpose()));
  }
  out.final_sample = x.row(0).transpose();
  out.diag.nu = grad_magnitude_nu(model, out.path);
  out.diag.acceptance_rate =
      cfg.steps > 0 && cfg.metropolis_adjust ? static_cast<double>(accepted) / cfg.steps : 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Hamiltonian Monte Carlo

struct LeapfrogState {
  Vector x;
  Vector v;
};

/// L leapfrog steps: half momentum step, full position step, half momentum
/// step. Potential is the model energy; `mass_inv` is M^{-1}.
inline LeapfrogState leapfrog(const EnergyModel& model, Vector x, Vector v, double eps, int n_steps,
                              const Matrix& mass_inv) {
  for (int l = 0; l < n_steps; ++l) {
    v -= 0.5 * eps * model.energy_grad(x);
    x += eps * (mass_inv * v);
    v -= 0.5 * eps * model.energy_grad(x);
  }
  return {std::move(x), std::move(v)};
}

inline double hamiltonian(const EnergyModel& model, const Vector& x, const Vector& v, const Matrix& mass_inv) {
  return model.energy(x) + 0.5 * v.dot(mass_inv * v);
}

struct HmcResult {
  Matrix samples;
  ChainDiagnostics diag;
  std::vector<double> delta_h;  // H(end) - H(start) per trajectory
};

inline HmcResult hmc_chain(const EnergyModel& model, const Vector& init, const ChainConfig& cfg, int n_samples,
                           Rng& rng) {
  cfg.validate();
  if (n_samples < 1) throw Error("hmc_chain: n_samples must be >= 1");
  const Eigen::Index d = init.size();
  const Matrix mass = cfg.mass.size() ? cfg.mass : Matrix::Identity(d, d);
  if (mass.rows() != d || mass.cols() != d) throw Error("hmc_chain: mass matrix shape mismatch");
  require_symmetric(mass, 1e-12, "hmc_chain");
  Eigen::LLT<Matrix> llt(mass);
  if (llt.info() != Eigen::Success) throw Error("hmc_chain: mass matrix not positive definite");
  const Matrix chol = llt.matrixL();
  const Matrix mass_inv = llt.solve(Matrix::Identity(d, d));

  HmcResult out;
  out.samples.resize(n_samples, d);
  Vector x = init;
  std::size_t accepted = 0;
  for (int s = 0; s < n_samples; ++s) {
    const Vector v0 = chol * rng.normal_vector(d);
    const double h0 = hamiltonian(model, x, v0, mass_inv);
    const LeapfrogState end = leapfrog(model, x, v0, cfg.leapfrog_eps, cfg.leapfrog_steps, mass_inv);
    const double h1 = end.x.allFinite() && end.v.allFinite()
                          ? hamiltonian(model, end.x, end.v, mass_inv)
                          : std::numeric_limits<double>::quiet_NaN();
    const double u = rng.uniform();
    if (!std::isfinite(h1) || !std::isfinite(h0)) {
      ++out.diag.rejected_nonfinite;
    } else {
      out.delta_h.push_back(h1 - h0);
      if (std::log(u) < h0 - h1) {
        x = end.x;
        ++accepted;
      }
    }
    out.samples.row(s) = x.transpose();
    out.diag.energies.push_back(model.energy(x));
  }
  out.diag.acceptance_rate = static_cast<double>(accepted) / n_samples;
  out.diag.nu = grad_magnitude_nu(model, out.samples);
  return out;
}

// ---------------------------------------------------------------------------
// RBM block Gibbs

inline Vector sample_pm1(const Vector& p_plus, Rng& rng) {
  Vector s(p_plus.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = rng.uniform() < p_plus[i] ? 1.0 : -1.0;
  return s;
}

/// One sweep draws h ~ p(h | v), then v ~ p(v | h). Returns the visible state after each sweep.
inline MhResult gibbs_rbm(const Rbm& rbm, const Vector& init_v, int sweeps, Rng& rng) {
  if (sweeps < 1) throw Error("gibbs_rbm: sweeps must be >= 1");
  Rbm::check_state(init_v, rbm.n_visible(), "init_v");
  MhResult out;
  out.samples.resize(sweeps, rbm.n_visible());
  Vector v = init_v;
  for (int s = 0; s < sweeps; ++s) {
    const Vector h = sample_pm1(rbm.hidden_given_visible(v), rng);
    v = sample_pm1(rbm.visible_given_hidden(h), rng);
    out.samples.row(s) = v.transpose();
    out.diag.energies.push_back(rbm.energy(v, h));
  }
  out.diag.acceptance_rate = 1.0;
  return out;
}

/// MH acceptance probability of replacing the hidden block h by h_new when
/// h_new is proposed from p(h | v).
inline double rbm_hidden_block_acceptance(const Rbm& rbm, const Vector& v, const Vector& h, const Vector& h_new) {
  const Vector p = rbm.hidden_given_visible(v);
  auto log_q = [&](const Vector& hh) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < hh.size(); ++j) s += std::log(hh[j] > 0 ? p[j] : 1.0 - p[j]);
    return s;
  };
  return std::exp(mh_log_acceptance(-rbm.energy(v, h_new), -rbm.energy(v, h), log_q(h_new), log_q(h)));
}

/// Same for the visible block, proposed from p(v | h).
inline double rbm_visible_block_acceptance(const Rbm& rbm, const Vector& h, const Vector& v, const Vector& v_new) {
  const Vector p = rbm.visible_given_hidden(h);
  auto log_q = [&](const Vector& vv) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < vv.size(); ++i) s += std::log(vv[i] > 0 ? p[i] : 1.0 - p[i]);
    return s;
  };
  return std::exp(mh_log_acceptance(-rbm.energy(v_new, h), -rbm.energy(v, h), log_q(v_new), log_q(v)));
}

// ---------------------------------------------------------------------------
// Replay buffer

struct BufferDraw {
  Matrix points;
  std::vector<bool> from_prior;
  bool fell_back = false;

  std::size_t prior_count() const {
    return static_cast<std::size_t>(std::count(from_prior.begin(), from_prior.end(), true));
  }
};

/// Persistent store of chain endpoints. Starts are drawn from the prior with
/// probability `rejuvenation`, otherwise uniformly from the stored points.
class ReplayBuffer {
 public:
  ReplayBuffer(std::shared_ptr<const Density> prior, std::size_t capacity = 10000, double rejuvenation = 0.25)
      : prior_(std::move(prior)), capacity_(capacity), rate_(rejuvenation) {
    if (!prior_) throw Error("ReplayBuffer: prior required");
    if (capacity_ == 0) throw Error("ReplayBuffer: capacity must be positive");
    if (!(rate_ >= 0.0 && rate_ <= 1.0)) throw Error("ReplayBuffer: rejuvenation rate must lie in [0, 1]");
  }

  std::size_t size() const { return stored_.size(); }
  std::size_t capacity() const { return capacity_; }
  double rejuvenation() const { return rate_; }
  Eigen::Index dim() const { return prior_->density_dim(); }
  const Density& prior() const { return *prior_; }
  const std::vector<Vector>& stored() const { return stored_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  void clear() { stored_.clear(); }

  /// Appends points; once full, each new point overwrites a uniformly chosen slot.
  void push(const Matrix& points, Rng& rng) {
    if (points.cols() != dim()) throw Error("ReplayBuffer: dimension mismatch on push");
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      if (stored_.size() < capacity_)
        stored_.push_back(points.row(i).transpose());
      else
        stored_[rng.uniform_index(capacity_)] = points.row(i).transpose();
    }
  }

  BufferDraw init_points(Eigen::Index n, Rng& rng) {
    BufferDraw out;
    out.points.resize(n, dim());
    out.from_prior.assign(static_cast<std::size_t>(n), false);
    const bool empty = stored_.empty();
    if (empty && rate_ < 1.0 && n > 0) {
      out.fell_back = true;
      warnings_.push_back("replay buffer empty; drawing all starts from the prior");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool prior = empty || rng.uniform() < rate_;
      out.from_prior[static_cast<std::size_t>(i)] = prior;
      out.points.row(i) = prior ? prior_->sample(rng).transpose()
                                : stored_[rng.uniform_index(stored_.size())].transpose();
    }
    return out;
  }

 private:
  std::shared_ptr<const Density> prior_;
  std::size_t capacity_;
  double rate_;
  std::vector<Vector> stored_;
  std::vector<std::string> warnings_;
};

inline BufferDraw buffer_init_points(ReplayBuffer& buffer, Eigen::Index n, Rng& rng) {
  return buffer.init_points(n, rng);
}

/// CSV trace: step, x0..x{d-1}, energy, score_norm.
inline void write_trace_csv(std::ostream& os, const EnergyModel& model, const Matrix& path) {
  os << "step";
  for (Eigen::Index j = 0; j < path.cols(); ++j) os << ",x" << j;
  os << ",energy,score_norm\n";
  const Vector e = model.energies(path);
  const Vector s = model.energy_grads(path).rowwise().norm();
  os.precision(17);
  for (Eigen::Index i = 0; i < path.rows(); ++i) {
    os << i;
    for (Eigen::Index j = 0; j < path.cols(); ++j) os << ',' << path(i, j);
    os << ',' << e[i] << ',' << s[i] << '\n';
  }
}

}  // namespace ebmlab
