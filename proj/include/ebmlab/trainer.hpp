#pragma once

// Training loop shared by every objective. The adaptive objectives (adance,
// adabrm) contrast data with Langevin samples of a frozen copy of the model that
// is refreshed every K iterations; mle runs the same chains on the live model.

#include "ebmlab/checkpoint.hpp"
#include "ebmlab/mixture_energy.hpp"
#include "ebmlab/objectives.hpp"
#include "ebmlab/optimizer.hpp"
#include "ebmlab/samplers.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>

namespace ebmlab {

inline const std::vector<std::string>& known_objectives() {
  static const std::vector<std::string> names{"adance", "adabrm",      "mle",          "nce",      "nce_rank",
                                              "cnce",   "brm",         "sm_implicit",  "sm_denoising", "sm_sliced"};
  return names;
}

inline bool is_adaptive_objective(const std::string& name) { return name == "adance" || name == "adabrm"; }
inline bool uses_chains(const std::string& name) { return is_adaptive_objective(name) || name == "mle"; }
inline bool learns_log_partition(const std::string& name) { return name == "nce" || name == "nce_rank" || name == "brm"; }

struct ObjectiveConfig {
  std::string name = "adance";
  int adaptive_interval = 1;  // K
  std::string spair = "log";
  double sigma = 0.1;         // sm_denoising noise, cnce kernel width
  double v = 1.0;             // noise-to-data ratio (nce, cnce)
  int kappa = 1;              // cnce draws per datum
  int n_projections = 1;      // sm_sliced
  std::string projection = "rademacher";
  int rank_classes = 4;       // nce_rank collection size
  double noise_std = 2.0;     // N(0, noise_std^2 I) noise for nce, nce_rank, brm
  double c_init = 0.0;
};

struct TrainConfig {
  ObjectiveConfig objective;
  int iterations = 1000;
  int batch_size = 128;
  OptimizerConfig optimizer;
  ChainConfig langevin = ChainConfig::paper();
  std::size_t buffer_capacity = 10000;
  double rejuvenation = 0.25;
  bool reset_buffer_on_refresh = false;
  double prior_half_width = 10.0;  // buffer prior U[-w, w]^d
  std::uint64_t seed = 0;
  int nu_log_interval = 10;
  int checkpoint_interval = 0;  // 0 writes only the final checkpoint
  std::string checkpoint_dir;   // empty disables checkpoint files
  bool wall_clock = false;      // off keeps the log byte-reproducible

  void validate() const {
    const auto& names = known_objectives();
    if (std::find(names.begin(), names.end(), objective.name) == names.end())
      throw Error("unknown objective '" + objective.name + "'");
    if (objective.adaptive_interval < 1) throw Error("adaptive_interval must be >= 1");
    if (iterations < 1) throw Error("iterations must be >= 1");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (nu_log_interval < 1) throw Error("nu_log_interval must be >= 1");
    if (checkpoint_interval < 0) throw Error("checkpoint_interval must be >= 0");
    if (buffer_capacity < 1) throw Error("buffer capacity must be >= 1");
    if (!(rejuvenation >= 0.0 && rejuvenation <= 1.0)) throw Error("rejuvenation must lie in [0, 1]");
    if (!(prior_half_width > 0.0)) throw Error("prior_half_width must be positive");
    if (!(objective.sigma > 0.0)) throw Error("objective sigma must be positive");
    if (!(objective.v > 0.0)) throw Error("objective v must be positive");
    if (!(objective.noise_std > 0.0)) throw Error("objective noise_std must be positive");
    if (objective.kappa < 1 || objective.n_projections < 1) throw Error("kappa and n_projections must be >= 1");
    if (objective.rank_classes < 2) throw Error("rank_classes must be >= 2");
    if (objective.projection != "rademacher" && objective.projection != "gaussian")
      throw Error("unknown projection distribution '" + objective.projection + "'");
    validate_spair(spair_by_name(objective.spair));
    langevin.validate();
    Optimizer check(optimizer);
    (void)check;
  }
};

struct StepRecord {
  long iter = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double nu = std::numeric_limits<double>::quiet_NaN();  // only at the logging cadence
  bool refresh = false;
  double acceptance = 1.0;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<long> refresh_iterations;
  bool diverged = false;
  long diverged_at = -1;
  std::string divergence_message;
  std::optional<double> log_partition;
  std::size_t freeze_checks = 0;
  std::size_t max_buffer_size = 0;
  std::vector<std::string> warnings;
  Matrix buffer_points;  // replay buffer contents at exit, one row per point

  /// Columns: iter, loss, grad_norm, nu, refresh_flag, wall_ms. nu is empty
  /// off the logging cadence.
  void write_csv(std::ostream& os) const {
    os << "iter,loss,grad_norm,nu,refresh_flag,wall_ms\n";
    std::ostringstream line;
    line << std::setprecision(17);
    for (const auto& s : steps) {
      line.str("");
      line << s.iter << ',' << s.loss << ',' << s.grad_norm << ',';
      if (!std::isnan(s.nu)) line << s.nu;
      line << ',' << (s.refresh ? 1 : 0) << ',' << s.wall_ms << '\n';
      os << line.str();
    }
  }

  /// (iteration, nu) pairs at the logging cadence.
  std::vector<std::pair<long, double>> nu_series() const {
    std::vector<std::pair<long, double>> out;
    for (const auto& s : steps)
      if (!std::isnan(s.nu)) out.emplace_back(s.iter, s.nu);
    return out;
  }
};

struct StepContext {
  long iteration;  // 1-based
  const EnergyModel& model;
  const EnergyModel* frozen;  // null for non-adaptive objectives
  const Matrix& data;
  const Matrix& noise;  // empty when the objective draws no noise batch
  const GradEstimate& estimate;
};

using StepObserver = std::function<void(const StepContext&)>;

namespace detail {

inline MlpEnergy* spectral_mlp(EnergyModel& model) {
  auto* mlp = dynamic_cast<MlpEnergy*>(&model);
  return mlp && mlp->options().spectral_norm ? mlp : nullptr;
}

}  // namespace detail

/// Runs cfg.iterations steps on `model`, drawing data from `target`.
/// Sampler divergence or a non-finite estimate halts training with
/// log.diverged set; the model keeps its last finite parameters.
inline TrainLog train_generic(EnergyModel& model, const Density& target, const TrainConfig& cfg,
                              const StepObserver& observer = {}) {
  cfg.validate();
  if (target.density_dim() != model.dim()) throw Error("train: target and model dimensions differ");
  const ObjectiveConfig& oc = cfg.objective;
  const Eigen::Index d = model.dim(), n = cfg.batch_size;
  const bool adaptive = is_adaptive_objective(oc.name);
  const bool chains = uses_chains(oc.name);
  const bool with_c = learns_log_partition(oc.name);
  const SPair sp = spair_by_name(oc.spair);
  const ProjectionDist proj = oc.projection == "gaussian" ? ProjectionDist::gaussian : ProjectionDist::rademacher;

  const Rng master(cfg.seed);
  Rng data_rng = master.split(1), chain_rng = master.split(2), buffer_rng = master.split(3),
      obj_rng = master.split(4), probe_rng = master.split(5);

  const Vector lo = Vector::Constant(d, -cfg.prior_half_width), hi = Vector::Constant(d, cfg.prior_half_width);
  auto prior = std::make_shared<UniformBox>(lo, hi);
  ReplayBuffer buffer(prior, cfg.buffer_capacity, cfg.rejuvenation);
  const auto noise_density =
      std::make_shared<GaussianMixtureEnergy>(GaussianMixtureEnergy::isotropic_normal(Vector::Zero(d), oc.noise_std * oc.noise_std));
  const Vector rho = Vector::Constant(oc.rank_classes, 1.0 / oc.rank_classes);
  const Eigen::Index n_noise = std::max<Eigen::Index>(1, std::llround(oc.v * static_cast<double>(n)));

  MlpEnergy* sn = detail::spectral_mlp(model);
  if (sn) sn->spectral_normalize_forward();

  std::unique_ptr<EnergyModel> frozen;
  Matrix probes;
  Vector probe_energies;
  auto freeze = [&]() {
    frozen = model.snapshot();
    probes = prior->sample_n(5, probe_rng);
    probe_energies = frozen->energies(probes);
  };
  if (adaptive) freeze();

  double c = oc.c_init;
  Optimizer opt(cfg.optimizer);
  TrainLog log;
  const auto start = std::chrono::steady_clock::now();
  const std::string ckpt_dir = cfg.checkpoint_dir;
  if (!ckpt_dir.empty()) std::filesystem::create_directories(ckpt_dir);
  auto write_ckpt = [&](const std::string& file, long iter) {
    save_checkpoint((std::filesystem::path(ckpt_dir) / file).string(), model,
                    with_c ? std::optional<double>(c) : std::nullopt, iter, chain_rng, std::make_pair(lo, hi));
  };

  for (int t = 0; t < cfg.iterations; ++t) {
    const long iter = t + 1;
    StepRecord rec;
    rec.iter = iter;
    const Matrix data = target.sample_n(n, data_rng);
    Matrix noise;
    double chain_nu = std::numeric_limits<double>::quiet_NaN();
    GradEstimate est;
    try {
      if (chains) {
        const EnergyModel& sampler_model = adaptive ? *frozen : model;
        const BufferDraw starts = buffer.init_points(n, buffer_rng);
        LangevinBatchResult res = langevin_batch(sampler_model, starts.points, cfg.langevin, chain_rng);
        noise = std::move(res.finals);
        chain_nu = res.diag.nu;
        rec.acceptance = res.diag.acceptance_rate;
      }
      const std::string& name = oc.name;
      if (name == "adance") {
        est = adance(model, *frozen, data, noise);
      } else if (name == "adabrm") {
        est = adabrm(model, *frozen, sp, data, noise);
      } else if (name == "mle") {
        est = mle_grad(model, data, noise);
        est.grad = -est.grad;  // descend on the negative log-likelihood
      } else if (name == "nce") {
        noise = noise_density->sample_n(n_noise, obj_rng);
        est = nce_binary(model, c, *noise_density, data, noise, oc.v);
      } else if (name == "nce_rank") {
        const auto [cols, idx] = make_rank_collections(data, *noise_density, rho, obj_rng);
        est = nce_rank(model, c, *noise_density, cols, idx, rho);
      } else if (name == "brm") {
        noise = noise_density->sample_n(n, obj_rng);
        est = brm(model, c, *noise_density, sp, data, noise);
      } else if (name == "cnce") {
        est = cnce(model, data, oc.sigma, oc.kappa, oc.v, obj_rng);
      } else if (name == "sm_implicit") {
        est = sm_implicit(model, data);
      } else if (name == "sm_denoising") {
        est = sm_denoising(model, data, oc.sigma, obj_rng);
      } else {
        est = sm_sliced(model, data, oc.n_projections, proj, obj_rng);
      }
    } catch (const SamplerDiverged& e) {
      log.diverged = true;
      log.diverged_at = iter;
      log.divergence_message = e.what();
      break;
    }
    if (!std::isfinite(est.loss) || !est.grad.allFinite()) {
      log.diverged = true;
      log.diverged_at = iter;
      log.divergence_message = "non-finite objective at iteration " + std::to_string(iter);
      break;
    }
    if (observer) observer(StepContext{iter, model, frozen.get(), data, noise, est});

    rec.loss = est.loss;
    rec.grad_norm = est.grad.norm();
    Vector p(model.num_params() + (with_c ? 1 : 0));
    p.head(model.num_params()) = model.params();
    if (with_c) p[model.num_params()] = c;
    Vector g = est.grad;
    if (with_c && !est.has_log_partition) throw Error("train: objective did not return a log-partition gradient");
    if (!with_c && est.has_log_partition) g = est.param_grad();
    if (sn) g.head(model.num_params()) = sn->normalized_gradient(g.head(model.num_params()));
    p = opt.step(p, g, iter);
    model.set_params(p.head(model.num_params()));
    if (with_c) c = p[model.num_params()];
    if (sn) sn->spectral_normalize_forward();

    if (chains) {
      buffer.push(noise, buffer_rng);
      log.max_buffer_size = std::max(log.max_buffer_size, buffer.size());
    }
    if (adaptive && iter % oc.adaptive_interval == 0) {
      if ((frozen->energies(probes) - probe_energies).cwiseAbs().maxCoeff() != 0.0)
        throw Error("frozen noise model changed between refreshes");
      ++log.freeze_checks;
      freeze();
      if (cfg.reset_buffer_on_refresh) buffer.clear();
      rec.refresh = true;
      log.refresh_iterations.push_back(iter);
    }
    if (iter % cfg.nu_log_interval == 0) rec.nu = chains ? chain_nu : grad_magnitude_nu(model, data);
    if (cfg.wall_clock)
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    log.steps.push_back(rec);
    if (!ckpt_dir.empty() && cfg.checkpoint_interval > 0 && iter % cfg.checkpoint_interval == 0 &&
        iter != cfg.iterations)
      write_ckpt("checkpoint_" + std::to_string(iter) + ".json", iter);
  }
  if (with_c) log.log_partition = c;
  log.buffer_points.resize(static_cast<Eigen::Index>(buffer.size()), d);
  for (std::size_t i = 0; i < buffer.size(); ++i)
    log.buffer_points.row(static_cast<Eigen::Index>(i)) = buffer.stored()[i].transpose();
  log.warnings = buffer.warnings();
  if (!log.warnings.empty()) log.warnings.resize(1);
  if (!ckpt_dir.empty()) write_ckpt("checkpoint.json", log.steps.empty() ? 0 : log.steps.back().iter);
  return log;
}

inline TrainLog train_adance(EnergyModel& model, const Density& target, TrainConfig cfg,
                             const StepObserver& observer = {}) {
  cfg.objective.name = "adance";
  return train_generic(model, target, cfg, observer);
}

}  // namespace ebmlab
