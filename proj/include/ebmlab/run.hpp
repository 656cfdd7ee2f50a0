#pragma once

// One training run from a RunConfig, with its output directory.

#include "ebmlab/config.hpp"
#include "ebmlab/eval.hpp"
#include "ebmlab/io.hpp"

#include <filesystem>

namespace ebmlab {

inline constexpr const char* kVersion = "0.3.0";

/// Runs `cfg` chains on `model` from starts drawn out of `pool` (rows) or,
/// when the pool is empty, the box prior.
inline Matrix draw_model_samples(const EnergyModel& model, const Matrix& pool, Eigen::Index n,
                                 const ChainConfig& cfg, const UniformBox& prior, Rng& rng) {
  Matrix starts(n, model.dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    if (pool.rows() > 0)
      starts.row(i) = pool.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(pool.rows()))));
    else
      starts.row(i) = prior.sample(rng).transpose();
  }
  if (n == 0) return starts;
  return langevin_batch(model, starts, cfg, rng).finals;
}

struct RunOutcome {
  TrainLog log;
  std::unique_ptr<EnergyModel> model;
  Matrix samples;
  std::string config_hash;
  std::vector<std::string> artifacts;  // file names inside the output directory
};

/// Trains per `cfg`. With write_artifacts the output directory receives
/// config.resolved.json, train_log.csv, checkpoint.json, samples.csv,
/// samples.svg and run_info.json.
inline RunOutcome run_train(const RunConfig& cfg, bool write_artifacts = true) {
  namespace fs = std::filesystem;
  RunOutcome out;
  const std::string resolved = resolved_json(cfg).dump(2) + "\n";
  out.config_hash = fnv1a_hex(resolved);
  const auto target = make_target(cfg.target);
  const Eigen::Index d = cfg.target.dimension();
  out.model = make_model(cfg.model, d, cfg.train.seed);
  TrainConfig tc = cfg.train;
  const fs::path dir(cfg.output_dir);
  if (write_artifacts) {
    fs::create_directories(dir);
    std::ofstream(dir / "config.resolved.json", std::ios::binary) << resolved;
    tc.checkpoint_dir = dir.string();
  }
  out.log = train_generic(*out.model, target, tc);

  const UniformBox prior(Vector::Constant(d, -tc.prior_half_width), Vector::Constant(d, tc.prior_half_width));
  Rng rng = Rng(tc.seed).split(6);
  if (!out.log.diverged) {
    try {
      out.samples = draw_model_samples(*out.model, out.log.buffer_points, cfg.final_samples, tc.langevin, prior, rng);
    } catch (const SamplerDiverged& e) {
      out.log.diverged = true;
      out.log.divergence_message = std::string("final sampling: ") + e.what();
    }
  }
  if (write_artifacts) {
    {
      std::ofstream os(dir / "train_log.csv", std::ios::binary);
      out.log.write_csv(os);
    }
    save_samples_csv((dir / "samples.csv").string(), out.samples, d);
    save_scatter_svg((dir / "samples.svg").string(), out.samples, cfg.train.objective.name + " samples");
    nlohmann::ordered_json info = {{"version", kVersion},
                                   {"config_hash", out.config_hash},
                                   {"seed", tc.seed},
                                   {"iterations_completed", out.log.steps.size()},
                                   {"refreshes", out.log.refresh_iterations.size()},
                                   {"diverged", out.log.diverged},
                                   {"divergence_message", out.log.divergence_message}};
    if (out.log.log_partition) info["log_partition"] = *out.log.log_partition;
    std::ofstream(dir / "run_info.json", std::ios::binary) << info.dump(2) << "\n";
    out.artifacts = {"config.resolved.json", "train_log.csv", "checkpoint.json", "samples.csv", "samples.svg",
                     "run_info.json"};
  }
  return out;
}

/// Symmetric grid wide enough for every component of `target`: the largest
/// |mean| + 6 sd over components and axes, rounded up to an integer.
inline GridSpec covering_grid(const GaussianMixtureEnergy& target, int points = 128) {
  double w = 0.0;
  for (const auto& c : target.components())
    for (Eigen::Index j = 0; j < c.mean.size(); ++j) w = std::max(w, std::abs(c.mean[j]) + 6.0 * std::sqrt(c.variance[j]));
  w = std::ceil(w);
  return GridSpec::uniform(target.density_dim(), -w, w, points);
}

/// Frechet-Gaussian distance between model samples and an equal number of
/// target draws from a fixed stream.
inline double frechet_to_target(const Density& target, const Matrix& samples, std::uint64_t seed = 777) {
  Rng rng(seed);
  return frechet_samples(samples, target.sample_n(std::max<Eigen::Index>(samples.rows(), 2), rng));
}

}  // namespace ebmlab
