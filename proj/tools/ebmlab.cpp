// ebmlab command-line front end: train, sample, eval, verify, sweep.
//
// Exit codes: 0 ok, 1 usage or schema error, 2 divergence, 3 verification
// failure, 4 I/O error.

#include "ebmlab/run.hpp"
#include "ebmlab/verify.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace ebmlab;

namespace {

enum Exit { kOk = 0, kUsage = 1, kDiverged = 2, kVerifyFailed = 3, kIo = 4 };

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Applies command-line overrides to the config text after validating the
// original, so schema errors still point at the user's lines.
RunConfig load_with_overrides(const std::string& path, std::optional<std::uint64_t> seed,
                              const std::string& out, const std::string& preset) {
  const std::string text = read_file(path);
  RunConfig cfg = parse_run_config(text, path);
  if (!seed && out.empty() && preset.empty()) return cfg;
  auto j = nlohmann::json::parse(text);
  if (seed) j["train"]["seed"] = *seed;
  if (!out.empty()) j["output"]["directory"] = out;
  if (!preset.empty()) j["sampler"]["preset"] = preset;
  return parse_run_config(j.dump(), path + " (with overrides)");
}

int cmd_train(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out,
              const std::string& preset) {
  const RunConfig cfg = load_with_overrides(config, seed, out, preset);
  const RunOutcome r = run_train(cfg);
  std::cout << "wrote";
  for (const auto& a : r.artifacts) std::cout << ' ' << a;
  std::cout << " to " << cfg.output_dir << "\n";
  if (r.log.log_partition) std::cout << "learned log-partition c = " << *r.log.log_partition << "\n";
  if (r.log.diverged) {
    std::cerr << "training diverged: " << r.log.divergence_message << "\n";
    return kDiverged;
  }
  return kOk;
}

struct SampleOptions {
  std::string checkpoint;
  long n = 1000;
  std::string out = ".";
  std::string preset = "matched";
  std::optional<int> steps;
  std::optional<double> step_size, noise_scale;
  bool mala = false;
  std::uint64_t seed = 0;
};

int cmd_sample(const SampleOptions& o) {
  if (o.n < 0) throw ConfigError("--n must be >= 0");
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  ChainConfig cfg = sampler_preset(o.preset);
  if (o.steps) cfg.steps = *o.steps;
  if (o.step_size) cfg.step_size = *o.step_size;
  if (o.noise_scale) cfg.noise_scale = *o.noise_scale;
  cfg.metropolis_adjust = o.mala;
  cfg.validate();
  const Eigen::Index d = ck.model->dim();
  const UniformBox prior = ck.prior_box ? UniformBox(ck.prior_box->first, ck.prior_box->second)
                                        : UniformBox(Vector::Constant(d, -10.0), Vector::Constant(d, 10.0));
  Rng rng(o.seed);
  Matrix x;
  try {
    x = draw_model_samples(*ck.model, Matrix(0, d), o.n, cfg, prior, rng);
  } catch (const SamplerDiverged& e) {
    std::cerr << "sampling diverged: " << e.what() << "\n";
    return kDiverged;
  }
  fs::create_directories(o.out);
  save_samples_csv((fs::path(o.out) / "samples.csv").string(), x, d);
  save_scatter_svg((fs::path(o.out) / "samples.svg").string(), x, "samples");
  std::cout << "wrote " << x.rows() << " samples to " << (fs::path(o.out) / "samples.csv").string() << "\n";
  return kOk;
}

struct EvalOptions {
  std::string checkpoint, config, samples, reference, out = "metrics.csv", run_id = "run";
  std::vector<std::string> metrics;
  int grid_points = 128;
  std::optional<double> grid_half_width;  // default: covering grid of the target
};

int cmd_eval(const EvalOptions& o) {
  if (o.metrics.empty()) throw ConfigError("--metrics is required (grid_kl, frechet, loglik)");
  std::optional<RunConfig> cfg;
  std::optional<GaussianMixtureEnergy> target;
  std::string hash = "none";
  if (!o.config.empty()) {
    cfg = load_run_config(o.config);
    target = make_target(cfg->target);
    hash = fnv1a_hex(resolved_json(*cfg).dump(2) + "\n");
  }
  std::optional<Checkpoint> ck;
  if (!o.checkpoint.empty()) ck = load_checkpoint(o.checkpoint);
  std::optional<Matrix> samples;
  if (!o.samples.empty()) samples = load_samples_csv(o.samples);

  std::vector<std::pair<std::string, double>> rows;
  for (const auto& m : o.metrics) {
    if (m == "grid_kl") {
      if (!ck || !target) throw ConfigError("grid_kl needs --checkpoint and --config");
      const Eigen::Index d = ck->model->dim();
      if (d > 3) throw ConfigError("grid_kl requires d <= 3, model has d = " + std::to_string(d));
      if (target->density_dim() != d) throw ConfigError("grid_kl: target and model dimensions differ");
      const GridSpec grid = o.grid_half_width
                                ? GridSpec::uniform(d, -*o.grid_half_width, *o.grid_half_width, o.grid_points)
                                : covering_grid(*target, o.grid_points);
      rows.emplace_back(m, grid_kl(*ck->model, *target, grid));
    } else if (m == "frechet") {
      if (!samples) throw ConfigError("frechet needs --samples");
      if (!o.reference.empty()) {
        rows.emplace_back(m, frechet_samples(*samples, load_samples_csv(o.reference)));
      } else {
        if (!target) throw ConfigError("frechet needs --reference or --config");
        rows.emplace_back(m, frechet_to_target(*target, *samples));
      }
    } else if (m == "loglik") {
      if (!samples || !target) throw ConfigError("loglik needs --samples and --config");
      rows.emplace_back(m, oracle_log_likelihood(*target, *samples));
    } else {
      throw ConfigError("unknown metric '" + m + "' (expected grid_kl, frechet or loglik)");
    }
  }
  const bool fresh = !fs::exists(o.out);
  std::ofstream os(o.out, std::ios::app | std::ios::binary);
  if (!os) throw IoError("cannot write " + o.out);
  if (fresh) write_eval_header(os);
  for (const auto& [name, v] : rows) {
    write_eval_row(os, o.run_id, name, v, hash);
    std::cout << name << " = " << v << "\n";
  }
  return kOk;
}

int cmd_verify(const std::string& check, const std::string& report, bool corrupt) {
  VerifyOptions vo;
  if (corrupt) vo.spairs.push_back(corrupted_spair());
  const auto& names = verify_check_names();
  if (check != "all" && std::find(names.begin(), names.end(), check) == names.end())
    throw ConfigError("unknown check '" + check + "'");
  const auto results = run_verify(check, vo);
  bool all = true;
  for (const auto& r : results) {
    all = all && r.pass;
    std::printf("%s %-22s error=%.3e tol=%.1e  %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.error,
                r.tolerance, r.detail.c_str());
  }
  if (!report.empty()) {
    std::ofstream os(report, std::ios::binary);
    if (!os) throw IoError("cannot write " + report);
    os << verify_report(results).dump(2) << "\n";
  }
  return all ? kOk : kVerifyFailed;
}

int cmd_sweep(const std::string& config, const std::vector<int>& intervals, const std::vector<std::uint64_t>& seeds,
              const std::string& out, const std::string& preset) {
  if (intervals.empty() || seeds.empty()) throw ConfigError("sweep needs --intervals and --seeds");
  const RunConfig base = load_with_overrides(config, std::nullopt, "", preset);
  const auto target = make_target(base.target);
  fs::create_directories(out);
  std::ofstream table(fs::path(out) / "sweep.csv", std::ios::binary);
  if (!table) throw IoError("cannot write sweep table in " + out);
  table << "K,seed,frechet,grid_kl,diverged\n";
  std::cout << "K      seed   frechet        grid_kl\n";
  bool any_diverged = false;
  for (int k : intervals) {
    for (auto seed : seeds) {
      RunConfig cfg = base;
      cfg.train.objective.adaptive_interval = k;
      cfg.train.seed = seed;
      cfg.output_dir = (fs::path(out) / ("K" + std::to_string(k) + "_seed" + std::to_string(seed))).string();
      const RunOutcome r = run_train(cfg);
      double fr = std::numeric_limits<double>::quiet_NaN(), kl = fr;
      if (!r.log.diverged) {
        fr = frechet_to_target(target, r.samples);
        if (target.density_dim() <= 3)
          kl = grid_kl(*r.model, target, covering_grid(target));
      }
      any_diverged = any_diverged || r.log.diverged;
      std::ostringstream line;
      line << std::setprecision(17) << k << ',' << seed << ',' << fr << ',' << kl << ',' << (r.log.diverged ? 1 : 0);
      table << line.str() << "\n";
      std::printf("%-6d %-6llu %-14.6g %-14.6g%s\n", k, static_cast<unsigned long long>(seed), fr, kl,
                  r.log.diverged ? "  diverged" : "");
    }
  }
  return any_diverged ? kDiverged : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ebmlab: energy-based model training lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config, out, preset, check = "all", report;
  std::optional<std::uint64_t> seed;
  bool corrupt = false;

  auto* train = app.add_subcommand("train", "train a model from a run config");
  train->add_option("--config", config, "run config (JSON)")->required();
  train->add_option("--seed", seed, "override train.seed");
  train->add_option("--out", out, "override output.directory");
  train->add_option("--preset", preset, "sampler preset")->check(CLI::IsMember({"paper", "matched"}));

  SampleOptions so;
  auto* sample = app.add_subcommand("sample", "draw Langevin samples from a checkpoint");
  sample->add_option("--checkpoint", so.checkpoint, "checkpoint file")->required();
  sample->add_option("--n", so.n, "number of samples");
  sample->add_option("--out", so.out, "output directory");
  sample->add_option("--preset", so.preset, "sampler preset")->check(CLI::IsMember({"paper", "matched"}));
  sample->add_option("--steps", so.steps, "Langevin steps per chain");
  sample->add_option("--step-size", so.step_size, "Langevin step size");
  sample->add_option("--noise-scale", so.noise_scale, "noise std in decoupled mode");
  sample->add_flag("--mala", so.mala, "Metropolis-adjust each step");
  sample->add_option("--seed", so.seed, "sampler seed");

  EvalOptions eo;
  auto* eval = app.add_subcommand("eval", "compute metrics and append them to a CSV");
  eval->add_option("--checkpoint", eo.checkpoint, "checkpoint (grid_kl)");
  eval->add_option("--config", eo.config, "run config naming the target");
  eval->add_option("--samples", eo.samples, "sample CSV (frechet, loglik)");
  eval->add_option("--reference", eo.reference, "reference sample CSV for frechet");
  eval->add_option("--metrics", eo.metrics, "grid_kl, frechet, loglik")->delimiter(',');
  eval->add_option("--out", eo.out, "metrics CSV to append to");
  eval->add_option("--run-id", eo.run_id, "run identifier column");
  eval->add_option("--grid-points", eo.grid_points, "grid points per axis");
  eval->add_option("--grid-half-width", eo.grid_half_width, "grid spans [-w, w] per axis (default: mean +- 6 sd of every component)");

  auto* verify = app.add_subcommand("verify", "run the identity checks");
  verify->add_option("--check", check, "check name or 'all'");
  verify->add_option("--report", report, "write a JSON report");
  verify->add_flag("--inject-corrupt-spair", corrupt, "add a corrupted SPair (negative control)");

  std::vector<int> intervals{1, 5, 10, 50};
  std::vector<std::uint64_t> seeds{1};
  auto* sweep = app.add_subcommand("sweep", "train across adaptive intervals and tabulate metrics");
  sweep->add_option("--config", config, "base run config")->required();
  sweep->add_option("--intervals", intervals, "K values")->delimiter(',');
  sweep->add_option("--seeds", seeds, "seeds")->delimiter(',');
  sweep->add_option("--out", out, "sweep directory")->required();
  sweep->add_option("--preset", preset, "sampler preset")->check(CLI::IsMember({"paper", "matched"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  try {
    if (*train) return cmd_train(config, seed, out, preset);
    if (*sample) return cmd_sample(so);
    if (*eval) return cmd_eval(eo);
    if (*verify) return cmd_verify(check, report, corrupt);
    if (*sweep) return cmd_sweep(config, intervals, seeds, out, preset);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
