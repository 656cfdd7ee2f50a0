#pragma once

// Run configuration files: JSON with sections target, model, objective,
// sampler, train and output. Unknown keys and bad values are reported with the
// line of the offending key.

#include "ebmlab/mixture_energy.hpp"
#include "ebmlab/trainer.hpp"

#include "json.hpp"

#include <fstream>
#include <map>
#include <set>

namespace ebmlab {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct TargetConfig {
  std::string name = "four_mode";  // four_mode | two_mode_1d | gaussian
  double c = 4.0;                  // four_mode centre offset
  double stddev = 1.5;
  double left = -2.0, right = 2.0, left_weight = 0.5;  // two_mode_1d
  int dim = 1;                                          // gaussian
  double mean = 0.0, variance = 1.0;
  int dimension() const { return name == "four_mode" ? 2 : name == "two_mode_1d" ? 1 : dim; }
};

struct ModelConfig {
  std::string kind = "mlp";  // mlp | gaussian
  std::vector<Eigen::Index> widths;  // empty: {d, 64, 64, 1}
  bool spectral_norm = true;
  double leaky_slope = 0.2;
  int power_iters = 1;
};

struct RunConfig {
  TargetConfig target;
  ModelConfig model;
  std::string sampler_preset = "paper";
  TrainConfig train;
  std::string output_dir = "run";
  int final_samples = 1000;
};

inline ChainConfig sampler_preset(const std::string& name) {
  if (name == "paper") return ChainConfig::paper();
  if (name == "matched") return ChainConfig::matched(0.01, 100);
  throw ConfigError("unknown sampler preset '" + name + "' (expected paper or matched)");
}

namespace detail {

/// Maps dotted key paths ("train.optimizer.lr") to 1-based source lines.
inline std::map<std::string, int> json_key_lines(const std::string& text) {
  std::map<std::string, int> out;
  struct Frame {
    bool object;
    std::string key;
    bool expect_key;
    int index;
  };
  std::vector<Frame> stack;
  int line = 1;
  auto path = [&](const std::string& leaf) {
    std::string p;
    for (const auto& f : stack) {
      if (&f == &stack.back()) break;
      if (f.object && !f.key.empty()) p += f.key + ".";
    }
    return p + leaf;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (ch == '\n') {
      ++line;
    } else if (ch == '"') {
      std::string s;
      const int start_line = line;
      for (++i; i < text.size() && text[i] != '"'; ++i) {
        if (text[i] == '\\' && i + 1 < text.size()) ++i;
        if (text[i] == '\n') ++line;
        s += text[i];
      }
      if (!stack.empty() && stack.back().object && stack.back().expect_key) {
        stack.back().key = s;
        stack.back().expect_key = false;
        out.emplace(path(s), start_line);
      }
    } else if (ch == '{' || ch == '[') {
      stack.push_back({ch == '{', "", ch == '{', 0});
    } else if (ch == '}' || ch == ']') {
      if (!stack.empty()) stack.pop_back();
    } else if (ch == ',' && !stack.empty() && stack.back().object) {
      stack.back().expect_key = true;
    }
  }
  return out;
}

class ConfigReader {
 public:
  ConfigReader(std::string source, const std::string& text) : source_(std::move(source)), lines_(json_key_lines(text)) {}

  [[noreturn]] void fail(const std::string& path, const std::string& what) const {
    std::string loc = source_;
    std::string p = path;
    while (!p.empty()) {
      const auto it = lines_.find(p);
      if (it != lines_.end()) {
        loc += ":" + std::to_string(it->second);
        break;
      }
      const auto dot = p.rfind('.');
      p = dot == std::string::npos ? "" : p.substr(0, dot);
    }
    throw ConfigError(loc + ": " + what);
  }

  void allow(const nlohmann::json& obj, const std::string& prefix, const std::set<std::string>& keys) const {
    if (!obj.is_object()) fail(prefix, "section '" + prefix + "' must be an object");
    for (const auto& [k, v] : obj.items())
      if (!keys.count(k)) fail(join(prefix, k), "unknown key '" + join(prefix, k) + "'");
  }

  template <class T>
  void read(const nlohmann::json& obj, const std::string& prefix, const std::string& key, T& out) const {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    const std::string p = join(prefix, key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(p, "field '" + p + "' must be true or false");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(p, "field '" + p + "' must be an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (v.get<long long>() < 0) fail(p, "field '" + p + "' must be non-negative");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(p, "field '" + p + "' must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(p, "field '" + p + "' must be a string");
    } else {
      if (!v.is_array()) fail(p, "field '" + p + "' must be an array");
      for (const auto& e : v)
        if (!e.is_number_integer()) fail(p, "field '" + p + "' must contain integers");
    }
    out = v.get<T>();
  }

  void check(bool ok, const std::string& path, const std::string& what) const {
    if (!ok) fail(path, what);
  }

  static std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }

 private:
  std::string source_;
  std::map<std::string, int> lines_;
};

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text, const std::string& source = "config") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  const detail::ConfigReader r(source, text);
  r.allow(j, "", {"target", "model", "objective", "sampler", "train", "output"});
  RunConfig cfg;
  const nlohmann::json empty = nlohmann::json::object();
  auto section = [&](const char* name) -> const nlohmann::json& { return j.contains(name) ? j.at(name) : empty; };

  const auto& tj = section("target");
  r.allow(tj, "target", {"name", "parameters"});
  r.read(tj, "target", "name", cfg.target.name);
  const auto& tp = tj.contains("parameters") ? tj.at("parameters") : empty;
  TargetConfig& t = cfg.target;
  if (t.name == "four_mode") {
    r.allow(tp, "target.parameters", {"c", "stddev"});
    r.read(tp, "target.parameters", "c", t.c);
    r.read(tp, "target.parameters", "stddev", t.stddev);
  } else if (t.name == "two_mode_1d") {
    t.stddev = 0.7;
    r.allow(tp, "target.parameters", {"left", "right", "stddev", "left_weight"});
    r.read(tp, "target.parameters", "left", t.left);
    r.read(tp, "target.parameters", "right", t.right);
    r.read(tp, "target.parameters", "stddev", t.stddev);
    r.read(tp, "target.parameters", "left_weight", t.left_weight);
    r.check(t.left_weight > 0.0 && t.left_weight < 1.0, "target.parameters.left_weight",
            "target.parameters.left_weight must lie in (0, 1)");
  } else if (t.name == "gaussian") {
    r.allow(tp, "target.parameters", {"dim", "mean", "variance"});
    r.read(tp, "target.parameters", "dim", t.dim);
    r.read(tp, "target.parameters", "mean", t.mean);
    r.read(tp, "target.parameters", "variance", t.variance);
    r.check(t.dim >= 1, "target.parameters.dim", "target.parameters.dim must be >= 1");
    r.check(t.variance > 0.0, "target.parameters.variance", "target.parameters.variance must be positive");
  } else {
    r.fail("target.name", "unknown target '" + t.name + "' (expected four_mode, two_mode_1d or gaussian)");
  }
  if (t.name != "gaussian")
    r.check(t.stddev > 0.0, "target.parameters.stddev", "target.parameters.stddev must be positive");

  const auto& mj = section("model");
  r.allow(mj, "model", {"kind", "widths", "spectral_norm", "leaky_slope", "power_iters"});
  r.read(mj, "model", "kind", cfg.model.kind);
  r.read(mj, "model", "widths", cfg.model.widths);
  r.read(mj, "model", "spectral_norm", cfg.model.spectral_norm);
  r.read(mj, "model", "leaky_slope", cfg.model.leaky_slope);
  r.read(mj, "model", "power_iters", cfg.model.power_iters);
  const Eigen::Index d = t.dimension();
  r.check(cfg.model.kind == "mlp" || cfg.model.kind == "gaussian", "model.kind",
          "unknown model kind '" + cfg.model.kind + "' (expected mlp or gaussian)");
  if (cfg.model.kind == "mlp") {
    if (cfg.model.widths.empty()) cfg.model.widths = {d, 64, 64, 1};
    r.check(cfg.model.widths.size() >= 2 && cfg.model.widths.front() == d && cfg.model.widths.back() == 1,
            "model.widths", "model.widths must start with the target dimension " + std::to_string(d) + " and end with 1");
    for (auto w : cfg.model.widths) r.check(w >= 1, "model.widths", "model.widths entries must be >= 1");
    r.check(cfg.model.power_iters >= 1, "model.power_iters", "model.power_iters must be >= 1");
  }

  ObjectiveConfig& o = cfg.train.objective;
  const auto& oj = section("objective");
  r.allow(oj, "objective", {"name", "parameters"});
  r.read(oj, "objective", "name", o.name);
  const auto& known = known_objectives();
  r.check(std::find(known.begin(), known.end(), o.name) != known.end(), "objective.name",
          "unknown objective '" + o.name + "'");
  const auto& op = oj.contains("parameters") ? oj.at("parameters") : empty;
  const std::string opx = "objective.parameters";
  r.allow(op, opx, {"K", "spair", "sigma", "v", "kappa", "n_projections", "projection", "rank_classes", "noise_std", "c_init"});
  r.read(op, opx, "K", o.adaptive_interval);
  r.read(op, opx, "spair", o.spair);
  r.read(op, opx, "sigma", o.sigma);
  r.read(op, opx, "v", o.v);
  r.read(op, opx, "kappa", o.kappa);
  r.read(op, opx, "n_projections", o.n_projections);
  r.read(op, opx, "projection", o.projection);
  r.read(op, opx, "rank_classes", o.rank_classes);
  r.read(op, opx, "noise_std", o.noise_std);
  r.read(op, opx, "c_init", o.c_init);
  r.check(o.adaptive_interval >= 1, opx + ".K", "objective.parameters.K must be >= 1 (got " + std::to_string(o.adaptive_interval) + ")");
  try {
    spair_by_name(o.spair);
  } catch (const Error& e) {
    r.fail(opx + ".spair", opx + ".spair: " + e.what());
  }
  r.check(o.sigma > 0.0, opx + ".sigma", "objective.parameters.sigma must be positive");
  r.check(o.v > 0.0, opx + ".v", "objective.parameters.v must be positive");
  r.check(o.kappa >= 1, opx + ".kappa", "objective.parameters.kappa must be >= 1");
  r.check(o.n_projections >= 1, opx + ".n_projections", "objective.parameters.n_projections must be >= 1");
  r.check(o.projection == "rademacher" || o.projection == "gaussian", opx + ".projection",
          "objective.parameters.projection must be rademacher or gaussian");
  r.check(o.rank_classes >= 2, opx + ".rank_classes", "objective.parameters.rank_classes must be >= 2");
  r.check(o.noise_std > 0.0, opx + ".noise_std", "objective.parameters.noise_std must be positive");

  const auto& sj = section("sampler");
  r.allow(sj, "sampler", {"preset", "overrides"});
  r.read(sj, "sampler", "preset", cfg.sampler_preset);
  r.check(cfg.sampler_preset == "paper" || cfg.sampler_preset == "matched", "sampler.preset",
          "sampler.preset must be paper or matched");
  ChainConfig& ch = cfg.train.langevin;
  ch = sampler_preset(cfg.sampler_preset);
  const auto& so = sj.contains("overrides") ? sj.at("overrides") : empty;
  const std::string sox = "sampler.overrides";
  r.allow(so, sox, {"steps", "step_size", "noise_scale", "noise_mode", "metropolis_adjust", "divergence_threshold",
                    "buffer_capacity", "rejuvenation", "reset_buffer_on_refresh", "prior_half_width"});
  r.read(so, sox, "steps", ch.steps);
  r.read(so, sox, "step_size", ch.step_size);
  r.read(so, sox, "noise_scale", ch.noise_scale);
  std::string mode = ch.noise_mode == NoiseMode::matched ? "matched" : "decoupled";
  r.read(so, sox, "noise_mode", mode);
  r.check(mode == "matched" || mode == "decoupled", sox + ".noise_mode", "sampler.overrides.noise_mode must be matched or decoupled");
  ch.noise_mode = mode == "matched" ? NoiseMode::matched : NoiseMode::decoupled;
  r.read(so, sox, "metropolis_adjust", ch.metropolis_adjust);
  r.read(so, sox, "divergence_threshold", ch.divergence_threshold);
  r.read(so, sox, "buffer_capacity", cfg.train.buffer_capacity);
  r.read(so, sox, "rejuvenation", cfg.train.rejuvenation);
  r.read(so, sox, "reset_buffer_on_refresh", cfg.train.reset_buffer_on_refresh);
  r.read(so, sox, "prior_half_width", cfg.train.prior_half_width);
  r.check(ch.steps >= 0, sox + ".steps", "sampler.overrides.steps must be >= 0");
  r.check(ch.step_size > 0.0, sox + ".step_size", "sampler.overrides.step_size must be positive");
  r.check(ch.noise_scale >= 0.0, sox + ".noise_scale", "sampler.overrides.noise_scale must be >= 0");
  r.check(ch.divergence_threshold > 0.0, sox + ".divergence_threshold", "sampler.overrides.divergence_threshold must be positive");
  r.check(cfg.train.buffer_capacity >= 1, sox + ".buffer_capacity", "sampler.overrides.buffer_capacity must be >= 1");
  r.check(cfg.train.rejuvenation >= 0.0 && cfg.train.rejuvenation <= 1.0, sox + ".rejuvenation",
          "sampler.overrides.rejuvenation must lie in [0, 1]");
  r.check(cfg.train.prior_half_width > 0.0, sox + ".prior_half_width", "sampler.overrides.prior_half_width must be positive");

  TrainConfig& tr = cfg.train;
  const auto& trj = section("train");
  r.allow(trj, "train", {"T", "N", "optimizer", "seed", "nu_log_interval", "checkpoint_interval", "wall_clock"});
  r.read(trj, "train", "T", tr.iterations);
  r.read(trj, "train", "N", tr.batch_size);
  r.read(trj, "train", "seed", tr.seed);
  r.read(trj, "train", "nu_log_interval", tr.nu_log_interval);
  r.read(trj, "train", "checkpoint_interval", tr.checkpoint_interval);
  r.read(trj, "train", "wall_clock", tr.wall_clock);
  r.check(tr.iterations >= 1, "train.T", "train.T must be >= 1");
  r.check(tr.batch_size >= 1, "train.N", "train.N must be >= 1");
  r.check(tr.nu_log_interval >= 1, "train.nu_log_interval", "train.nu_log_interval must be >= 1");
  r.check(tr.checkpoint_interval >= 0, "train.checkpoint_interval", "train.checkpoint_interval must be >= 0");
  if (trj.contains("optimizer")) {
    const auto& oo = trj.at("optimizer");
    r.allow(oo, "train.optimizer", {"kind", "lr", "beta1", "beta2", "eps"});
    r.read(oo, "train.optimizer", "kind", tr.optimizer.kind);
    r.read(oo, "train.optimizer", "lr", tr.optimizer.lr);
    r.read(oo, "train.optimizer", "beta1", tr.optimizer.beta1);
    r.read(oo, "train.optimizer", "beta2", tr.optimizer.beta2);
    r.read(oo, "train.optimizer", "eps", tr.optimizer.eps);
    try {
      Optimizer check(tr.optimizer);
    } catch (const Error& e) {
      r.fail("train.optimizer", std::string("train.optimizer: ") + e.what());
    }
  }

  const auto& outj = section("output");
  r.allow(outj, "output", {"directory", "samples"});
  r.read(outj, "output", "directory", cfg.output_dir);
  r.read(outj, "output", "samples", cfg.final_samples);
  r.check(cfg.final_samples >= 0, "output.samples", "output.samples must be >= 0");
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str(), path);
}

/// The fully resolved configuration, defaults included, in a fixed key order.
inline nlohmann::ordered_json resolved_json(const RunConfig& c) {
  using oj = nlohmann::ordered_json;
  const TargetConfig& t = c.target;
  oj tp;
  if (t.name == "four_mode")
    tp = {{"c", t.c}, {"stddev", t.stddev}};
  else if (t.name == "two_mode_1d")
    tp = {{"left", t.left}, {"right", t.right}, {"stddev", t.stddev}, {"left_weight", t.left_weight}};
  else
    tp = {{"dim", t.dim}, {"mean", t.mean}, {"variance", t.variance}};
  oj model = {{"kind", c.model.kind}};
  if (c.model.kind == "mlp") {
    model["widths"] = c.model.widths;
    model["spectral_norm"] = c.model.spectral_norm;
    model["leaky_slope"] = c.model.leaky_slope;
    model["power_iters"] = c.model.power_iters;
  }
  const ObjectiveConfig& o = c.train.objective;
  const ChainConfig& ch = c.train.langevin;
  const TrainConfig& tr = c.train;
  oj out;
  out["target"] = {{"name", t.name}, {"parameters", tp}};
  out["model"] = model;
  out["objective"] = {{"name", o.name},
                      {"parameters",
                       {{"K", o.adaptive_interval},
                        {"spair", o.spair},
                        {"sigma", o.sigma},
                        {"v", o.v},
                        {"kappa", o.kappa},
                        {"n_projections", o.n_projections},
                        {"projection", o.projection},
                        {"rank_classes", o.rank_classes},
                        {"noise_std", o.noise_std},
                        {"c_init", o.c_init}}}};
  out["sampler"] = {{"preset", c.sampler_preset},
                    {"overrides",
                     {{"steps", ch.steps},
                      {"step_size", ch.step_size},
                      {"noise_scale", ch.noise_scale},
                      {"noise_mode", ch.noise_mode == NoiseMode::matched ? "matched" : "decoupled"},
                      {"metropolis_adjust", ch.metropolis_adjust},
                      {"divergence_threshold", ch.divergence_threshold},
                      {"buffer_capacity", tr.buffer_capacity},
                      {"rejuvenation", tr.rejuvenation},
                      {"reset_buffer_on_refresh", tr.reset_buffer_on_refresh},
                      {"prior_half_width", tr.prior_half_width}}}};
  out["train"] = {{"T", tr.iterations},
                  {"N", tr.batch_size},
                  {"optimizer",
                   {{"kind", tr.optimizer.kind},
                    {"lr", tr.optimizer.lr},
                    {"beta1", tr.optimizer.beta1},
                    {"beta2", tr.optimizer.beta2},
                    {"eps", tr.optimizer.eps}}},
                  {"seed", tr.seed},
                  {"nu_log_interval", tr.nu_log_interval},
                  {"checkpoint_interval", tr.checkpoint_interval},
                  {"wall_clock", tr.wall_clock}};
  out["output"] = {{"directory", c.output_dir}, {"samples", c.final_samples}};
  return out;
}

inline GaussianMixtureEnergy make_target(const TargetConfig& t) {
  if (t.name == "four_mode") return GaussianMixtureEnergy::four_mode(t.c, t.stddev);
  if (t.name == "two_mode_1d") return GaussianMixtureEnergy::two_mode_1d(t.left, t.right, t.stddev, t.left_weight);
  if (t.name == "gaussian") return GaussianMixtureEnergy::isotropic_normal(Vector::Constant(t.dim, t.mean), t.variance);
  throw ConfigError("unknown target '" + t.name + "'");
}

/// Model initialized from a stream split off the training seed.
inline std::unique_ptr<EnergyModel> make_model(const ModelConfig& m, Eigen::Index d, std::uint64_t seed) {
  if (m.kind == "gaussian") return std::make_unique<AnalyticGaussianEnergy>(AnalyticGaussianEnergy::standard(d));
  MlpOptions o;
  o.widths = m.widths.empty() ? std::vector<Eigen::Index>{d, 64, 64, 1} : m.widths;
  o.spectral_norm = m.spectral_norm;
  o.leaky_slope = m.leaky_slope;
  o.power_iters = m.power_iters;
  Rng rng = Rng(seed).split(0);
  return std::make_unique<MlpEnergy>(o, rng);
}

}  // namespace ebmlab
