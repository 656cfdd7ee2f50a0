#pragma once

// JSON checkpoints: model layout, flat parameters, spectral-norm warm starts,
// optional learned log-partition, Rng state and the buffer prior box.
// Doubles are written in shortest round-trip form, so save/load is bit-exact.

#include "ebmlab/gaussian_energy.hpp"
#include "ebmlab/mlp_energy.hpp"

#include "json.hpp"

#include <fstream>
#include <optional>
#include <sstream>

namespace ebmlab {

class IoError : public Error {
 public:
  using Error::Error;
};

inline constexpr const char* kCheckpointFormat = "ebmlab-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::unique_ptr<EnergyModel> model;
  std::optional<double> log_partition;
  long iteration = 0;
  std::string rng_state;
  std::optional<std::pair<Vector, Vector>> prior_box;
};

namespace detail {

inline nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw Error("corrupt checkpoint: missing field '" + where + key + "'");
  return j.at(key);
}

inline Vector json_vec(const nlohmann::json& j, const std::string& name) {
  if (!j.is_array()) throw Error("corrupt checkpoint: field '" + name + "' must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw Error("corrupt checkpoint: field '" + name + "' entry " + std::to_string(i) + " is not a number");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

}  // namespace detail

inline nlohmann::json model_to_json(const EnergyModel& model) {
  nlohmann::json m;
  m["kind"] = model.kind();
  m["dim"] = model.dim();
  m["params"] = detail::vec_json(model.params());
  if (const auto* mlp = dynamic_cast<const MlpEnergy*>(&model)) {
    const MlpOptions& o = mlp->options();
    m["layout"] = mlp->layout();
    m["widths"] = o.widths;
    m["leaky_slope"] = o.leaky_slope;
    m["spectral_norm"] = o.spectral_norm;
    m["power_iters"] = o.power_iters;
    nlohmann::json us = nlohmann::json::array(), sig = nlohmann::json::array();
    for (std::size_t l = 0; l < mlp->num_layers(); ++l) {
      us.push_back(detail::vec_json(mlp->warm_start(l)));
      sig.push_back(mlp->layer_sigma(l));
    }
    m["warm_starts"] = us;
    m["sigmas"] = sig;
  } else if (dynamic_cast<const AnalyticGaussianEnergy*>(&model)) {
    m["layout"] = "gaussian:" + std::to_string(model.dim());
  } else {
    throw Error("checkpoint: unsupported model kind '" + model.kind() + "'");
  }
  return m;
}

inline std::unique_ptr<EnergyModel> model_from_json(const nlohmann::json& m) {
  const std::string kind = detail::field(m, "kind", "model.").get<std::string>();
  const Vector params = detail::json_vec(detail::field(m, "params", "model."), "model.params");
  if (kind == "gaussian") {
    const auto d = detail::field(m, "dim", "model.").get<Eigen::Index>();
    if (d < 1 || params.size() != d + d * d)
      throw Error("corrupt checkpoint: gaussian of dim " + std::to_string(d) + " needs " +
                  std::to_string(d + d * d) + " params, found " + std::to_string(params.size()));
    auto g = std::make_unique<AnalyticGaussianEnergy>(AnalyticGaussianEnergy::standard(d));
    g->set_params(params);
    return g;
  }
  if (kind == "mlp") {
    MlpOptions o;
    o.widths = detail::field(m, "widths", "model.").get<std::vector<Eigen::Index>>();
    o.leaky_slope = detail::field(m, "leaky_slope", "model.").get<double>();
    o.spectral_norm = detail::field(m, "spectral_norm", "model.").get<bool>();
    o.power_iters = detail::field(m, "power_iters", "model.").get<int>();
    o.initial_power_iters = 1;
    Rng scratch(0);
    auto mlp = std::make_unique<MlpEnergy>(o, scratch);
    if (params.size() != mlp->num_params())
      throw Error("corrupt checkpoint: layout " + mlp->layout() + " needs " + std::to_string(mlp->num_params()) +
                  " params, found " + std::to_string(params.size()));
    mlp->set_params(params);
    const auto& us = detail::field(m, "warm_starts", "model.");
    const Vector sig = detail::json_vec(detail::field(m, "sigmas", "model."), "model.sigmas");
    if (!us.is_array() || us.size() != mlp->num_layers() || static_cast<std::size_t>(sig.size()) != mlp->num_layers())
      throw Error("corrupt checkpoint: expected " + std::to_string(mlp->num_layers()) +
                  " warm-start vectors and sigmas");
    std::vector<Vector> u;
    std::vector<double> s;
    for (std::size_t l = 0; l < mlp->num_layers(); ++l) {
      u.push_back(detail::json_vec(us[l], "model.warm_starts[" + std::to_string(l) + "]"));
      s.push_back(sig[static_cast<Eigen::Index>(l)]);
    }
    mlp->set_spectral_state(u, s);
    if (m.contains("layout") && m["layout"].get<std::string>() != mlp->layout())
      throw Error("corrupt checkpoint: layout '" + m["layout"].get<std::string>() + "' does not match widths");
    return mlp;
  }
  throw Error("corrupt checkpoint: unknown model kind '" + kind + "'");
}

inline std::string checkpoint_to_string(const EnergyModel& model, std::optional<double> log_partition,
                                        long iteration, const Rng& rng,
                                        const std::optional<std::pair<Vector, Vector>>& prior_box = std::nullopt) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["model"] = model_to_json(model);
  j["log_partition"] = log_partition ? nlohmann::json(*log_partition) : nlohmann::json(nullptr);
  j["iteration"] = iteration;
  j["rng"] = rng.state();
  if (prior_box) j["prior"] = {{"lo", detail::vec_json(prior_box->first)}, {"hi", detail::vec_json(prior_box->second)}};
  return j.dump(1) + "\n";
}

inline Checkpoint checkpoint_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("corrupt checkpoint: ") + e.what());
  }
  try {
    if (!j.is_object()) throw Error("corrupt checkpoint: top level must be an object");
    if (detail::field(j, "format", "").get<std::string>() != kCheckpointFormat)
      throw Error("corrupt checkpoint: format tag is not '" + std::string(kCheckpointFormat) + "'");
    const int version = detail::field(j, "version", "").get<int>();
    if (version != kCheckpointVersion)
      throw Error("corrupt checkpoint: unsupported version " + std::to_string(version));
    Checkpoint c;
    c.model = model_from_json(detail::field(j, "model", ""));
    const auto& lp = detail::field(j, "log_partition", "");
    if (!lp.is_null()) c.log_partition = lp.get<double>();
    c.iteration = detail::field(j, "iteration", "").get<long>();
    c.rng_state = detail::field(j, "rng", "").get<std::string>();
    Rng::from_state(c.rng_state);
    if (j.contains("prior")) {
      const auto& p = j["prior"];
      c.prior_box = std::make_pair(detail::json_vec(detail::field(p, "lo", "prior."), "prior.lo"),
                                   detail::json_vec(detail::field(p, "hi", "prior."), "prior.hi"));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("corrupt checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const EnergyModel& model, std::optional<double> log_partition,
                            long iteration, const Rng& rng,
                            const std::optional<std::pair<Vector, Vector>>& prior_box = std::nullopt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path);
  os << checkpoint_to_string(model, log_partition, iteration, rng, prior_box);
  if (!os) throw IoError("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  try {
    return checkpoint_from_string(ss.str());
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace ebmlab
