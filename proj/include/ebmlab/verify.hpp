#pragma once

// Self-contained, seeded identity checks behind the `verify` command.

#include "ebmlab/gaussian_energy.hpp"
#include "ebmlab/mixture_energy.hpp"
#include "ebmlab/mlp_energy.hpp"
#include "ebmlab/objectives.hpp"
#include "ebmlab/samplers.hpp"

#include "json.hpp"

namespace ebmlab {

struct CheckResult {
  std::string name;
  bool pass = false;
  double error = 0.0;  // measured, in the units of `tolerance`
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyOptions {
  std::vector<SPair> spairs = spair_catalog();  // replaceable for negative controls
  std::uint64_t seed = 2024;
  int configurations = 50;
};

/// Negative control: a quadratic SPair whose S0' is scaled so that
/// S0'(g) / S1'(g) = 1.1 g.
inline SPair corrupted_spair() {
  SPair bad = spair_quadratic();
  bad.name = "corrupt-quadratic";
  bad.ds0 = [](double u) { return 1.1 * u; };
  return bad;
}

inline const std::vector<std::string>& verify_check_names() {
  static const std::vector<std::string> names{"k1-identity",   "adabrm-equals-adance", "brm-equals-nce",
                                              "scaled-gradient", "dsm-gradient",       "projection-identity",
                                              "detailed-balance", "spair-property"};
  return names;
}

namespace detail {

inline double rel(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

inline double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1.0); }

inline MlpEnergy verify_mlp(Rng& rng, bool sn) {
  MlpOptions o;
  o.widths = {2, 32, 32, 1};
  o.spectral_norm = sn;
  return MlpEnergy(o, rng);
}

inline Matrix gaussian_rows(Eigen::Index n, Eigen::Index d, double scale, Rng& rng) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline CheckResult check_k1_identity(const VerifyOptions& o) {
  CheckResult r{"k1-identity", false, 0.0, 1e-12, ""};
  Rng rng(o.seed);
  for (int k = 0; k < o.configurations; ++k) {
    const MlpEnergy m = verify_mlp(rng, k % 2 == 0);
    const auto frozen = m.snapshot();
    const Matrix x = gaussian_rows(64, 2, 1.0 + 0.05 * k, rng), y = gaussian_rows(64, 2, 2.0, rng);
    const Vector mle = mle_grad(m, x, y).grad;
    r.error = std::max(r.error, rel(adance(m, *frozen, x, y).grad, -0.5 * mle));
  }
  r.detail = "max relative gap to half the negated MLE gradient over " + std::to_string(o.configurations) + " models";
  return r;
}

inline CheckResult check_adabrm_adance(const VerifyOptions& o) {
  CheckResult r{"adabrm-equals-adance", false, 0.0, 1e-10, ""};
  Rng rng(o.seed + 1);
  const SPair lg = spair_log();
  for (int k = 0; k < o.configurations; ++k) {
    const MlpEnergy m = verify_mlp(rng, true);
    const auto frozen = verify_mlp(rng, true).snapshot();
    const Matrix x = gaussian_rows(64, 2, 1.0, rng), y = gaussian_rows(64, 2, 1.5, rng);
    const GradEstimate a = adabrm(m, *frozen, lg, x, y), b = adance(m, *frozen, x, y);
    r.error = std::max({r.error, rel(a.loss, b.loss), rel(a.grad, b.grad)});
  }
  r.detail = "log-type SPair, loss and gradient";
  return r;
}

inline CheckResult check_brm_nce(const VerifyOptions& o) {
  CheckResult r{"brm-equals-nce", false, 0.0, 1e-10, ""};
  Rng rng(o.seed + 2);
  const auto noise = GaussianMixtureEnergy::isotropic_normal(Vector::Zero(2), 4.0);
  const SPair lg = spair_log();
  for (int k = 0; k < o.configurations; ++k) {
    const MlpEnergy m = verify_mlp(rng, true);
    const Matrix x = gaussian_rows(64, 2, 1.0, rng), y = noise.sample_n(64, rng);
    const double c = rng.normal();
    const GradEstimate a = brm(m, c, noise, lg, x, y), b = nce_binary(m, c, noise, x, y, 1.0);
    r.error = std::max({r.error, rel(a.loss, b.loss), rel(a.grad, b.grad)});
  }
  r.detail = "log-type SPair against binary NCE with v = 1, gradient includes c";
  return r;
}

inline CheckResult check_scaled_gradient(const VerifyOptions& o) {
  CheckResult r{"scaled-gradient", false, 0.0, 1e-12, ""};
  Rng rng(o.seed + 3);
  for (const SPair& sp : o.spairs) {
    const MlpEnergy m = verify_mlp(rng, true);
    const auto frozen = m.snapshot();
    const Matrix x = gaussian_rows(64, 2, 1.0, rng), y = gaussian_rows(64, 2, 2.0, rng);
    const Vector expect = -sp.ds0(1.0) * mle_grad(m, x, y).grad;
    const double e = rel(adabrm(m, *frozen, sp, x, y).grad, expect);
    if (e >= r.error) r.detail = "worst SPair: " + sp.name;
    r.error = std::max(r.error, e);
  }
  return r;
}

inline CheckResult check_dsm_gradient(const VerifyOptions& o) {
  CheckResult r{"dsm-gradient", false, 0.0, 3.0, ""};
  const double sigma = 0.5;
  const auto data = GaussianMixtureEnergy::two_mode_1d(-1.5, 1.0, 0.6, 0.4);
  const auto smooth = data.smoothed(sigma);
  const AnalyticGaussianEnergy model(Vector::Constant(1, 0.3), Matrix::Constant(1, 1, 0.8));
  Rng rng(o.seed + 4);
  const Matrix clean = data.sample_n(10000, rng);
  const Matrix noisy = perturb(clean, sigma, rng);
  const Matrix diff = sm_denoising_sample_grads(model, clean, noisy, sigma) -
                      sm_denoising_explicit_sample_grads(model, smooth, noisy);
  for (Eigen::Index j = 0; j < diff.cols(); ++j) {
    const Vector c = diff.col(j);
    const double se = std::sqrt((c.array() - c.mean()).square().sum() / (c.size() - 1) / c.size());
    r.error = std::max(r.error, se > 0.0 ? std::abs(c.mean()) / se : 0.0);
  }
  r.detail = "max |mean difference| in standard errors over parameters, 10^4 shared noise draws";
  return r;
}

inline CheckResult check_projection(const VerifyOptions& o) {
  CheckResult r{"projection-identity", false, 0.0, 1e-10, ""};
  Rng rng(o.seed + 5);
  for (Eigen::Index d = 2; d <= 8; ++d) {
    const Matrix v = rademacher_all(d);
    for (int t = 0; t < 20; ++t) {
      const Vector s = rng.normal_vector(d);
      r.error = std::max(r.error, std::abs((v * s).array().square().mean() - s.squaredNorm()));
    }
  }
  r.detail = "exhaustive Rademacher average of (v.s)^2 against |s|^2, d = 2..8";
  return r;
}

inline CheckResult check_detailed_balance(const VerifyOptions& o) {
  CheckResult r{"detailed-balance", false, 0.0, 1e-12, ""};
  const Vector p = (Vector(3) << 0.5, 0.3, 0.2).finished();
  const Matrix q = (Matrix(3, 3) << 0, 0.5, 0.5, 0.5, 0, 0.5, 0.5, 0.5, 0).finished();
  const Matrix k = mh_kernel_matrix(p, q);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.error = std::max(r.error, std::abs(p[i] * k(i, j) - p[j] * k(j, i)));
  Rng rng(o.seed + 6);
  auto log_target = [&](const Vector& x) { return std::log(p[static_cast<int>(x[0])]); };
  auto propose = [](const Vector& x, Rng& g) {
    const int cur = static_cast<int>(x[0]);
    int nxt = static_cast<int>(g.uniform_index(2));
    if (nxt >= cur) ++nxt;
    return Proposal{Vector::Constant(1, nxt), std::log(0.5), std::log(0.5)};
  };
  const MhResult res = mh_chain(log_target, propose, Vector::Zero(1), 1000000, rng);
  Vector freq = Vector::Zero(3);
  for (Eigen::Index t = 0; t < res.samples.rows(); ++t) freq[static_cast<int>(res.samples(t, 0))] += 1;
  freq /= static_cast<double>(res.samples.rows());
  const double tv = 0.5 * (freq - p).cwiseAbs().sum();
  r.detail = "3-state kernel; empirical TV after 10^6 steps = " + std::to_string(tv) + " (limit 0.01)";
  if (tv >= 0.01) r.error = std::max(r.error, 1.0);  // forces FAIL
  return r;
}

inline CheckResult check_spair_property(const VerifyOptions& o) {
  CheckResult r{"spair-property", false, 0.0, 1e-8, ""};
  for (const SPair& sp : o.spairs) {
    const SPairCheck c = check_spair(sp);
    const double e = std::max(c.ratio_residual, c.min_ds1 > 0.0 ? 0.0 : 1.0);
    if (e >= r.error) r.detail = sp.name + ": ratio residual " + std::to_string(c.ratio_residual) +
                                 (c.message.empty() ? "" : " (" + c.message + ")");
    r.error = std::max(r.error, e);
  }
  return r;
}

}  // namespace detail

inline CheckResult run_check(const std::string& name, const VerifyOptions& o = {}) {
  CheckResult r;
  if (name == "k1-identity")
    r = detail::check_k1_identity(o);
  else if (name == "adabrm-equals-adance")
    r = detail::check_adabrm_adance(o);
  else if (name == "brm-equals-nce")
    r = detail::check_brm_nce(o);
  else if (name == "scaled-gradient")
    r = detail::check_scaled_gradient(o);
  else if (name == "dsm-gradient")
    r = detail::check_dsm_gradient(o);
  else if (name == "projection-identity")
    r = detail::check_projection(o);
  else if (name == "detailed-balance")
    r = detail::check_detailed_balance(o);
  else if (name == "spair-property")
    r = detail::check_spair_property(o);
  else
    throw Error("unknown check '" + name + "'");
  r.pass = std::isfinite(r.error) && r.error <= r.tolerance;
  return r;
}

/// selector is "all" or one check name.
inline std::vector<CheckResult> run_verify(const std::string& selector, const VerifyOptions& o = {}) {
  std::vector<CheckResult> out;
  if (selector == "all") {
    for (const auto& n : verify_check_names()) out.push_back(run_check(n, o));
  } else {
    out.push_back(run_check(selector, o));
  }
  return out;
}

inline nlohmann::ordered_json verify_report(const std::vector<CheckResult>& results) {
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  bool all = true;
  for (const auto& r : results) {
    all = all && r.pass;
    checks.push_back({{"name", r.name},
                      {"status", r.pass ? "PASS" : "FAIL"},
                      {"error", r.error},
                      {"tolerance", r.tolerance},
                      {"detail", r.detail}});
  }
  return {{"all_pass", all}, {"checks", checks}};
}

}  // namespace ebmlab
