#include "ebmlab/gaussian_energy.hpp"
#include "ebmlab/mixture_energy.hpp"
#include "ebmlab/mlp_energy.hpp"
#include "ebmlab/objectives.hpp"
#include "ebmlab/optimizer.hpp"

#include <gtest/gtest.h>

using namespace ebmlab;

namespace {

// Adds a constant to another model's energy.
class OffsetEnergy final : public EnergyModel {
 public:
  OffsetEnergy(const EnergyModel& base, double kappa) : base_(base.clone()), kappa_(kappa) {}
  OffsetEnergy(const OffsetEnergy& o) : EnergyModel(o), base_(o.base_->clone()), kappa_(o.kappa_) {}
  Eigen::Index dim() const override { return base_->dim(); }
  Eigen::Index num_params() const override { return base_->num_params(); }
  Vector params() const override { return base_->params(); }
  std::string kind() const override { return "offset"; }
  std::unique_ptr<EnergyModel> clone() const override { return std::make_unique<OffsetEnergy>(*this); }

 protected:
  void do_set_params(const Vector& p) override { base_->set_params(p); }
  double do_energy(const Vector& x) const override { return base_->energy(x) + kappa_; }
  Vector do_energy_grad(const Vector& x) const override { return base_->energy_grad(x); }
  Vector do_param_grad(const Vector& x) const override { return base_->param_grad(x); }

 private:
  std::unique_ptr<EnergyModel> base_;
  double kappa_;
};

class ConstantEnergy final : public EnergyModel {
 public:
  explicit ConstantEnergy(Eigen::Index d) : d_(d) {}
  Eigen::Index dim() const override { return d_; }
  Eigen::Index num_params() const override { return 1; }
  Vector params() const override { return Vector::Constant(1, k_); }
  std::string kind() const override { return "constant"; }
  std::unique_ptr<EnergyModel> clone() const override { return std::make_unique<ConstantEnergy>(*this); }

 protected:
  void do_set_params(const Vector& p) override { k_ = p[0]; }
  double do_energy(const Vector&) const override { return k_; }
  Vector do_energy_grad(const Vector&) const override { return Vector::Zero(d_); }
  Vector do_param_grad(const Vector&) const override { return Vector::Ones(1); }
  double do_laplacian(const Vector&) const override { return 0.0; }
  Vector do_laplacian_param_grad(const Vector&) const override { return Vector::Zero(1); }
  Vector do_mixed_param_grad(const Vector&, const Vector&) const override { return Vector::Zero(1); }

 private:
  Eigen::Index d_;
  double k_ = 0.4;
};

Matrix normal_rows(Eigen::Index n, Eigen::Index d, double scale, Rng& rng) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) m.row(i) = (scale * rng.normal_vector(d)).transpose();
  return m;
}

MlpEnergy mlp(std::uint64_t seed, Eigen::Index d = 2, bool sn = true) {
  Rng rng(seed);
  MlpOptions o;
  o.widths = {d, 16, 16, 1};
  o.spectral_norm = sn;
  return MlpEnergy(o, rng);
}

double rel_err(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// Central differences of `loss(params)` on a random subset of coordinates,
// compared with grad.
void check_fd(EnergyModel& model, const std::function<GradEstimate()>& eval, std::uint64_t seed,
              double tol = 1e-4) {
  const GradEstimate g = eval();
  const Vector p0 = model.params();
  Rng rng(seed);
  const int n_check = std::min<int>(10, static_cast<int>(p0.size()));
  for (int k = 0; k < n_check; ++k) {
    const Eigen::Index i = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(p0.size())));
    const double h = 1e-6 * std::max(1.0, std::abs(p0[i]));
    Vector pp = p0, pm = p0;
    pp[i] += h;
    pm[i] -= h;
    model.set_params(pp);
    const double lp = eval().loss;
    model.set_params(pm);
    const double lm = eval().loss;
    model.set_params(p0);
    const double fd = (lp - lm) / (2 * h);
    EXPECT_LE(std::abs(fd - g.grad[i]), tol * std::max(1.0, std::abs(fd))) << "param " << i;
  }
}

std::shared_ptr<GaussianMixtureEnergy> std_normal_density(Eigen::Index d, double var = 1.0) {
  return std::make_shared<GaussianMixtureEnergy>(GaussianMixtureEnergy::isotropic_normal(Vector::Zero(d), var));
}

}  // namespace

// --- MLE --------------------------------------------------------------------

TEST(Mle, IdenticalBatchesGiveZero) {
  auto m = mlp(1);
  Rng rng(2);
  const Matrix x = normal_rows(32, 2, 1.0, rng);
  EXPECT_EQ(mle_grad(m, x, x).grad.norm(), 0.0);
  EXPECT_THROW(mle_grad(m, Matrix(0, 2), x), Error);
}

TEST(Mle, GaussianMeanDirection) {
  auto g = AnalyticGaussianEnergy::standard(2);
  const Vector delta = Eigen::Vector2d(0.5, -0.25);
  Matrix data = Matrix::Zero(4, 2), model = Matrix::Zero(4, 2);
  data.rowwise() += delta.transpose();
  // grad wrt mu of E is -(x - mu); mean over model - mean over data = delta
  const Vector grad = mle_grad(g, data, model).grad;
  EXPECT_LT((grad.head(2) - delta).norm(), 1e-15);
}

TEST(Mle, SurrogateGradientIsNegated) {
  auto m = mlp(3);
  Rng rng(4);
  const Matrix x = normal_rows(16, 2, 1.0, rng), y = normal_rows(16, 2, 2.0, rng);
  // loss = mean E(data) - mean E(model) has gradient -grad
  check_fd(m, [&] {
    GradEstimate g = mle_grad(m, x, y);
    g.grad = -g.grad;
    return g;
  }, 5);
}

// --- NCE ----------------------------------------------------------------------

TEST(Nce, IndistinguishableClasses) {
  auto g = AnalyticGaussianEnergy::standard(1);
  auto noise = std_normal_density(1);
  Rng rng(1);
  const Matrix x = normal_rows(20, 1, 1.0, rng), y = normal_rows(20, 1, 1.0, rng);
  const double c = 0.5 * std::log(2 * M_PI);
  EXPECT_NEAR(nce_binary(g, c, *noise, x, y, 1.0).loss, 2 * std::log(2.0), 1e-12);
}

TEST(Nce, GradientsMatchFiniteDifferences) {
  auto m = mlp(6, 1);
  auto noise = std_normal_density(1, 4.0);
  Rng rng(7);
  const Matrix x = normal_rows(24, 1, 1.0, rng), y = noise->sample_n(40, rng);
  double c = 0.3;
  check_fd(m, [&] { return nce_binary(m, c, *noise, x, y, 0.6); }, 8);
  const GradEstimate g = nce_binary(m, c, *noise, x, y, 0.6);
  ASSERT_TRUE(g.has_log_partition);
  EXPECT_EQ(g.grad.size(), m.num_params() + 1);
  const double h = 1e-6;
  const double fd = (nce_binary(m, c + h, *noise, x, y, 0.6).loss - nce_binary(m, c - h, *noise, x, y, 0.6).loss) /
                    (2 * h);
  EXPECT_NEAR(g.log_partition_grad(), fd, 1e-6);
}

TEST(Nce, RequiresExactNoise) {
  auto m = mlp(1);
  FrozenNoise fz{m.snapshot(), ChainConfig{}, nullptr};
  NoiseSpec spec = fz;
  Rng rng(1);
  const Matrix x = normal_rows(4, 2, 1.0, rng);
  EXPECT_THROW(nce_binary(m, 0.0, spec, x, x), Error);
}

TEST(Nce, OverflowSafe) {
  Matrix pts(2, 1);
  pts << -3, 3;
  auto noise = std_normal_density(1);
  auto m = AnalyticGaussianEnergy(Vector::Zero(1), Matrix::Constant(1, 1, 1000.0));
  const GradEstimate g = nce_binary(m, -500.0, *noise, pts, pts);
  EXPECT_TRUE(std::isfinite(g.loss));
  EXPECT_TRUE(g.grad.allFinite());
}

TEST(RankNce, UniformPosteriorWhenModelIsNoise) {
  auto g = AnalyticGaussianEnergy::standard(2);
  auto noise = std_normal_density(2);
  Rng rng(2);
  const double c = std::log(2 * M_PI);
  const Vector rho = Vector::Constant(4, 0.25);
  std::vector<Matrix> cols{normal_rows(4, 2, 1.0, rng), normal_rows(4, 2, 1.0, rng)};
  const Vector post = rank_posterior(g, c, *noise, cols[0], rho);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(post[i], 0.25, 1e-12);
  EXPECT_NEAR(nce_rank(g, c, *noise, cols, {0, 3}, rho).loss, std::log(4.0), 1e-12);
}

TEST(RankNce, PairMatchesBinaryPosterior) {
  auto m = mlp(9);
  auto noise = std_normal_density(2, 3.0);
  Rng rng(10);
  const Vector rho = Vector::Constant(2, 0.5);
  for (int t = 0; t < 50; ++t) {
    const Matrix pair = normal_rows(2, 2, 2.0, rng);
    const double c = rng.normal();
    const Vector post = rank_posterior(m, c, *noise, pair, rho);
    // binary posterior with v = 1 where the "model" density of the pair is
    // p_theta(x1) p_n(x2) and the "noise" density is p_theta(x2) p_n(x1)
    const Vector x1 = pair.row(0).transpose(), x2 = pair.row(1).transpose();
    const double log_model = -m.energy(x1) - c + noise->log_pdf(x2);
    const double log_noise = -m.energy(x2) - c + noise->log_pdf(x1);
    EXPECT_NEAR(post[0], binary_posterior(log_model, log_noise, 1.0)[0], 1e-12);
  }
}

TEST(RankNce, ShiftInvariance) {
  auto m = mlp(11);
  auto noise = std_normal_density(2);
  Rng rng(12);
  const Vector rho = (Vector(3) << 0.2, 0.5, 0.3).finished();
  const Matrix col = normal_rows(3, 2, 1.0, rng);
  const OffsetEnergy shifted(m, 7.5);
  EXPECT_LT((rank_posterior(m, 0.1, *noise, col, rho) - rank_posterior(shifted, 0.1, *noise, col, rho)).norm(),
            1e-12);
}

TEST(RankNce, GradientsAndValidation) {
  auto m = mlp(13);
  auto noise = std_normal_density(2, 2.0);
  Rng rng(14);
  const Vector rho = (Vector(3) << 0.2, 0.5, 0.3).finished();
  const Matrix data = normal_rows(10, 2, 1.0, rng);
  const auto [cols, idx] = make_rank_collections(data, *noise, rho, rng);
  check_fd(m, [&] { return nce_rank(m, 0.0, *noise, cols, idx, rho); }, 15);
  EXPECT_THROW(nce_rank(m, 0.0, *noise, cols, idx, Vector::Constant(3, 0.5)), Error);
}

// --- CNCE ---------------------------------------------------------------------

TEST(Cnce, ConstantEnergyPosterior) {
  const ConstantEnergy k(2);
  Rng rng(1);
  for (double v : {0.5, 1.0, 3.0}) {
    const Vector x = rng.normal_vector(2), y = rng.normal_vector(2);
    EXPECT_NEAR(cnce_posterior(k, x, y, v), 1.0 / (1.0 + v), 1e-15);
  }
  auto m = mlp(2);
  const Vector x = rng.normal_vector(2);
  EXPECT_NEAR(cnce_posterior(m, x, x, 2.0), 1.0 / 3.0, 1e-15);
}

TEST(Cnce, GradientsMatchFiniteDifferences) {
  auto m = mlp(3);
  Rng rng(4);
  const Matrix x = normal_rows(12, 2, 1.0, rng);
  const Matrix y = cnce_noise(x, 0.5, 1, rng);
  check_fd(m, [&] { return cnce_pairs(m, x, y, 1.7); }, 5);
  EXPECT_THROW(cnce(m, x, 0.0, 1, 1.0, rng), Error);
}

TEST(Cnce, RecoversGaussianVariance) {
  // target N(1, 2^2); model precision should approach 1/4
  AnalyticGaussianEnergy g(Vector::Zero(1), Matrix::Identity(1, 1));
  Optimizer opt({"adam", 0.02, 0.9, 0.999, 1e-8});
  Optimizer fine({"adam", 0.002, 0.9, 0.999, 1e-8});
  Rng rng(6);
  for (int t = 0; t < 4000; ++t) {
    Matrix x = normal_rows(256, 1, 2.0, rng).array() + 1.0;
    const GradEstimate est = cnce(g, x, 1.0, 1, 1.0, rng);
    g.set_params((t < 2000 ? opt : fine).step(g.params(), est.grad));
  }
  const double var = 1.0 / g.precision()(0, 0);
  EXPECT_NEAR(var / 4.0, 1.0, 0.1);
}

// --- AdaNCE / BRM ---------------------------------------------------------------

TEST(AdaNce, EqualParametersHalfPosterior) {
  auto m = mlp(20);
  auto snap = m.snapshot();
  Rng rng(21);
  const Matrix x = normal_rows(64, 2, 1.0, rng), y = normal_rows(64, 2, 2.0, rng);
  const GradEstimate a = adance(m, *snap, x, y);
  EXPECT_NEAR(a.loss, 2 * std::log(2.0), 1e-12);
  const GradEstimate ml = mle_grad(m, x, y);
  EXPECT_LE(rel_err(a.grad, -0.5 * ml.grad), 1e-12);
}

TEST(AdaNce, RejectsUnfrozenNoise) {
  auto m = mlp(22);
  auto other = mlp(23);
  Rng rng(1);
  const Matrix x = normal_rows(4, 2, 1.0, rng);
  EXPECT_THROW(adance(m, m, x, x), Error);
  EXPECT_THROW(adance(m, other, x, x), Error);
  try {
    adance(m, other, x, x);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("noise model must be frozen"), std::string::npos);
  }
}

TEST(AdaNce, CommonOffsetInvariance) {
  auto m = mlp(24);
  auto frozen_base = mlp(25);
  Rng rng(26);
  const Matrix x = normal_rows(16, 2, 1.0, rng), y = normal_rows(16, 2, 1.0, rng);
  auto f0 = frozen_base.snapshot();
  const OffsetEnergy m_shift(m, 4.25);
  auto f_shift = OffsetEnergy(frozen_base, 4.25).snapshot();
  EXPECT_NEAR(adance(m, *f0, x, y).loss, adance(m_shift, *f_shift, x, y).loss, 1e-12);
}

TEST(AdaNce, GradientsMatchFiniteDifferences) {
  auto m = mlp(27);
  auto f = mlp(28).snapshot();
  Rng rng(29);
  const Matrix x = normal_rows(16, 2, 1.0, rng), y = normal_rows(16, 2, 1.5, rng);
  check_fd(m, [&] { return adance(m, *f, x, y); }, 30);
}

TEST(AdaNce, OverflowSafe) {
  const ConstantEnergy lo(1);
  ConstantEnergy hi(1);
  hi.set_params(Vector::Constant(1, 500.0));
  auto f = hi.snapshot();
  ConstantEnergy model(1);
  model.set_params(Vector::Constant(1, -500.0));
  const Matrix x = Matrix::Zero(3, 1);
  const GradEstimate g = adance(model, *f, x, x);
  EXPECT_TRUE(std::isfinite(g.loss));
  EXPECT_TRUE(g.grad.allFinite());
}

TEST(SPairs, CatalogValidates) {
  const auto cat = spair_catalog();
  ASSERT_GE(cat.size(), 3u);
  for (const auto& p : cat) {
    const SPairCheck c = check_spair(p);
    EXPECT_TRUE(c.ok) << p.name << ": " << c.message;
    EXPECT_LE(c.ratio_residual, 1e-8);
    // S1 = Psi', S0 = u Psi' - Psi
    for (double u : {0.3, 1.0, 2.5, 7.0}) {
      EXPECT_NEAR(p.s1(u), p.psi.df(u), 1e-12);
      EXPECT_NEAR(p.s0(u), u * p.psi.df(u) - p.psi.f(u), 1e-12);
    }
  }
}

TEST(SPairs, CorruptedPairFails) {
  SPair bad = spair_quadratic();
  bad.name = "corrupt";
  bad.ds0 = [](double u) { return 1.1 * u; };
  const SPairCheck c = check_spair(bad);
  EXPECT_FALSE(c.ok);
  EXPECT_GT(c.ratio_residual, 0.5);
  EXPECT_THROW(validate_spair(bad), Error);
}

TEST(Bregman, PointExamples) {
  EXPECT_DOUBLE_EQ(bregman_point(spair_quadratic(), 3.0, 1.0), 2.0);
  EXPECT_NEAR(bregman_point(spair_kl(), 2.0, 1.0), 2 * std::log(2.0) - 1, 1e-15);
  for (const auto& p : spair_catalog())
    for (double x : {0.2, 1.0, 4.0}) EXPECT_EQ(bregman_point(p, x, x), 0.0);
  EXPECT_THROW(bregman_point(spair_kl(), -1.0, 1.0), Error);
  EXPECT_THROW(bregman_point(spair_log(), 1.0, 0.0), Error);
}

TEST(Bregman, NonNegativeOnGrid) {
  for (const auto& p : spair_catalog())
    for (int i = 1; i <= 40; ++i)
      for (int j = 1; j <= 40; ++j) {
        const double x = 0.25 * i, y = 0.25 * j;
        const double d = bregman_point(p, x, y);
        if (i == j)
          EXPECT_EQ(d, 0.0);
        else
          EXPECT_GT(d, 0.0) << p.name << " " << x << " " << y;
      }
  const Vector a = Eigen::Vector3d(1, 2, 3), b = Eigen::Vector3d(2, 2, 1);
  EXPECT_DOUBLE_EQ(bregman_point(spair_quadratic().psi, a, b), 0.5 * (a - b).squaredNorm());
}

TEST(Brm, LogTypeEqualsNce) {
  auto noise = std_normal_density(2, 2.0);
  const SPair lg = spair_log();
  for (int t = 0; t < 50; ++t) {
    auto m = mlp(100 + t);
    Rng rng(200 + t);
    const Matrix x = normal_rows(32, 2, 1.0, rng), y = noise->sample_n(32, rng);
    const double c = rng.normal();
    const GradEstimate a = brm(m, c, *noise, lg, x, y), b = nce_binary(m, c, *noise, x, y, 1.0);
    EXPECT_LE(std::abs(a.loss - b.loss), 1e-10 * std::max(1.0, std::abs(b.loss)));
    EXPECT_LE(rel_err(a.grad, b.grad), 1e-10);
  }
}

TEST(Brm, UnitRatioLosses) {
  auto g = AnalyticGaussianEnergy::standard(1);
  auto noise = std_normal_density(1);
  Rng rng(3);
  const Matrix x = normal_rows(10, 1, 1.0, rng);
  const double c = 0.5 * std::log(2 * M_PI);
  EXPECT_NEAR(brm(g, c, *noise, spair_log(), x, x).loss, 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(brm(g, c, *noise, spair_quadratic(), x, x).loss, -0.5, 1e-12);
}

TEST(Brm, GradientsMatchFiniteDifferences) {
  auto noise = std_normal_density(2, 2.0);
  for (const auto& sp : spair_catalog()) {
    auto m = mlp(31);
    Rng rng(32);
    const Matrix x = normal_rows(16, 2, 1.0, rng), y = noise->sample_n(16, rng);
    check_fd(m, [&] { return brm(m, 2.0, *noise, sp, x, y); }, 33);
    const double h = 1e-6;
    const double fd = (brm(m, 2.0 + h, *noise, sp, x, y).loss - brm(m, 2.0 - h, *noise, sp, x, y).loss) / (2 * h);
    EXPECT_NEAR(brm(m, 2.0, *noise, sp, x, y).log_partition_grad(), fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Brm, RatioOverflow) {
  auto g = AnalyticGaussianEnergy::standard(1);
  auto noise = std_normal_density(1);
  const Matrix x = Matrix::Zero(2, 1);
  try {
    brm(g, -800.0, *noise, spair_kl(), x, x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("ratio overflow"), std::string::npos);
  }
}

TEST(AdaBrm, LogTypeEqualsAdaNce) {
  for (int t = 0; t < 50; ++t) {
    auto m = mlp(300 + t);
    auto f = mlp(400 + t).snapshot();
    Rng rng(500 + t);
    const Matrix x = normal_rows(32, 2, 1.0, rng), y = normal_rows(32, 2, 1.5, rng);
    const GradEstimate a = adabrm(m, *f, spair_log(), x, y), b = adance(m, *f, x, y);
    EXPECT_LE(std::abs(a.loss - b.loss), 1e-10 * std::max(1.0, std::abs(b.loss)));
    EXPECT_LE(rel_err(a.grad, b.grad), 1e-10);
  }
}

TEST(AdaBrm, ScaledMleGradientAtEqualParameters) {
  for (const auto& sp : spair_catalog()) {
    auto m = mlp(41);
    auto f = m.snapshot();
    Rng rng(42);
    const Matrix x = normal_rows(64, 2, 1.0, rng), y = normal_rows(64, 2, 2.0, rng);
    const GradEstimate a = adabrm(m, *f, sp, x, y);
    EXPECT_LE(rel_err(a.grad, -sp.ds0(1.0) * mle_grad(m, x, y).grad), 1e-12) << sp.name;
  }
}

TEST(AdaBrm, OffsetInvariance) {
  auto m = mlp(43);
  auto fb = mlp(44);
  Rng rng(45);
  const Matrix x = normal_rows(16, 2, 1.0, rng), y = normal_rows(16, 2, 1.0, rng);
  for (const auto& sp : spair_catalog()) {
    const GradEstimate a = adabrm(m, *fb.snapshot(), sp, x, y);
    const GradEstimate b = adabrm(OffsetEnergy(m, 3.0), *OffsetEnergy(fb, 3.0).snapshot(), sp, x, y);
    EXPECT_NEAR(a.loss, b.loss, 1e-12 * std::max(1.0, std::abs(a.loss)));
    EXPECT_LE((a.grad - b.grad).norm(), 1e-12 * std::max(1.0, a.grad.norm()));
  }
}

TEST(AdaBrm, GradientsMatchFiniteDifferences) {
  for (const auto& sp : spair_catalog()) {
    auto m = mlp(46);
    auto f = mlp(47).snapshot();
    Rng rng(48);
    const Matrix x = normal_rows(16, 2, 1.0, rng), y = normal_rows(16, 2, 1.0, rng);
    check_fd(m, [&] { return adabrm(m, *f, sp, x, y); }, 49);
  }
}

// --- Score matching -------------------------------------------------------------

TEST(ScoreMatching, ConstantEnergyZeroLoss) {
  const ConstantEnergy k(3);
  Rng rng(1);
  const Matrix x = normal_rows(10, 3, 1.0, rng);
  EXPECT_EQ(sm_implicit(k, x).loss, 0.0);
  EXPECT_EQ(sm_sliced(k, x, 2, ProjectionDist::rademacher, rng).loss, 0.0);
  EXPECT_EQ(sm_sliced(k, x, 2, ProjectionDist::gaussian, rng).loss, 0.0);
}

TEST(ScoreMatching, StandardModelAtOwnSamples) {
  const Eigen::Index d = 3;
  auto g = AnalyticGaussianEnergy::standard(d);
  Rng rng(2);
  const Matrix x = normal_rows(20000, d, 1.0, rng);
  const double loss = sm_implicit(g, x).loss;
  const Vector per = 0.5 * x.rowwise().squaredNorm().array() - static_cast<double>(d);
  const double se = std::sqrt((per.array() - per.mean()).square().sum() / (per.size() - 1) / per.size());
  EXPECT_LT(std::abs(loss + d / 2.0), 3 * se);
}

TEST(ScoreMatching, ImplicitRecoversPrecision) {
  Matrix cov(2, 2);
  cov << 2.0, 0.6, 0.6, 0.5;
  const Matrix l = cov.llt().matrixL();
  Rng rng(3);
  Matrix data(4000, 2);
  for (Eigen::Index i = 0; i < data.rows(); ++i) data.row(i) = (l * rng.normal_vector(2)).transpose();
  AnalyticGaussianEnergy g = AnalyticGaussianEnergy::standard(2);
  Optimizer opt({"adam", 0.02, 0.9, 0.999, 1e-8});
  for (int t = 0; t < 1500; ++t) g.set_params(opt.step(g.params(), sm_implicit(g, data).grad));
  const Matrix target = cov.inverse();
  EXPECT_LT((g.precision() - target).norm() / target.norm(), 0.05);
}

TEST(ScoreMatching, ImplicitGradientsMatchFiniteDifferences) {
  Matrix p(2, 2);
  p << 1.3, 0.2, 0.4, 0.8;
  AnalyticGaussianEnergy g(Eigen::Vector2d(0.3, -0.2), p);
  Rng rng(4);
  const Matrix x = normal_rows(20, 2, 1.0, rng);
  check_fd(g, [&] { return sm_implicit(g, x); }, 5);
  auto m = mlp(6);
  check_fd(m, [&] { return sm_implicit(m, x); }, 7);
}

TEST(Dsm, ZeroScoreModel) {
  const ConstantEnergy k(2);
  Rng rng(8);
  const Matrix x = normal_rows(50, 2, 1.0, rng);
  const double sigma = 0.3;
  const Matrix noisy = perturb(x, sigma, rng);
  const Matrix eps = (noisy - x) / sigma;
  EXPECT_NEAR(sm_denoising_pairs(k, x, noisy, sigma).loss,
              0.5 * (eps / sigma).rowwise().squaredNorm().mean(), 1e-12);
  Rng big(9);
  const Matrix xb = Matrix::Zero(100000, 2);
  EXPECT_NEAR(sm_denoising(k, xb, sigma, big).loss, 2.0 / (2 * sigma * sigma), 0.1);
  EXPECT_THROW(sm_denoising(k, x, 0.0, rng), Error);
}

TEST(Dsm, GradientsMatchFiniteDifferences) {
  auto m = mlp(10);
  Rng rng(11);
  const Matrix x = normal_rows(20, 2, 1.0, rng);
  const Matrix noisy = perturb(x, 0.4, rng);
  check_fd(m, [&] { return sm_denoising_pairs(m, x, noisy, 0.4); }, 12);
  auto target = GaussianMixtureEnergy::four_mode(1.0, 0.5).smoothed(0.4);
  check_fd(m, [&] { return sm_denoising_explicit(m, target, noisy); }, 13);
}

TEST(Dsm, ExplicitAndConditionalGradientsAgree) {
  const double sigma = 0.5;
  const auto data_dist = GaussianMixtureEnergy::two_mode_1d(-1.5, 1.0, 0.6, 0.4);
  const auto smooth = data_dist.smoothed(sigma);
  Matrix p = Matrix::Constant(1, 1, 0.8);
  const AnalyticGaussianEnergy model(Vector::Constant(1, 0.3), p);
  Rng rng(14);
  const Matrix clean = data_dist.sample_n(10000, rng);
  const Matrix noisy = perturb(clean, sigma, rng);
  const Matrix diff =
      sm_denoising_sample_grads(model, clean, noisy, sigma) - sm_denoising_explicit_sample_grads(model, smooth, noisy);
  for (Eigen::Index j = 0; j < diff.cols(); ++j) {
    const Vector c = diff.col(j);
    const double se = std::sqrt((c.array() - c.mean()).square().sum() / (c.size() - 1) / c.size());
    EXPECT_LE(std::abs(c.mean()), 3 * se) << "param " << j;
  }
}

TEST(Sliced, ExhaustiveRademacherProjection) {
  Rng rng(15);
  for (Eigen::Index d = 2; d <= 8; ++d) {
    const Matrix v = rademacher_all(d);
    for (int t = 0; t < 20; ++t) {
      const Vector s = rng.normal_vector(d);
      const double avg = (v * s).array().square().mean();
      EXPECT_NEAR(avg, s.squaredNorm(), 1e-10);
    }
  }
}

TEST(Sliced, ExhaustiveEqualsImplicitOnGaussian) {
  Matrix p(3, 3);
  p << 1.5, 0.2, 0.1, 0.2, 0.9, -0.3, 0.1, -0.3, 1.2;
  const AnalyticGaussianEnergy g(Eigen::Vector3d(0.1, 0.2, -0.4), p);
  Rng rng(16);
  const Matrix x = normal_rows(40, 3, 1.0, rng);
  EXPECT_NEAR(sm_sliced_with(g, x, rademacher_all(3)).loss, sm_implicit(g, x).loss, 1e-6);
}

TEST(Sliced, GradientsMatchFiniteDifferences) {
  Matrix p(2, 2);
  p << 1.3, 0.2, 0.4, 0.8;
  AnalyticGaussianEnergy g(Eigen::Vector2d(0.3, -0.2), p);
  Rng rng(17);
  const Matrix x = normal_rows(20, 2, 1.0, rng);
  const Matrix v = draw_projections(3, 2, ProjectionDist::gaussian, rng);
  check_fd(g, [&] { return sm_sliced_with(g, x, v); }, 18);
  auto m = mlp(19);
  check_fd(m, [&] { return sm_sliced_with(m, x, v); }, 20);
  EXPECT_THROW(sm_sliced(m, x, 0, ProjectionDist::rademacher, rng), Error);
}
