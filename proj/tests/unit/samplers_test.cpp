#include "ebmlab/gaussian_energy.hpp"
#include "ebmlab/mlp_energy.hpp"
#include "ebmlab/samplers.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace ebmlab;

namespace {

// 3-state target with a uniform proposal over the other states.
struct DiscreteSetup {
  Vector p = (Vector(3) << 0.5, 0.3, 0.2).finished();
  Matrix q = (Matrix(3, 3) << 0, 0.5, 0.5, 0.5, 0, 0.5, 0.5, 0.5, 0).finished();
};

class ConstantEnergy final : public EnergyModel {
 public:
  explicit ConstantEnergy(Eigen::Index d) : d_(d) {}
  Eigen::Index dim() const override { return d_; }
  Eigen::Index num_params() const override { return 0; }
  Vector params() const override { return Vector(0); }
  std::string kind() const override { return "constant"; }
  std::unique_ptr<EnergyModel> clone() const override { return std::make_unique<ConstantEnergy>(*this); }

 protected:
  void do_set_params(const Vector&) override {}
  double do_energy(const Vector&) const override { return 3.0; }
  Vector do_energy_grad(const Vector&) const override { return Vector::Zero(d_); }
  Vector do_param_grad(const Vector&) const override { return Vector(0); }

 private:
  Eigen::Index d_;
};

AnalyticGaussianEnergy diag_gaussian(const Vector& var) {
  return {Vector::Zero(var.size()), Matrix(var.cwiseInverse().asDiagonal())};
}

}  // namespace

TEST(MetropolisHastings, UphillMoveAlwaysAccepted) {
  EXPECT_EQ(mh_log_acceptance(-1.0, -2.0, 0.0, 0.0), 0.0);
  EXPECT_EQ(mh_log_acceptance(-2.0, -2.0, -0.3, -0.3), 0.0);
  EXPECT_LT(mh_log_acceptance(-3.0, -2.0, 0.0, 0.0), 0.0);
}

TEST(MetropolisHastings, KernelDetailedBalance) {
  DiscreteSetup s;
  const Matrix k = mh_kernel_matrix(s.p, s.q);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(k.row(i).sum(), 1.0, 1e-15);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(s.p[i] * k(i, j), s.p[j] * k(j, i), 1e-12);
  }
  // stationarity follows
  EXPECT_LT((s.p.transpose() * k - s.p.transpose()).norm(), 1e-12);
}

TEST(MetropolisHastings, LongRunFrequencies) {
  DiscreteSetup s;
  Rng rng(99);
  auto log_target = [&](const Vector& x) { return std::log(s.p[static_cast<int>(x[0])]); };
  auto propose = [](const Vector& x, Rng& r) {
    const int cur = static_cast<int>(x[0]);
    int nxt = static_cast<int>(r.uniform_index(2));
    if (nxt >= cur) ++nxt;
    return Proposal{Vector::Constant(1, nxt), std::log(0.5), std::log(0.5)};
  };
  const MhResult res = mh_chain(log_target, propose, Vector::Zero(1), 1000000, rng);
  Vector freq = Vector::Zero(3);
  for (Eigen::Index t = 0; t < res.samples.rows(); ++t) freq[static_cast<int>(res.samples(t, 0))] += 1;
  freq /= static_cast<double>(res.samples.rows());
  EXPECT_LT(0.5 * (freq - s.p).cwiseAbs().sum(), 0.01);
  EXPECT_GT(res.diag.acceptance_rate, 0.0);
  EXPECT_LE(res.diag.acceptance_rate, 1.0);
}

TEST(MetropolisHastings, NonFiniteInitRejected) {
  Rng rng(1);
  auto bad = [](const Vector&) { return -std::numeric_limits<double>::infinity(); };
  auto prop = [](const Vector& x, Rng&) { return Proposal{x, 0.0, 0.0}; };
  EXPECT_THROW(mh_chain(bad, prop, Vector::Zero(1), 10, rng), Error);
}

TEST(Langevin, DegenerateConfigStaysPut) {
  auto g = AnalyticGaussianEnergy::standard(2);
  ChainConfig c = ChainConfig::matched(0.0, 50);
  Rng rng(1);
  const Vector init = Eigen::Vector2d(0.4, -1.1);
  const LangevinResult r = langevin_chain(g, init, c, rng);
  ASSERT_EQ(r.path.rows(), 51);
  for (Eigen::Index i = 0; i < r.path.rows(); ++i) EXPECT_EQ((r.path.row(i).transpose() - init).norm(), 0.0);
}

TEST(Langevin, MatchedModeStandardGaussian) {
  // tau = 1e-3 and K = 1e5 steps per chain, 200 chains, thinned every 2000
  // steps after a 10^4-step burn-in.
  auto g = AnalyticGaussianEnergy::standard(1);
  Rng rng(7);
  const ChainConfig seg = ChainConfig::matched(1e-3, 2000);
  Matrix x = Matrix::Zero(200, 1);
  std::vector<double> kept;
  for (int s = 0; s < 50; ++s) {
    x = langevin_batch(g, x, seg, rng).finals;
    if (s >= 5)
      for (Eigen::Index i = 0; i < x.rows(); ++i) kept.push_back(x(i, 0));
  }
  const Vector v = from_std(kept);
  const double mean = v.mean();
  const double var = (v.array() - mean).square().sum() / (v.size() - 1);
  EXPECT_LT(std::abs(mean), 0.05);
  EXPECT_GE(var, 0.9);
  EXPECT_LE(var, 1.1);
}

TEST(Langevin, MalaRemovesDiscretizationBias) {
  auto g = AnalyticGaussianEnergy::standard(1);
  ChainConfig c = ChainConfig::matched(0.5, 400);
  Rng rng(3);
  const Matrix starts = Matrix::Zero(4000, 1);
  const LangevinBatchResult ula = langevin_batch(g, starts, c, rng);
  c.metropolis_adjust = true;
  const LangevinBatchResult mala = langevin_batch(g, starts, c, rng);
  auto var = [](const Matrix& m) { return m.array().square().mean(); };
  // ULA on N(0,1) has stationary variance 1 / (1 - tau / 4) = 1.1429.
  EXPECT_NEAR(var(ula.finals), 1.0 / (1.0 - 0.5 / 4), 0.06);
  EXPECT_NEAR(var(mala.finals), 1.0, 0.06);
  EXPECT_GT(mala.diag.acceptance_rate, 0.5);
  EXPECT_LT(mala.diag.acceptance_rate, 1.0);
}

TEST(Langevin, PaperPresetRunsOnSpectralMlp) {
  Rng rng(5);
  MlpOptions o;
  o.spectral_norm = true;
  MlpEnergy m(o, rng);
  const ChainConfig c = ChainConfig::paper();
  EXPECT_EQ(c.step_size, 1.0);
  EXPECT_EQ(c.noise_scale, 0.005);
  EXPECT_EQ(c.steps, 100);
  EXPECT_EQ(c.langevin_noise(), 0.005);
  Matrix starts(32, 2);
  for (int i = 0; i < 32; ++i) starts.row(i) = (4.0 * rng.normal_vector(2)).transpose();
  EXPECT_NO_THROW({
    const auto r = langevin_batch(m, starts, c, rng);
    EXPECT_TRUE(r.finals.allFinite());
  });
}

TEST(Langevin, DivergenceGuard) {
  // Energy -x^4 style blow-up via a strongly negative-definite quadratic.
  AnalyticGaussianEnergy g(Vector::Zero(1), Matrix::Constant(1, 1, -3.0));
  ChainConfig c = ChainConfig::matched(1.0, 200);
  Rng rng(2);
  try {
    langevin_chain(g, Vector::Ones(1), c, rng);
    FAIL() << "expected divergence";
  } catch (const SamplerDiverged& e) {
    EXPECT_GT(e.step(), 0);
    EXPECT_EQ(static_cast<int>(e.nu_history().size()), e.step());
    EXPECT_NE(std::string(e.what()).find("sampler diverged"), std::string::npos);
  }
}

TEST(Hmc, EnergyConservationTinyStep) {
  auto g = AnalyticGaussianEnergy::standard(1);
  const Matrix eye = Matrix::Identity(1, 1);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const Vector x = rng.normal_vector(1), v = rng.normal_vector(1);
    const LeapfrogState s = leapfrog(g, x, v, 1e-4, 10, eye);
    EXPECT_LT(std::abs(hamiltonian(g, s.x, s.v, eye) - hamiltonian(g, x, v, eye)), 1e-6);
  }
}

TEST(Hmc, Reversibility) {
  const auto g = diag_gaussian(Eigen::Vector2d(1, 4));
  const Matrix eye = Matrix::Identity(2, 2);
  const Vector x = Eigen::Vector2d(0.3, -1.2), v = Eigen::Vector2d(1.1, 0.4);
  const LeapfrogState fwd = leapfrog(g, x, v, 0.1, 20, eye);
  const LeapfrogState back = leapfrog(g, fwd.x, -fwd.v, 0.1, 20, eye);
  EXPECT_LT((back.x - x).norm(), 1e-10);
  EXPECT_LT((back.v + v).norm(), 1e-10);
}

TEST(Hmc, TwoDimensionalGaussianMoments) {
  const auto g = diag_gaussian(Eigen::Vector2d(1, 4));
  ChainConfig c;
  c.leapfrog_eps = 0.1;
  c.leapfrog_steps = 20;
  Rng rng(13);
  const HmcResult r = hmc_chain(g, Vector::Zero(2), c, 20000, rng);
  EXPECT_GT(r.diag.acceptance_rate, 0.6);
  const GaussianSummary s = gaussian_fit(r.samples);
  EXPECT_NEAR(s.cov(0, 0), 1.0, 0.1);
  EXPECT_NEAR(s.cov(1, 1), 4.0, 0.4);
}

TEST(Hmc, AcceptanceRisesAsStepShrinks) {
  const auto g = diag_gaussian(Eigen::Vector2d(1, 4));
  std::vector<double> acc;
  for (double eps : {0.2, 0.1, 0.05}) {
    ChainConfig c;
    c.leapfrog_eps = eps;
    c.leapfrog_steps = static_cast<int>(std::lround(2.0 / eps));
    Rng rng(21);
    acc.push_back(hmc_chain(g, Vector::Zero(2), c, 3000, rng).diag.acceptance_rate);
  }
  EXPECT_LT(acc[0], acc[1]);
  EXPECT_LT(acc[1], acc[2]);
}

TEST(Hmc, MassMatrixValidated) {
  auto g = AnalyticGaussianEnergy::standard(2);
  ChainConfig c;
  c.mass = Matrix::Identity(3, 3);
  Rng rng(1);
  EXPECT_THROW(hmc_chain(g, Vector::Zero(2), c, 10, rng), Error);
  c.mass = -Matrix::Identity(2, 2);
  EXPECT_THROW(hmc_chain(g, Vector::Zero(2), c, 10, rng), Error);
}

TEST(Gibbs, DecoupledUnits) {
  Vector a(3);
  a << 0.3, -0.5, 1.0;
  const Rbm rbm(Matrix::Zero(3, 2), a, Vector::Zero(2));
  Rng rng(6);
  const MhResult r = gibbs_rbm(rbm, Vector::Ones(3), 40000, rng);
  for (int i = 0; i < 3; ++i) {
    const double frac = (r.samples.col(i).array() > 0).cast<double>().mean();
    EXPECT_NEAR(frac, sigmoid(2 * a[i]), 0.01);
  }
}

TEST(Gibbs, MatchesEnumeration) {
  Rng rng(77);
  const Rbm rbm = Rbm::random(3, 2, 0.8, rng);
  const Vector exact = rbm_exact_marginal(rbm);
  const MhResult r = gibbs_rbm(rbm, -Vector::Ones(3), 201000, rng);
  Vector freq = Vector::Zero(8);
  for (Eigen::Index t = 1000; t < r.samples.rows(); ++t)
    freq[static_cast<Eigen::Index>(rbm_bits_from_state(r.samples.row(t).transpose()))] += 1;
  freq /= freq.sum();
  EXPECT_LT(0.5 * (freq - exact).cwiseAbs().sum(), 0.02);
}

TEST(Gibbs, SaturatedBiasDrivesAllPlus) {
  const Rbm rbm(Matrix::Constant(3, 2, 0.1), Vector::Constant(3, 50.0), Vector::Zero(2));
  Rng rng(1);
  const MhResult r = gibbs_rbm(rbm, -Vector::Ones(3), 3, rng);
  EXPECT_EQ(r.samples.row(2).sum(), 3.0);
}

TEST(Gibbs, BlockProposalsAlwaysAccepted) {
  Rng rng(8);
  const Rbm rbm = Rbm::random(3, 2, 1.0, rng);
  for (std::uint64_t kv = 0; kv < 8; ++kv)
    for (std::uint64_t kh = 0; kh < 4; ++kh)
      for (std::uint64_t kh2 = 0; kh2 < 4; ++kh2) {
        const Vector v = rbm_state_from_bits(kv, 3);
        EXPECT_NEAR(rbm_hidden_block_acceptance(rbm, v, rbm_state_from_bits(kh, 2), rbm_state_from_bits(kh2, 2)),
                    1.0, 1e-12);
      }
  for (std::uint64_t kh = 0; kh < 4; ++kh)
    for (std::uint64_t kv = 0; kv < 8; ++kv)
      for (std::uint64_t kv2 = 0; kv2 < 8; ++kv2)
        EXPECT_NEAR(rbm_visible_block_acceptance(rbm, rbm_state_from_bits(kh, 2), rbm_state_from_bits(kv, 3),
                                                 rbm_state_from_bits(kv2, 3)),
                    1.0, 1e-12);
}

TEST(Gibbs, InvalidStateRejected) {
  Rng rng(1);
  const Rbm rbm = Rbm::random(2, 2, 1.0, rng);
  EXPECT_THROW(gibbs_rbm(rbm, Vector::Zero(2), 5, rng), Error);
}

TEST(ReplayBuffer, AllPriorWhenRateOne) {
  auto prior = std::make_shared<UniformBox>(Vector::Constant(2, -1), Vector::Constant(2, 1));
  ReplayBuffer buf(prior, 100, 1.0);
  Rng rng(1);
  buf.push(Matrix::Constant(5, 2, 7.0), rng);
  const BufferDraw d = buf.init_points(50, rng);
  EXPECT_EQ(d.prior_count(), 50u);
  EXPECT_LE(d.points.cwiseAbs().maxCoeff(), 1.0);
}

TEST(ReplayBuffer, SingletonWhenRateZero) {
  auto prior = std::make_shared<UniformBox>(Vector::Constant(2, -1), Vector::Constant(2, 1));
  ReplayBuffer buf(prior, 100, 0.0);
  Rng rng(1);
  buf.push(Matrix::Constant(1, 2, 7.0), rng);
  const BufferDraw d = buf.init_points(20, rng);
  EXPECT_EQ(d.prior_count(), 0u);
  EXPECT_EQ((d.points.array() == 7.0).count(), 40);
}

TEST(ReplayBuffer, RejuvenationFraction) {
  auto prior = std::make_shared<UniformBox>(Vector::Constant(1, -1), Vector::Constant(1, 1));
  ReplayBuffer buf(prior, 10000, 0.25);
  Rng rng(2);
  buf.push(Matrix::Constant(10, 1, 5.0), rng);
  const BufferDraw d = buffer_init_points(buf, 100000, rng);
  EXPECT_NEAR(static_cast<double>(d.prior_count()) / 100000.0, 0.25, 0.01);
}

TEST(ReplayBuffer, CapacityAndEviction) {
  auto prior = std::make_shared<UniformBox>(Vector::Constant(3, -1), Vector::Constant(3, 1));
  ReplayBuffer buf(prior, 50, 0.25);
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    buf.push(Matrix::Constant(20, 3, static_cast<double>(i)), rng);
    EXPECT_LE(buf.size(), 50u);
  }
  EXPECT_EQ(buf.size(), 50u);
  for (const auto& v : buf.stored()) EXPECT_EQ(v.size(), 3);
  EXPECT_THROW(buf.push(Matrix::Zero(1, 2), rng), Error);
}

TEST(ReplayBuffer, EmptyFallsBackToPrior) {
  auto prior = std::make_shared<UniformBox>(Vector::Constant(1, -1), Vector::Constant(1, 1));
  ReplayBuffer buf(prior, 10, 0.25);
  Rng rng(4);
  const BufferDraw d = buf.init_points(8, rng);
  EXPECT_TRUE(d.fell_back);
  EXPECT_EQ(d.prior_count(), 8u);
  EXPECT_EQ(buf.warnings().size(), 1u);
}

TEST(Nu, Examples) {
  const ConstantEnergy c(2);
  EXPECT_EQ(grad_magnitude_nu(c, Matrix::Ones(4, 2)), 0.0);
  auto g = AnalyticGaussianEnergy::standard(2);
  Matrix path(2, 2);
  path << 1, 0, 0, 2;
  EXPECT_DOUBLE_EQ(grad_magnitude_nu(g, path), 1.5);
  EXPECT_THROW(grad_magnitude_nu(g, Matrix(0, 2)), Error);
}

TEST(Trace, CsvColumns) {
  auto g = AnalyticGaussianEnergy::standard(2);
  Matrix path(2, 2);
  path << 1, 0, 0, 2;
  std::ostringstream os;
  write_trace_csv(os, g, path);
  EXPECT_EQ(os.str(), "step,x0,x1,energy,score_norm\n0,1,0,0.5,1\n1,0,2,2,2\n");
}
