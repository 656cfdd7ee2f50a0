#include "ebmlab/eval.hpp"
#include "ebmlab/gaussian_energy.hpp"
#include "ebmlab/mixture_energy.hpp"
#include "ebmlab/mlp_energy.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace ebmlab;

namespace {

GaussianSummary summary(Vector mean, Matrix cov) { return {std::move(mean), std::move(cov)}; }

Matrix random_spd(Eigen::Index d, Rng& rng) {
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + 0.05 * Matrix::Identity(d, d);
}

}  // namespace

TEST(Frechet, Examples) {
  const Matrix i2 = Matrix::Identity(2, 2);
  const auto a = summary(Vector::Zero(2), i2);
  EXPECT_NEAR(frechet_gaussian(a, a), 0.0, 1e-10);
  EXPECT_NEAR(frechet_gaussian(a, summary(Eigen::Vector2d(3, 4), i2)), 25.0, 1e-10);
  EXPECT_NEAR(frechet_gaussian(a, summary(Vector::Zero(2), 4 * i2)), 2.0, 1e-10);
  EXPECT_THROW(frechet_gaussian(a, summary(Vector::Zero(3), Matrix::Identity(3, 3))), Error);
}

TEST(Frechet, SymmetryAndTranslation) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto a = summary(rng.normal_vector(3), random_spd(3, rng));
    const auto b = summary(rng.normal_vector(3), random_spd(3, rng));
    const double ab = frechet_gaussian(a, b);
    EXPECT_GE(ab, 0.0);
    EXPECT_NEAR(ab, frechet_gaussian(b, a), 1e-8 * std::max(1.0, ab));
    const Vector s = 5.0 * rng.normal_vector(3);
    EXPECT_NEAR(frechet_gaussian(summary(a.mean + s, a.cov), summary(b.mean + s, b.cov)), ab,
                1e-8 * std::max(1.0, ab));
  }
}

TEST(Frechet, FromSamples) {
  Rng rng(2);
  Matrix x(20000, 2), y(20000, 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x.row(i) = rng.normal_vector(2).transpose();
    y.row(i) = (2.0 * rng.normal_vector(2)).transpose();
  }
  EXPECT_NEAR(frechet_samples(x, y), 2.0, 0.1);
}

TEST(OracleLikelihood, Examples) {
  const auto n01 = GaussianMixtureEnergy::isotropic_normal(Vector::Zero(1), 1.0);
  EXPECT_NEAR(oracle_log_likelihood(n01, Matrix::Zero(1, 1)), -0.5 * std::log(2 * M_PI), 1e-12);
  const auto mix = GaussianMixtureEnergy::four_mode();
  Matrix mode(1, 2);
  mode << 4, 4;
  EXPECT_NEAR(oracle_log_likelihood(mix, mode), mix.log_pdf(mode.row(0).transpose()), 1e-15);
  Rng rng(3);
  const Matrix s = n01.sample_n(100000, rng);
  EXPECT_NEAR(oracle_log_likelihood(n01, s), -0.5 * (1 + std::log(2 * M_PI)), 0.01);
  EXPECT_THROW(oracle_log_likelihood(n01, Matrix(0, 1)), Error);
}

TEST(GridKl, ExactMatch) {
  const auto mix = GaussianMixtureEnergy::four_mode();
  EXPECT_LT(std::abs(grid_kl(mix, mix, GridSpec::uniform(2, -12, 12, 128))), 1e-6);
  const auto g1 = GaussianMixtureEnergy::two_mode_1d();
  EXPECT_LT(std::abs(grid_kl(g1, g1, GridSpec::uniform(1, -8, 8, 64))), 1e-6);
}

TEST(GridKl, ShiftedGaussian) {
  const auto target = GaussianMixtureEnergy::isotropic_normal(Vector::Zero(1), 1.0);
  const AnalyticGaussianEnergy model(Vector::Constant(1, 1.0), Matrix::Identity(1, 1));
  const double kl = grid_kl(model, target, GridSpec::uniform(1, -10, 10, 512));
  EXPECT_NEAR(kl, 0.5, 0.01);
}

TEST(GridKl, NonNegativeOnRandomPairs) {
  const auto target = GaussianMixtureEnergy::four_mode();
  const GridSpec grid = GridSpec::uniform(2, -12, 12, 64);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    MlpOptions o;
    o.widths = {2, 16, 16, 1};
    o.spectral_norm = seed % 2 == 0;
    const MlpEnergy m(o, rng);
    EXPECT_GE(grid_kl(m, target, grid), -1e-9);
  }
}

TEST(GridKl, CoverageAndDimensionErrors) {
  const auto target = GaussianMixtureEnergy::four_mode();
  try {
    grid_kl(target, target, GridSpec::uniform(2, -2, 2, 32));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient grid coverage"), std::string::npos);
  }
  const auto big = GaussianMixtureEnergy::isotropic_normal(Vector::Zero(5), 1.0);
  EXPECT_THROW(grid_kl(big, big, GridSpec::uniform(5, -5, 5, 16)), Error);
  EXPECT_THROW(GridSpec::uniform(1, 0, 1, 8).validate(), Error);
  EXPECT_THROW(GridSpec::uniform(1, 1, 0, 32).validate(), Error);
}

TEST(GridKl, ResolutionConvergence) {
  const auto target = GaussianMixtureEnergy::two_mode_1d();
  const AnalyticGaussianEnergy model(Vector::Constant(1, 0.2), Matrix::Constant(1, 1, 0.3));
  double prev = grid_kl(model, target, GridSpec::uniform(1, -9, 9, 16));
  for (int n : {32, 64, 128, 256}) {
    const double kl = grid_kl(model, target, GridSpec::uniform(1, -9, 9, n));
    EXPECT_LE(kl, prev + 1e-3) << n;
    prev = kl;
  }
}

TEST(EvalCsv, HeaderAndRows) {
  std::ostringstream os;
  write_eval_header(os);
  write_eval_row(os, "run1", "grid_kl", 0.125, fnv1a_hex("{}"));
  EXPECT_EQ(os.str(), "run_id,metric,value,config_hash\nrun1,grid_kl,0.125," + fnv1a_hex("{}") + "\n");
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_NE(fnv1a_hex("a"), fnv1a_hex("b"));
}
