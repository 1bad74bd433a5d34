#include "radsem/diffusion.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace radsem;

namespace {

// F == 0 regardless of input.
class ZeroNet final : public DenoiserInterface {
 public:
  FeatureMatrix evaluate(const FeatureMatrix& x, double, const FeatureMatrix*) const override {
    return FeatureMatrix::Zero(x.rows(), x.cols());
  }
};

}  // namespace

TEST(Preconditioning, LimitsAndMidpoint) {
  const double sd = 0.5;
  const auto tiny = preconditioning(1e-9, sd);
  EXPECT_NEAR(tiny.c_skip, 1.0, 1e-12);
  EXPECT_NEAR(tiny.c_out, 0.0, 1e-9);

  const auto mid = preconditioning(sd, sd);
  EXPECT_DOUBLE_EQ(mid.c_skip, 0.5);
  EXPECT_DOUBLE_EQ(mid.c_out, sd / std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(mid.c_in, 1.0 / (sd * std::sqrt(2.0)));
  EXPECT_DOUBLE_EQ(mid.c_noise, 0.25 * std::log(sd));

  EXPECT_THROW(preconditioning(0.0, sd), std::invalid_argument);
  EXPECT_THROW(preconditioning(-1.0, sd), std::invalid_argument);
}

TEST(Preconditioning, WeightIdentityOverLogGrid) {
  const NoiseSchedule s;
  for (int i = 0; i < 100; ++i) {
    const double t = double(i) / 99.0;
    const double sigma = s.sigma_min * std::pow(s.sigma_max / s.sigma_min, t);
    const auto c = preconditioning(sigma, s.sigma_data);
    EXPECT_NEAR(loss_weight(sigma, s.sigma_data) * c.c_out * c.c_out, 1.0, 1e-12);
  }
}

TEST(TrainingSigma, DegenerateAndMoments) {
  NoiseSchedule s;
  s.p_std = 0.0;
  Rng rng(1);
  for (int i = 0; i < 10; ++i)
    EXPECT_DOUBLE_EQ(sample_training_sigma(s, rng), std::exp(s.p_mean));

  s.p_std = 1.2;
  Rng rng2(2);
  double log_sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double sigma = sample_training_sigma(s, rng2);
    EXPECT_GT(sigma, 0.0);
    log_sum += std::log(sigma);
  }
  EXPECT_NEAR(log_sum / n, -1.2, 0.02);
}

TEST(Perturb, SigmaZeroIsExact) {
  Rng rng(3);
  FeatureMatrix x = FeatureMatrix::Random(8, 5);
  const FeatureMatrix y = perturb(x, 0.0, rng);
  EXPECT_EQ(x, y);
}

TEST(Perturb, UnitVarianceMonteCarlo) {
  Rng rng(4);
  const FeatureMatrix x = FeatureMatrix::Zero(500, 200);  // 1e5 entries
  const FeatureMatrix y = perturb(x, 1.0, rng);
  const double n = double(y.size());
  const double mean = y.sum() / n;
  const double var = (y.array() - mean).square().sum() / n;
  EXPECT_GE(var, 0.98);
  EXPECT_LE(var, 1.02);
  EXPECT_NEAR(mean, 0.0, 3.0 / std::sqrt(n));
}

TEST(Denoise, ZeroNetGivesSkipTerm) {
  const ZeroNet net;
  const FeatureMatrix x = FeatureMatrix::Random(6, 5);
  const double sigma = 0.7, sd = 0.5;
  const FeatureMatrix out = denoise(net, x, sigma, sd);
  const auto c = preconditioning(sigma, sd);
  EXPECT_LT((out - c.c_skip * x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Denoise, SmallSigmaApproachesIdentity) {
  const ZeroNet net;
  const FeatureMatrix x = FeatureMatrix::Random(6, 5);
  const FeatureMatrix out = denoise(net, x, 1e-8, 0.5);
  EXPECT_LT((out - x).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(denoise(net, x, 0.0, 0.5), x);
}

TEST(GaussianOracle, MatchesPosteriorMean) {
  const double sd = 0.5;
  const FeatureMatrix mu = FeatureMatrix::Random(12, 3);
  const double s = 0.8;
  const GaussianOracleDenoiser oracle(mu, s, sd);
  Rng rng(5);
  for (double sigma : {0.01, 0.3, 1.0, 10.0, 80.0}) {
    const FeatureMatrix x = perturb(mu, sigma, rng);
    const FeatureMatrix got = denoise(oracle, x, sigma, sd);
    const FeatureMatrix want = (s * s * x + sigma * sigma * mu) / (s * s + sigma * sigma);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-9) << "sigma=" << sigma;
  }
}

TEST(GaussianOracle, PointMassReturnsMu) {
  const FeatureMatrix mu = FeatureMatrix::Constant(4, 2, 1.5);
  const GaussianOracleDenoiser oracle(mu, 0.0, 0.5);
  const FeatureMatrix x = FeatureMatrix::Random(4, 2) * 10.0;
  const FeatureMatrix got = denoise(oracle, x, 2.0, 0.5);
  EXPECT_LT((got - mu).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(GaussianOracle, EqualScalesGiveMidpoint) {
  const FeatureMatrix mu = FeatureMatrix::Random(4, 2);
  const double s = 0.7;
  const GaussianOracleDenoiser oracle(mu, s, 0.5);
  const FeatureMatrix x = FeatureMatrix::Random(4, 2);
  const FeatureMatrix got = denoise(oracle, x, s, 0.5);
  EXPECT_LT((got - 0.5 * (x + mu)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(EdmLoss, PerfectDenoiserIsZero) {
  const FeatureMatrix mu = FeatureMatrix::Random(10, kClassCount);
  const GaussianOracleDenoiser oracle(mu, 0.0, 0.5);  // always returns mu
  const std::vector<double> w(kClassCount, 1.0);
  Rng rng(6);
  const double loss = edm_loss(oracle, mu, 0.4, nullptr, w, rng, 0.5);
  EXPECT_LE(loss, 1e-6);
}

TEST(EdmLoss, ZeroNetClosedFormAtSigmaData) {
  // x = 0, F = 0: residual is c_skip * sigma * eps, so the expected loss is
  // lambda * c_skip^2 * sigma^2. At sigma = sigma_data that is 0.5.
  const ZeroNet net;
  const double sd = 0.5;
  const FeatureMatrix x = FeatureMatrix::Zero(2000, kClassCount);
  const std::vector<double> w(kClassCount, 1.0);
  Rng rng(7);
  const double loss = edm_loss(net, x, sd, nullptr, w, rng, sd);
  EXPECT_NEAR(loss, 0.5, 0.02);
}

TEST(EdmLoss, LinearInWeights) {
  const ZeroNet net;
  const FeatureMatrix x = FeatureMatrix::Random(50, kClassCount);
  std::vector<double> w(kClassCount, 1.0), w2(kClassCount, 2.0);
  Rng rng_a(8), rng_b(8);  // identical draws
  const double la = edm_loss(net, x, 0.9, nullptr, w, rng_a, 0.5);
  const double lb = edm_loss(net, x, 0.9, nullptr, w2, rng_b, 0.5);
  EXPECT_NEAR(lb, 2.0 * la, 1e-12);
  std::vector<double> bad(kClassCount, 1.0);
  bad[2] = 0.0;
  Rng rng_c(8);
  EXPECT_THROW(edm_loss(net, x, 0.9, nullptr, bad, rng_c, 0.5), std::invalid_argument);
}

TEST(StepSchedule, TwoStepsIsEndpointsPlusZero) {
  NoiseSchedule s;
  s.n_steps = 2;
  const auto sigmas = step_schedule(s);
  ASSERT_EQ(sigmas.size(), 3u);
  EXPECT_DOUBLE_EQ(sigmas[0], s.sigma_max);
  EXPECT_DOUBLE_EQ(sigmas[1], s.sigma_min);
  EXPECT_DOUBLE_EQ(sigmas[2], 0.0);
}

TEST(StepSchedule, DefaultsAreStrictlyDecreasing) {
  const auto sigmas = step_schedule(NoiseSchedule{});
  ASSERT_EQ(sigmas.size(), 41u);
  for (std::size_t i = 1; i < sigmas.size(); ++i) EXPECT_LT(sigmas[i], sigmas[i - 1]);
}

TEST(StepSchedule, RhoOneIsLinear) {
  NoiseSchedule s;
  s.rho = 1.0;
  s.n_steps = 3;
  s.sigma_min = 1.0;
  s.sigma_max = 9.0;
  const auto sigmas = step_schedule(s);
  ASSERT_EQ(sigmas.size(), 4u);
  EXPECT_DOUBLE_EQ(sigmas[0], 9.0);
  EXPECT_DOUBLE_EQ(sigmas[1], 5.0);
  EXPECT_DOUBLE_EQ(sigmas[2], 1.0);
  EXPECT_DOUBLE_EQ(sigmas[3], 0.0);
}

TEST(StepSchedule, RejectsShortSchedules) {
  NoiseSchedule s;
  s.n_steps = 1;
  EXPECT_THROW(step_schedule(s), ConfigError);
}

TEST(HeunSample, OracleMomentsRecovered) {
  NoiseSchedule schedule;  // defaults, n = 40
  const Eigen::Index dim = 32;
  Rng mu_rng(77);
  FeatureMatrix mu(dim, 1);
  for (Eigen::Index i = 0; i < dim; ++i) mu(i, 0) = mu_rng.uniform(0.5, 1.5);
  const double s = 0.5;
  const GaussianOracleDenoiser oracle(mu, s, schedule.sigma_data);

  const int n_samples = 2000;
  Rng rng(88);
  FeatureMatrix sum = FeatureMatrix::Zero(dim, 1);
  FeatureMatrix sum_sq = FeatureMatrix::Zero(dim, 1);
  for (int i = 0; i < n_samples; ++i) {
    const FeatureMatrix x = heun_sample(oracle, nullptr, dim, 1, schedule, rng);
    sum += x;
    sum_sq += x.cwiseProduct(x);
  }
  const FeatureMatrix mean = sum / n_samples;
  const double norm_bound = 3.0 * s * std::sqrt(double(dim) / n_samples);
  EXPECT_LT((mean - mu).norm(), norm_bound);

  double avg_var = 0.0;
  for (Eigen::Index i = 0; i < dim; ++i)
    avg_var += sum_sq(i, 0) / n_samples - mean(i, 0) * mean(i, 0);
  avg_var /= double(dim);
  EXPECT_NEAR(avg_var, s * s, 0.05 * s * s);
}

TEST(HeunSample, PointMassContracts) {
  NoiseSchedule schedule;
  const GaussianOracleDenoiser origin(FeatureMatrix::Zero(8, 1), 0.0, schedule.sigma_data);
  Rng rng(9);
  const FeatureMatrix x = heun_sample(origin, nullptr, 8, 1, schedule, rng);
  EXPECT_LT(x.cwiseAbs().maxCoeff(), 1e-3 * schedule.sigma_max);
}

TEST(HeunSample, DeterministicGivenSeed) {
  NoiseSchedule schedule;
  schedule.n_steps = 10;
  const GaussianOracleDenoiser oracle(FeatureMatrix::Constant(4, 2, 0.3), 0.5,
                                      schedule.sigma_data);
  Rng a(123), b(123);
  std::size_t evals_a = 0, evals_b = 0;
  const FeatureMatrix xa = heun_sample(oracle, nullptr, 4, 2, schedule, a, &evals_a);
  const FeatureMatrix xb = heun_sample(oracle, nullptr, 4, 2, schedule, b, &evals_b);
  EXPECT_EQ(xa, xb);
  EXPECT_EQ(evals_a, evals_b);
  EXPECT_EQ(evals_a, std::size_t(2 * schedule.n_steps - 1));
}

TEST(Consistency, PreconditioningBoundary) {
  const NoiseSchedule s;
  const auto c = consistency_preconditioning(s.sigma_min, s.sigma_min, s.sigma_data);
  EXPECT_DOUBLE_EQ(c.c_skip, 1.0);
  EXPECT_DOUBLE_EQ(c.c_out, 0.0);
}

TEST(Consistency, BoundaryIdentityForAnyNetwork) {
  const NoiseSchedule s;
  const ZeroNet net;  // any F works; c_out is zero at the boundary
  const FeatureMatrix x = FeatureMatrix::Random(7, kClassCount) * 5.0;
  const FeatureMatrix out = consistency_apply(net, x, s.sigma_min, s);
  EXPECT_LT((out - x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Consistency, OneEvaluationAndDeterminism) {
  const NoiseSchedule s;
  const ZeroNet net;
  Rng a(5), b(5);
  std::size_t evals = 0;
  const FeatureMatrix xa = consistency_sample(net, nullptr, 6, kClassCount, s, a, &evals);
  const FeatureMatrix xb = consistency_sample(net, nullptr, 6, kClassCount, s, b);
  EXPECT_EQ(evals, 1u);
  EXPECT_EQ(xa, xb);
  EXPECT_EQ(xa.rows(), 6);
  EXPECT_EQ(xa.cols(), kClassCount);
  EXPECT_TRUE(xa.allFinite());
}
