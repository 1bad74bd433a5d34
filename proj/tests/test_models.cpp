#include "radsem/models.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace radsem;

namespace {

// Central finite differences over the flat parameter vector.
double numeric_loss(RowwiseDenoiser& model, const FeatureMatrix& x, const FeatureMatrix* cond,
                    double sigma, double sigma_data, const FeatureMatrix& x_sigma,
                    std::span<const double> w) {
  const Preconditioning c = preconditioning(sigma, sigma_data);
  const FeatureMatrix f = model.evaluate(c.c_in * x_sigma, c.c_noise, cond);
  const FeatureMatrix x_hat = c.c_skip * x_sigma + c.c_out * f;
  const double lambda = loss_weight(sigma, sigma_data);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index s = 0; s < x.cols(); ++s) {
      const double e = x_hat(r, s) - x(r, s);
      loss += lambda * w[s] * e * e;
    }
  return loss / double(x.rows() * x.cols());
}

}  // namespace

TEST(RowwiseMlp, HiddenZeroIsAffine) {
  RowwiseMlp mlp(3, 2, 0, 1);
  const Eigen::MatrixXd f = Eigen::MatrixXd::Random(5, 3);
  const Eigen::MatrixXd out = mlp.forward(f);
  EXPECT_EQ(out.rows(), 5);
  EXPECT_EQ(out.cols(), 2);
  // Affine: out(af + bg) = a*out(f) + b*out(g) - (a+b-1)*bias.
  const Eigen::MatrixXd f2 = 2.0 * f;
  const Eigen::MatrixXd out2 = mlp.forward(f2);
  const Eigen::MatrixXd bias = mlp.forward(Eigen::MatrixXd::Zero(5, 3));
  EXPECT_LT(((out2 - bias) - 2.0 * (out - bias)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RowwiseMlp, GradientMatchesFiniteDifferences) {
  RowwiseDenoiserConfig cfg;
  cfg.state_cols = 3;
  cfg.condition_cols = 2;
  cfg.hidden = 4;
  cfg.fourier_features = 2;
  cfg.seed = 3;
  RowwiseDenoiser model(cfg);

  const Eigen::Index rows = 6;
  Rng rng(10);
  FeatureMatrix x(rows, 3), cond(rows, 2);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int c = 0; c < 3; ++c) x(r, c) = rng.uniform(-1, 1);
    for (int c = 0; c < 2; ++c) cond(r, c) = rng.uniform(0, 1);
  }
  const double sigma = 0.8, sigma_data = 0.5;
  const FeatureMatrix x_sigma = perturb(x, sigma, rng);
  const std::vector<double> w{1.0, 2.0, 0.5};

  // Analytic gradient.
  const Preconditioning c = preconditioning(sigma, sigma_data);
  const Eigen::MatrixXd feats = model.build_features(c.c_in * x_sigma, c.c_noise, &cond);
  RowwiseMlp::Cache cache;
  const Eigen::MatrixXd f = model.mlp().forward(feats, &cache);
  const FeatureMatrix x_hat = c.c_skip * x_sigma + c.c_out * f;
  const double lambda = loss_weight(sigma, sigma_data);
  const double inv_n = 1.0 / double(x.rows() * x.cols());
  Eigen::MatrixXd dout(rows, 3);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (int s = 0; s < 3; ++s)
      dout(r, s) = lambda * w[s] * 2.0 * (x_hat(r, s) - x(r, s)) * inv_n * c.c_out;
  std::vector<double> grad(model.mlp().parameter_count(), 0.0);
  model.mlp().backward(feats, cache, dout, grad);

  // Finite differences at 1e-3 absolute step, compared at 1e-4 relative.
  auto& params = model.mlp().params();
  const double h = 1e-3;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = numeric_loss(model, x, &cond, sigma, sigma_data, x_sigma, w);
    params[i] = saved - h;
    const double down = numeric_loss(model, x, &cond, sigma, sigma_data, x_sigma, w);
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-8});
    max_rel = std::max(max_rel, std::abs(numeric - grad[i]) / denom);
  }
  EXPECT_LT(max_rel, 1e-4);
}

TEST(Stage2Training, LossDropsOnFixedDataset) {
  RowwiseDenoiserConfig cfg;
  cfg.condition_cols = 2;
  cfg.hidden = 16;
  cfg.seed = 4;
  RowwiseDenoiser model(cfg);

  Rng rng(20);
  std::vector<Stage2Example> data;
  for (int n = 0; n < 4; ++n) {
    Stage2Example ex;
    const Eigen::Index rows = 40;
    ex.x = FeatureMatrix::Zero(rows, kClassCount);
    ex.condition = FeatureMatrix::Zero(rows, 2);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const int cls = int(rng.below(kClassCount));
      ex.x(r, cls) = 1.0;
      ex.condition(r, 0) = rng.uniform01();
      ex.condition(r, 1) = cls;
    }
    data.push_back(std::move(ex));
  }

  NoiseSchedule schedule;
  Stage2TrainConfig tcfg;
  tcfg.steps = 500;
  tcfg.learning_rate = 3e-3;
  const TrainReport report = train_stage2_denoiser(model, data, schedule, tcfg);

  // Smoothed start/end comparison (per-step sigma draws make single losses noisy).
  const auto avg = [&](std::size_t lo, std::size_t hi) {
    return std::accumulate(report.losses.begin() + lo, report.losses.begin() + hi, 0.0) /
           double(hi - lo);
  };
  const double head = avg(0, 50), tail = avg(report.losses.size() - 50, report.losses.size());
  EXPECT_LT(tail, 0.7 * head);
}

TEST(Stage2Training, HiddenZeroStillTrains) {
  RowwiseDenoiserConfig cfg;
  cfg.hidden = 0;
  cfg.seed = 5;
  RowwiseDenoiser model(cfg);
  std::vector<Stage2Example> data(1);
  data[0].x = FeatureMatrix::Zero(20, kClassCount);
  for (Eigen::Index r = 0; r < 20; ++r) data[0].x(r, r % kClassCount) = 1.0;
  NoiseSchedule schedule;
  Stage2TrainConfig tcfg;
  tcfg.steps = 50;
  EXPECT_NO_THROW(train_stage2_denoiser(model, data, schedule, tcfg));
}

TEST(Distillation, LossFiniteAndDecreasingOnGaussianToy) {
  NoiseSchedule schedule;
  schedule.n_steps = 18;
  const Eigen::Index dim = 8;
  FeatureMatrix mu(dim, 1);
  Rng mu_rng(6);
  for (Eigen::Index i = 0; i < dim; ++i) mu(i, 0) = mu_rng.uniform(0.5, 1.5);
  const GaussianOracleDenoiser teacher(mu, 0.5, schedule.sigma_data);

  RowwiseDenoiserConfig cfg;
  cfg.state_cols = 1;
  cfg.condition_cols = 1;
  cfg.hidden = 8;
  cfg.seed = 7;
  RowwiseDenoiser student(cfg);

  std::vector<Stage2Example> data(1);
  data[0].x = mu;
  data[0].condition = mu;

  DistillConfig dcfg;
  dcfg.steps = 100;
  dcfg.learning_rate = 3e-3;
  const TrainReport report = consistency_distill(student, teacher, data, schedule, dcfg);
  for (double l : report.losses) EXPECT_TRUE(std::isfinite(l));
  const auto avg = [&](std::size_t lo, std::size_t hi) {
    return std::accumulate(report.losses.begin() + lo, report.losses.begin() + hi, 0.0) /
           double(hi - lo);
  };
  EXPECT_LT(avg(80, 100), avg(0, 20));
}

TEST(Distillation, EmaDecayOneFreezesTarget) {
  NoiseSchedule schedule;
  schedule.n_steps = 6;
  const GaussianOracleDenoiser teacher(FeatureMatrix::Zero(4, 1), 0.5, schedule.sigma_data);
  RowwiseDenoiserConfig cfg;
  cfg.state_cols = 1;
  cfg.condition_cols = 0;
  cfg.hidden = 4;
  RowwiseDenoiser student(cfg);
  const std::vector<double> initial = student.mlp().params();

  std::vector<Stage2Example> data(1);
  data[0].x = FeatureMatrix::Zero(4, 1);

  // EMA decay 1.0: the target stays at the student's initial parameters.
  // The student itself still moves, so compare target behaviour indirectly:
  // run twice with identical seeds; trajectories must match exactly, which
  // they would not if the target tracked a diverging student differently.
  DistillConfig dcfg;
  dcfg.steps = 20;
  dcfg.ema_decay = 1.0;
  dcfg.seed = 9;
  RowwiseDenoiser student2(cfg);
  const TrainReport a = consistency_distill(student, teacher, data, schedule, dcfg);
  const TrainReport b = consistency_distill(student2, teacher, data, schedule, dcfg);
  ASSERT_EQ(a.losses.size(), b.losses.size());
  for (std::size_t i = 0; i < a.losses.size(); ++i) EXPECT_DOUBLE_EQ(a.losses[i], b.losses[i]);
  EXPECT_NE(student.mlp().params(), initial);
}

TEST(RowwiseDenoiser, PermutationEquivariance) {
  RowwiseDenoiserConfig cfg;
  cfg.condition_cols = 2;
  cfg.hidden = 8;
  cfg.seed = 11;
  const RowwiseDenoiser model(cfg);

  Rng rng(12);
  const Eigen::Index rows = 10;
  FeatureMatrix x(rows, kClassCount), cond(rows, 2);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int c = 0; c < kClassCount; ++c) x(r, c) = rng.uniform(-1, 1);
    cond(r, 0) = rng.uniform01();
    cond(r, 1) = 1 + int(rng.below(4));
  }

  std::vector<int> perm(rows);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[0], perm[7]);
  std::swap(perm[3], perm[9]);
  FeatureMatrix xp(rows, kClassCount), condp(rows, 2);
  for (Eigen::Index r = 0; r < rows; ++r) {
    xp.row(r) = x.row(perm[r]);
    condp.row(r) = cond.row(perm[r]);
  }

  const FeatureMatrix out = denoise(model, x, 0.9, 0.5, &cond);
  const FeatureMatrix outp = denoise(model, xp, 0.9, 0.5, &condp);
  for (Eigen::Index r = 0; r < rows; ++r)
    EXPECT_LT((outp.row(r) - out.row(perm[r])).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Stage1Predictor, LearnsSeparableToyData) {
  GridSpec spec;
  spec.dims = {40, 4, 4};
  spec.min_m = {0, 0, 0};
  spec.max_m = {40, 4, 4};

  // Occupied iff normalized power > 0.5; semantic class tied to occupancy.
  Rng rng(13);
  std::vector<std::pair<SparseVoxelTensor, StageOneTarget>> data;
  for (int n = 0; n < 3; ++n) {
    std::vector<VoxelIndex> idx;
    std::vector<float> feats;
    for (uint32_t i = 0; i < spec.dims[0]; ++i)
      for (uint32_t j = 0; j < spec.dims[1]; ++j)
        for (uint32_t k = 0; k < spec.dims[2]; ++k) {
          idx.push_back({i, j, k});
          feats.push_back(float(rng.uniform01()));
          feats.push_back(0.0f);
        }
    SparseVoxelTensor input(spec, idx, feats, 2);
    StageOneTarget target;
    target.support = input.indices();
    const auto m = Eigen::Index(input.rows());
    target.y_structural.resize(m);
    target.y_semantic = Eigen::MatrixXf::Zero(m, kClassCount);
    for (Eigen::Index r = 0; r < m; ++r) {
      const bool occ = input.feature(r, 0) > 0.5f;
      target.y_structural[r] = occ ? 1.0f : 0.0f;
      target.y_semantic(r, occ ? int(ClassLabel::kGround) : 0) = 1.0f;
    }
    data.emplace_back(std::move(input), std::move(target));
  }

  ReferenceStage1Predictor model(1);
  Stage1TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 6.0;  // the log-compressed power feature needs large head weights
  const TrainReport report = model.train(data, cfg);
  EXPECT_LT(report.final_loss, 0.8 * report.initial_loss);

  // Training accuracy on the structural head.
  std::size_t correct = 0, total = 0;
  for (const auto& [input, target] : data) {
    const auto pred = model.evaluate(input);
    for (Eigen::Index r = 0; r < pred.structural.size(); ++r) {
      const bool want = target.y_structural[r] > 0.5f;
      const bool got = pred.structural[r] > 0.5;
      correct += want == got;
      ++total;
    }
  }
  EXPECT_GE(double(correct) / double(total), 0.95);
}

TEST(Stage1Predictor, ZeroFeaturesLearnClassPriors) {
  GridSpec spec;
  spec.dims = {30, 2, 2};
  spec.min_m = {0, 0, 0};
  spec.max_m = {30, 2, 2};
  std::vector<VoxelIndex> idx;
  std::vector<float> feats;
  for (uint32_t i = 0; i < spec.dims[0]; ++i)
    for (uint32_t j = 0; j < spec.dims[1]; ++j)
      for (uint32_t k = 0; k < spec.dims[2]; ++k) {
        idx.push_back({i, j, k});
        feats.push_back(0.0f);
        feats.push_back(0.0f);
      }
  SparseVoxelTensor input(spec, idx, feats, 2);

  // 75% ground, 25% tree.
  StageOneTarget target;
  target.support = input.indices();
  const auto m = Eigen::Index(input.rows());
  target.y_structural = Eigen::VectorXf::Constant(m, 0.5f);
  target.y_semantic = Eigen::MatrixXf::Zero(m, kClassCount);
  for (Eigen::Index r = 0; r < m; ++r)
    target.y_semantic(r, r % 4 == 0 ? int(ClassLabel::kTree) : int(ClassLabel::kGround)) = 1.0f;

  std::vector<std::pair<SparseVoxelTensor, StageOneTarget>> data;
  data.emplace_back(std::move(input), std::move(target));
  ReferenceStage1Predictor model(2);
  Stage1TrainConfig cfg;
  cfg.epochs = 2000;
  cfg.learning_rate = 2.0;
  model.train(data, cfg);

  const auto pred = model.evaluate(data[0].first);
  EXPECT_NEAR(pred.semantic(0, int(ClassLabel::kGround)), 0.75, 0.05);
  EXPECT_NEAR(pred.semantic(0, int(ClassLabel::kTree)), 0.25, 0.05);
  EXPECT_NEAR(pred.structural[0], 0.5, 0.05);
}

TEST(Stage1Predictor, TrainingIsDeterministic) {
  GridSpec spec;
  spec.dims = {10, 2, 2};
  spec.min_m = {0, 0, 0};
  spec.max_m = {10, 2, 2};
  Rng rng(14);
  std::vector<VoxelIndex> idx;
  std::vector<float> feats;
  for (uint32_t i = 0; i < spec.dims[0]; ++i)
    for (uint32_t j = 0; j < spec.dims[1]; ++j)
      for (uint32_t k = 0; k < spec.dims[2]; ++k) {
        idx.push_back({i, j, k});
        feats.push_back(float(rng.uniform01()));
        feats.push_back(float(rng.below(2)));
      }
  SparseVoxelTensor input(spec, idx, feats, 2);
  StageOneTarget target;
  target.support = input.indices();
  const auto m = Eigen::Index(input.rows());
  target.y_structural = Eigen::VectorXf::Constant(m, 1.0f);
  target.y_semantic = Eigen::MatrixXf::Zero(m, kClassCount);
  for (Eigen::Index r = 0; r < m; ++r) target.y_semantic(r, 1) = 1.0f;
  std::vector<std::pair<SparseVoxelTensor, StageOneTarget>> data;
  data.emplace_back(input, target);

  ReferenceStage1Predictor a(7), b(7);
  Stage1TrainConfig cfg;
  cfg.epochs = 30;
  a.train(data, cfg);
  b.train(data, cfg);
  EXPECT_EQ(a.w_structural(), b.w_structural());
  EXPECT_EQ(a.w_semantic(), b.w_semantic());
}

TEST(ClassWeights, InverseFrequencyClippedAndNormalized) {
  std::vector<Stage2Example> data(1);
  data[0].x = FeatureMatrix::Zero(100, kClassCount);
  for (int r = 0; r < 99; ++r) data[0].x(r, int(ClassLabel::kGround)) = 1.0;
  data[0].x(99, int(ClassLabel::kWire)) = 1.0;
  const auto w = derive_class_weights(data);
  ASSERT_EQ(w.size(), std::size_t(kClassCount));
  EXPECT_GT(w[int(ClassLabel::kWire)], w[int(ClassLabel::kGround)]);
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / w.size();
  EXPECT_NEAR(mean, 1.0, 1e-9);
}
