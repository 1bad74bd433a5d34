#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "radsem/diffusion.hpp"
#include "radsem/preprocess.hpp"
#include "radsem/rng.hpp"
#include "radsem/sparse_grid.hpp"
#include "radsem/supervision.hpp"

namespace radsem {

// ---------------------------------------------------------------------------
// Shared per-row backbone: out = A*f + b + W2 * tanh(W1*f + b1). A hidden
// width of zero degenerates to the affine part. Parameters live in one flat
// vector so optimizers and serialization stay trivial.
// ---------------------------------------------------------------------------
class RowwiseMlp {
 public:
  RowwiseMlp() = default;

  RowwiseMlp(int input_dim, int output_dim, int hidden_dim, uint64_t seed)
      : in_(input_dim), out_(output_dim), hidden_(hidden_dim) {
    params_.assign(parameter_count(), 0.0);
    Rng rng(seed);
    auto init = [&](double* data, std::size_t n, double scale) {
      for (std::size_t i = 0; i < n; ++i) data[i] = scale * rng.normal();
    };
    init(params_.data() + off_a(), std::size_t(out_) * in_, 1.0 / std::sqrt(double(in_)));
    if (hidden_ > 0) {
      init(params_.data() + off_w1(), std::size_t(hidden_) * in_, 1.0 / std::sqrt(double(in_)));
      init(params_.data() + off_w2(), std::size_t(out_) * hidden_,
           1.0 / std::sqrt(double(hidden_)));
    }
  }

  int input_dim() const { return in_; }
  int output_dim() const { return out_; }
  int hidden_dim() const { return hidden_; }

  std::size_t parameter_count() const {
    return std::size_t(out_) * in_ + out_ + std::size_t(hidden_) * in_ + hidden_ +
           std::size_t(out_) * hidden_;
  }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  struct Cache {
    Eigen::MatrixXd hidden_act;  // rows x hidden
  };

  // feats: rows x in_  ->  rows x out_
  Eigen::MatrixXd forward(const Eigen::MatrixXd& feats, Cache* cache = nullptr) const {
    auto [a, b, w1, b1, w2] = views();
    Eigen::MatrixXd out = feats * a.transpose();
    out.rowwise() += b.transpose();
    if (hidden_ > 0) {
      Eigen::MatrixXd h = feats * w1.transpose();
      h.rowwise() += b1.transpose();
      h = h.array().tanh();
      out.noalias() += h * w2.transpose();
      if (cache) cache->hidden_act = std::move(h);
    }
    return out;
  }

  // Accumulates dLoss/dparams into grad given dLoss/dout.
  void backward(const Eigen::MatrixXd& feats, const Cache& cache, const Eigen::MatrixXd& dout,
                std::vector<double>& grad) const {
    if (grad.size() != parameter_count()) grad.assign(parameter_count(), 0.0);
    GradViews g = grad_views(grad);
    g.a.noalias() += dout.transpose() * feats;
    g.b.noalias() += dout.colwise().sum().transpose();
    if (hidden_ > 0) {
      g.w2.noalias() += dout.transpose() * cache.hidden_act;
      Eigen::MatrixXd dh = dout * views().w2;
      dh.array() *= (1.0 - cache.hidden_act.array().square());
      g.w1.noalias() += dh.transpose() * feats;
      g.b1.noalias() += dh.colwise().sum().transpose();
    }
  }

 private:
  struct Views {
    Eigen::Map<const Eigen::MatrixXd> a;
    Eigen::Map<const Eigen::VectorXd> b;
    Eigen::Map<const Eigen::MatrixXd> w1;
    Eigen::Map<const Eigen::VectorXd> b1;
    Eigen::Map<const Eigen::MatrixXd> w2;
  };
  struct GradViews {
    Eigen::Map<Eigen::MatrixXd> a;
    Eigen::Map<Eigen::VectorXd> b;
    Eigen::Map<Eigen::MatrixXd> w1;
    Eigen::Map<Eigen::VectorXd> b1;
    Eigen::Map<Eigen::MatrixXd> w2;
  };

  std::size_t off_a() const { return 0; }
  std::size_t off_b() const { return std::size_t(out_) * in_; }
  std::size_t off_w1() const { return off_b() + out_; }
  std::size_t off_b1() const { return off_w1() + std::size_t(hidden_) * in_; }
  std::size_t off_w2() const { return off_b1() + hidden_; }

  Views views() const {
    return {{params_.data() + off_a(), out_, in_},
            {params_.data() + off_b(), out_},
            {params_.data() + off_w1(), hidden_, in_},
            {params_.data() + off_b1(), hidden_},
            {params_.data() + off_w2(), out_, hidden_}};
  }
  GradViews grad_views(std::vector<double>& grad) const {
    return {{grad.data() + off_a(), out_, in_},
            {grad.data() + off_b(), out_},
            {grad.data() + off_w1(), hidden_, in_},
            {grad.data() + off_b1(), hidden_},
            {grad.data() + off_w2(), out_, hidden_}};
  }

  int in_ = 0, out_ = 0, hidden_ = 0;
  std::vector<double> params_;
};

// Plain Adam over a flat parameter vector.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void set_learning_rate(double lr) { lr_ = lr; }

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Trainable row-wise denoiser. Input features per row:
// [scaled state (S) | condition row (C, optional) | Fourier features of
// c_noise]. The same backbone serves the EDM denoiser and the consistency
// function; only the outer preconditioning differs.
// ---------------------------------------------------------------------------
struct RowwiseDenoiserConfig {
  int state_cols = kClassCount;
  int condition_cols = 0;
  int hidden = 32;
  int fourier_features = 4;
  uint64_t seed = 1;
};

class RowwiseDenoiser final : public DenoiserInterface {
 public:
  RowwiseDenoiser() = default;

  explicit RowwiseDenoiser(const RowwiseDenoiserConfig& cfg)
      : cfg_(cfg),
        mlp_(cfg.state_cols + cfg.condition_cols + 2 * cfg.fourier_features, cfg.state_cols,
             cfg.hidden, cfg.seed) {}

  const RowwiseDenoiserConfig& config() const { return cfg_; }
  RowwiseMlp& mlp() { return mlp_; }
  const RowwiseMlp& mlp() const { return mlp_; }

  Eigen::MatrixXd build_features(const FeatureMatrix& x_scaled, double c_noise,
                                 const FeatureMatrix* condition) const {
    if (x_scaled.cols() != cfg_.state_cols)
      throw std::invalid_argument("denoiser: state width mismatch");
    if (cfg_.condition_cols > 0 &&
        (!condition || condition->rows() != x_scaled.rows() ||
         condition->cols() != cfg_.condition_cols))
      throw std::invalid_argument("denoiser: condition shape mismatch");

    Eigen::MatrixXd feats(x_scaled.rows(), mlp_.input_dim());
    feats.leftCols(cfg_.state_cols) = x_scaled;
    if (cfg_.condition_cols > 0)
      feats.middleCols(cfg_.state_cols, cfg_.condition_cols) = *condition;
    for (int j = 0; j < cfg_.fourier_features; ++j) {
      const double arg = std::ldexp(c_noise, j);  // c_noise * 2^j
      feats.col(cfg_.state_cols + cfg_.condition_cols + 2 * j).setConstant(std::sin(arg));
      feats.col(cfg_.state_cols + cfg_.condition_cols + 2 * j + 1).setConstant(std::cos(arg));
    }
    return feats;
  }

  FeatureMatrix evaluate(const FeatureMatrix& x_scaled, double c_noise,
                         const FeatureMatrix* condition) const override {
    return mlp_.forward(build_features(x_scaled, c_noise, condition));
  }

 private:
  RowwiseDenoiserConfig cfg_;
  RowwiseMlp mlp_;
};

// One training example for stage two: clean one-hot state plus its
// condition rows.
struct Stage2Example {
  FeatureMatrix x;          // L x S
  FeatureMatrix condition;  // L x C (may be 0 x 0 when unconditioned)
};

struct Stage2TrainConfig {
  int steps = 500;
  double learning_rate = 3e-3;
  double learning_rate_final = 0.0;  // > 0 enables linear decay to this value
  uint64_t seed = 7;
  std::vector<double> class_weights;  // empty -> derived from data, clipped to [0.1, 10]
};

struct TrainReport {
  std::vector<double> losses;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Inverse-frequency class weights over the example stream, clipped to
// [0.1, 10] and renormalized to mean 1.
inline std::vector<double> derive_class_weights(std::span<const Stage2Example> data) {
  std::vector<double> counts(kClassCount, 0.0);
  double total = 0.0;
  for (const auto& ex : data)
    for (Eigen::Index r = 0; r < ex.x.rows(); ++r)
      for (Eigen::Index c = 0; c < ex.x.cols(); ++c)
        if (ex.x(r, c) > 0.5) {
          counts[c] += 1.0;
          total += 1.0;
        }
  std::vector<double> w(kClassCount, 1.0);
  if (total == 0.0) return w;
  for (int c = 0; c < kClassCount; ++c) {
    const double freq = counts[c] / total;
    w[c] = std::clamp(freq > 0.0 ? 1.0 / (kClassCount * freq) : 10.0, 0.1, 10.0);
  }
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / w.size();
  for (double& v : w) v /= mean;
  return w;
}

// Minimizes the weighted denoising objective with Adam and analytic
// gradients; aborts on a non-finite loss.
inline TrainReport train_stage2_denoiser(RowwiseDenoiser& model,
                                         std::span<const Stage2Example> data,
                                         const NoiseSchedule& schedule,
                                         const Stage2TrainConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("stage2 training: empty dataset");
  std::vector<double> w =
      cfg.class_weights.empty() ? derive_class_weights(data) : cfg.class_weights;
  if (static_cast<int>(w.size()) != model.config().state_cols)
    throw std::invalid_argument("stage2 training: class weight length mismatch");

  Rng rng(cfg.seed);
  AdamOptimizer opt(model.mlp().parameter_count(), cfg.learning_rate);
  std::vector<double> grad(model.mlp().parameter_count(), 0.0);
  TrainReport report;

  for (int step = 0; step < cfg.steps; ++step) {
    if (cfg.learning_rate_final > 0.0 && cfg.steps > 1) {
      const double t = double(step) / double(cfg.steps - 1);
      opt.set_learning_rate(cfg.learning_rate + t * (cfg.learning_rate_final - cfg.learning_rate));
    }
    const Stage2Example& ex = data[step % data.size()];
    const double sigma = sample_training_sigma(schedule, rng);
    const Preconditioning c = preconditioning(sigma, schedule.sigma_data);
    const FeatureMatrix x_sigma = perturb(ex.x, sigma, rng);
    const FeatureMatrix* cond = ex.condition.size() > 0 ? &ex.condition : nullptr;

    const Eigen::MatrixXd feats = model.build_features(c.c_in * x_sigma, c.c_noise, cond);
    RowwiseMlp::Cache cache;
    const Eigen::MatrixXd f = model.mlp().forward(feats, &cache);
    const FeatureMatrix x_hat = c.c_skip * x_sigma + c.c_out * f;

    const double lambda = loss_weight(sigma, schedule.sigma_data);
    const double inv_n = 1.0 / double(ex.x.rows() * ex.x.cols());
    double loss = 0.0;
    Eigen::MatrixXd dout(x_hat.rows(), x_hat.cols());
    for (Eigen::Index r = 0; r < x_hat.rows(); ++r)
      for (Eigen::Index s = 0; s < x_hat.cols(); ++s) {
        const double e = x_hat(r, s) - ex.x(r, s);
        loss += lambda * w[s] * e * e * inv_n;
        dout(r, s) = lambda * w[s] * 2.0 * e * inv_n * c.c_out;
      }
    if (!std::isfinite(loss)) throw DivergenceError("stage2 training: non-finite loss");

    std::fill(grad.begin(), grad.end(), 0.0);
    model.mlp().backward(feats, cache, dout, grad);
    opt.step(model.mlp().params(), grad);
    report.losses.push_back(loss);
  }
  report.initial_loss = report.losses.front();
  report.final_loss = report.losses.back();
  return report;
}

// ---------------------------------------------------------------------------
// Consistency distillation: the student is trained to agree with an EMA
// copy of itself evaluated one teacher Heun step lower on the sigma ladder.
// The boundary f(x, sigma_min) = x is built into the parameterization.
// ---------------------------------------------------------------------------
struct DistillConfig {
  int steps = 2000;
  double learning_rate = 1e-3;
  double learning_rate_final = 0.0;  // > 0 enables linear decay to this value
  double ema_decay = 0.999;
  uint64_t seed = 11;
};

inline TrainReport consistency_distill(RowwiseDenoiser& student, const DenoiserInterface& teacher,
                                       std::span<const Stage2Example> data,
                                       const NoiseSchedule& schedule, const DistillConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("distillation: empty dataset");
  const std::vector<double> sigmas = step_schedule(schedule);
  const int ladder = schedule.n_steps;  // sigmas[0..ladder-1] positive, descending

  RowwiseDenoiser ema = student;
  Rng rng(cfg.seed);
  AdamOptimizer opt(student.mlp().parameter_count(), cfg.learning_rate);
  std::vector<double> grad(student.mlp().parameter_count(), 0.0);
  TrainReport report;

  for (int step = 0; step < cfg.steps; ++step) {
    if (cfg.learning_rate_final > 0.0 && cfg.steps > 1) {
      const double t = double(step) / double(cfg.steps - 1);
      opt.set_learning_rate(cfg.learning_rate + t * (cfg.learning_rate_final - cfg.learning_rate));
    }
    const Stage2Example& ex = data[step % data.size()];
    const FeatureMatrix* cond = ex.condition.size() > 0 ? &ex.condition : nullptr;

    // Adjacent pair on the positive ladder: hi = sigmas[i], lo = sigmas[i+1].
    const int i = static_cast<int>(rng.below(ladder - 1));
    const double hi = sigmas[i], lo = sigmas[i + 1];

    const FeatureMatrix x_hi = perturb(ex.x, hi, rng);

    // One teacher Heun step from hi down to lo.
    const FeatureMatrix d1 = (x_hi - denoise(teacher, x_hi, hi, schedule.sigma_data, cond)) / hi;
    FeatureMatrix x_lo = x_hi + (lo - hi) * d1;
    const FeatureMatrix d2 = (x_lo - denoise(teacher, x_lo, lo, schedule.sigma_data, cond)) / lo;
    x_lo = x_hi + (lo - hi) * 0.5 * (d1 + d2);

    const FeatureMatrix target = consistency_apply(ema, x_lo, lo, schedule, cond);

    const Preconditioning c =
        consistency_preconditioning(hi, schedule.sigma_min, schedule.sigma_data);
    const Eigen::MatrixXd feats = student.build_features(c.c_in * x_hi, c.c_noise, cond);
    RowwiseMlp::Cache cache;
    const Eigen::MatrixXd f = student.mlp().forward(feats, &cache);
    const FeatureMatrix pred = c.c_skip * x_hi + c.c_out * f;

    const double inv_n = 1.0 / double(pred.rows() * pred.cols());
    const FeatureMatrix err = pred - target;
    const double loss = err.array().square().sum() * inv_n;
    if (!std::isfinite(loss)) throw DivergenceError("distillation: non-finite loss");

    Eigen::MatrixXd dout = 2.0 * inv_n * c.c_out * err;
    std::fill(grad.begin(), grad.end(), 0.0);
    student.mlp().backward(feats, cache, dout, grad);
    opt.step(student.mlp().params(), grad);

    auto& ep = ema.mlp().params();
    const auto& sp = student.mlp().params();
    for (std::size_t k = 0; k < ep.size(); ++k)
      ep[k] = cfg.ema_decay * ep[k] + (1.0 - cfg.ema_decay) * sp[k];

    report.losses.push_back(loss);
  }
  report.initial_loss = report.losses.front();
  report.final_loss = report.losses.back();
  return report;
}

// ---------------------------------------------------------------------------
// Reference stage-one predictor: independent logistic / softmax heads over
// three hand-built features per voxel (own power, detector bit, mean power
// of the 3x3x3 neighbourhood restricted to the sparse support).
// ---------------------------------------------------------------------------
struct StageOnePrediction {
  Eigen::VectorXd structural;  // M, in (0,1)
  Eigen::MatrixXd semantic;    // M x S, rows sum to 1
};

struct Stage1TrainConfig {
  int epochs = 200;
  double learning_rate = 0.5;
  uint64_t seed = 5;
  std::vector<double> class_weights = std::vector<double>(kClassCount, 1.0);
};

class ReferenceStage1Predictor {
 public:
  static constexpr int kFeatureCount = 3;

  explicit ReferenceStage1Predictor(uint64_t seed = 0) {
    Rng rng(seed);
    w_st_ = Eigen::VectorXd::Zero(kFeatureCount);
    b_st_ = 0.0;
    w_se_ = Eigen::MatrixXd::Zero(kClassCount, kFeatureCount);
    b_se_ = Eigen::VectorXd::Zero(kClassCount);
    for (int i = 0; i < kFeatureCount; ++i) w_st_[i] = 0.01 * rng.normal();
    for (int c = 0; c < kClassCount; ++c)
      for (int i = 0; i < kFeatureCount; ++i) w_se_(c, i) = 0.01 * rng.normal();
  }

  // Normalized power spans several decades (r^4 spread), so the power
  // features enter through a log map; the linear heads cannot otherwise use
  // anything but the brightest voxels.
  static double log_scale(double power) { return std::log1p(1e4 * power) / std::log(1e4 + 1.0); }

  static Eigen::MatrixXd build_features(const SparseVoxelTensor& input) {
    if (input.cols() != kStageOneInputCols)
      throw std::invalid_argument("stage1 predictor: expected two input columns");
    const auto m = static_cast<Eigen::Index>(input.rows());
    Eigen::MatrixXd feats(m, kFeatureCount);

    // Support-restricted neighbourhood sums via a direct row lookup.
    const auto& spec = input.spec();
    for (Eigen::Index r = 0; r < m; ++r) {
      const VoxelIndex v = input.index(r);
      double neigh = 0.0;
      for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dz = -1; dz <= 1; ++dz) {
            const long x = long(v[0]) + dx, y = long(v[1]) + dy, z = long(v[2]) + dz;
            if (x < 0 || y < 0 || z < 0 || x >= spec.dims[0] || y >= spec.dims[1] ||
                z >= spec.dims[2])
              continue;
            const VoxelIndex q{uint32_t(x), uint32_t(y), uint32_t(z)};
            const std::size_t row = find_row(input, q);
            if (row != npos) neigh += input.feature(row, 0);
          }
      feats(r, 0) = log_scale(input.feature(r, 0));
      feats(r, 1) = input.feature(r, 1);
      feats(r, 2) = log_scale(neigh / 27.0);
    }
    return feats;
  }

  StageOnePrediction evaluate(const SparseVoxelTensor& input) const {
    const Eigen::MatrixXd feats = build_features(input);
    StageOnePrediction out;
    out.structural = ((feats * w_st_).array() + b_st_).unaryExpr(
        [](double z) { return 1.0 / (1.0 + std::exp(-z)); });
    Eigen::MatrixXd logits = feats * w_se_.transpose();
    logits.rowwise() += b_se_.transpose();
    out.semantic.resize(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const Eigen::VectorXd z = logits.row(r);
      const double zmax = z.maxCoeff();
      Eigen::VectorXd e = (z.array() - zmax).exp();
      out.semantic.row(r) = (e / e.sum()).transpose();
    }
    return out;
  }

  // Full-batch gradient steps per example, iterated for `epochs` passes.
  TrainReport train(std::span<const std::pair<SparseVoxelTensor, StageOneTarget>> data,
                    const Stage1TrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("stage1 training: empty dataset");
    TrainReport report;

    std::vector<Eigen::MatrixXd> feats;
    feats.reserve(data.size());
    for (const auto& [input, target] : data) {
      if (target.support.size() != input.rows())
        throw std::invalid_argument("stage1 training: target/input support mismatch");
      feats.push_back(build_features(input));
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      double epoch_loss = 0.0;
      for (std::size_t n = 0; n < data.size(); ++n) {
        const auto& [input, target] = data[n];
        const Eigen::MatrixXd& f = feats[n];
        const auto m = static_cast<Eigen::Index>(input.rows());
        if (m == 0) continue;

        // Structural head (BCE with soft targets).
        Eigen::VectorXd z_st = (f * w_st_).array() + b_st_;
        Eigen::VectorXd p_st =
            z_st.unaryExpr([](double z) { return 1.0 / (1.0 + std::exp(-z)); });
        Eigen::VectorXd y_st = target.y_structural.cast<double>();
        Eigen::VectorXd d_st = (p_st - y_st) / double(m);

        // Semantic head (class-weighted CE).
        Eigen::MatrixXd logits = f * w_se_.transpose();
        logits.rowwise() += b_se_.transpose();
        Eigen::MatrixXd d_se(m, kClassCount);
        double loss = 0.0;
        for (Eigen::Index r = 0; r < m; ++r) {
          Eigen::VectorXd zr = logits.row(r);
          const double zmax = zr.maxCoeff();
          Eigen::VectorXd e = (zr.array() - zmax).exp();
          Eigen::VectorXd p = e / e.sum();
          int y = 0;
          target.y_semantic.row(r).maxCoeff(&y);
          const double w = cfg.class_weights[y];
          loss += -w * std::log(std::max(p[y], 1e-7)) / double(m);
          Eigen::VectorXd dr = p * w;
          dr[y] -= w;
          d_se.row(r) = dr.transpose() / double(m);

          const double pc = std::clamp(p_st[r], 1e-7, 1.0 - 1e-7);
          loss += -(y_st[r] * std::log(pc) + (1.0 - y_st[r]) * std::log(1.0 - pc)) / double(m);
        }
        if (!std::isfinite(loss)) throw DivergenceError("stage1 training: non-finite loss");
        epoch_loss += loss;

        w_st_ -= cfg.learning_rate * (f.transpose() * d_st);
        b_st_ -= cfg.learning_rate * d_st.sum();
        w_se_ -= cfg.learning_rate * (d_se.transpose() * f);
        b_se_ -= cfg.learning_rate * d_se.colwise().sum().transpose();
      }
      report.losses.push_back(epoch_loss / double(data.size()));
    }
    report.initial_loss = report.losses.front();
    report.final_loss = report.losses.back();
    return report;
  }

  Eigen::VectorXd& w_structural() { return w_st_; }
  double& b_structural() { return b_st_; }
  Eigen::MatrixXd& w_semantic() { return w_se_; }
  Eigen::VectorXd& b_semantic() { return b_se_; }
  const Eigen::VectorXd& w_structural() const { return w_st_; }
  double b_structural() const { return b_st_; }
  const Eigen::MatrixXd& w_semantic() const { return w_se_; }
  const Eigen::VectorXd& b_semantic() const { return b_se_; }

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  static std::size_t find_row(const SparseVoxelTensor& t, const VoxelIndex& v) {
    const uint64_t key = t.spec().linear(v);
    std::size_t lo = 0, hi = t.rows();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (t.spec().linear(t.index(mid)) < key)
        lo = mid + 1;
      else
        hi = mid;
    }
    if (lo < t.rows() && t.spec().linear(t.index(lo)) == key) return lo;
    return npos;
  }

  Eigen::VectorXd w_st_;
  double b_st_ = 0.0;
  Eigen::MatrixXd w_se_;
  Eigen::VectorXd b_se_;
};

}  // namespace radsem
