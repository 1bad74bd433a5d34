#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "radsem/diffusion.hpp"
#include "radsem/models.hpp"
#include "radsem/sparse_grid.hpp"
#include "radsem/supervision.hpp"

namespace radsem {

// Conditional input for the generative stage: L support voxels with
// structural confidence and the argmax class code (never free).
struct ConditionMatrix {
  GridSpec spec;
  std::vector<VoxelIndex> support;
  Eigen::MatrixXd features;  // L x 2: [confidence, class code]

  std::size_t rows() const { return support.size(); }
};

// Combined stage-one objective: binary cross-entropy on the structural head
// plus class-weighted cross-entropy on the semantic head, both averaged
// over rows. Probabilities are clamped at 1e-7.
inline double stage1_loss(const Eigen::VectorXd& pred_structural,
                          const Eigen::MatrixXd& pred_semantic, const StageOneTarget& target,
                          std::span<const double> class_weights) {
  const Eigen::Index m = pred_structural.size();
  if (pred_semantic.rows() != m || target.y_structural.size() != m ||
      target.y_semantic.rows() != m || pred_semantic.cols() != kClassCount)
    throw std::invalid_argument("stage1_loss: shape mismatch");
  if (static_cast<int>(class_weights.size()) != kClassCount)
    throw std::invalid_argument("stage1_loss: class weight length mismatch");
  if (m == 0) return 0.0;

  double bce = 0.0, wce = 0.0;
  for (Eigen::Index r = 0; r < m; ++r) {
    const double p = std::clamp(pred_structural[r], 1e-7, 1.0 - 1e-7);
    const double y = target.y_structural[r];
    bce += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));

    int label = 0;
    target.y_semantic.row(r).maxCoeff(&label);
    const double q = std::clamp(pred_semantic(r, label), 1e-7, 1.0);
    wce += -class_weights[label] * std::log(q);
  }
  return (bce + wce) / double(m);
}

// Row-wise argmax with ties to the smaller class code; free rows dropped.
inline ConditionMatrix build_condition(const Eigen::VectorXd& pred_structural,
                                       const Eigen::MatrixXd& pred_semantic,
                                       std::span<const VoxelIndex> support,
                                       const GridSpec& spec) {
  if (pred_structural.size() != static_cast<Eigen::Index>(support.size()) ||
      pred_semantic.rows() != pred_structural.size())
    throw std::invalid_argument("build_condition: shape mismatch");

  std::vector<VoxelIndex> kept;
  std::vector<std::pair<double, int>> rows;
  for (Eigen::Index r = 0; r < pred_semantic.rows(); ++r) {
    int best = 0;
    double best_p = pred_semantic(r, 0);
    for (int c = 1; c < pred_semantic.cols(); ++c)
      if (pred_semantic(r, c) > best_p) {  // strict: ties keep the smaller code
        best_p = pred_semantic(r, c);
        best = c;
      }
    if (best == 0) continue;
    kept.push_back(support[r]);
    rows.emplace_back(pred_structural[r], best);
  }

  ConditionMatrix cond;
  cond.spec = spec;
  cond.support = std::move(kept);
  cond.features.resize(static_cast<Eigen::Index>(rows.size()), 2);
  for (Eigen::Index r = 0; r < cond.features.rows(); ++r) {
    cond.features(r, 0) = rows[r].first;
    cond.features(r, 1) = rows[r].second;
  }
  return cond;
}

enum class SampleMode { kHeun, kConsistency };

// Featurization of the condition for the trainable denoiser: confidence
// stays scalar, the class code becomes an indicator over the non-free
// classes. Width 1 + (S - 1).
inline constexpr int kConditionFeatureCols = 1 + (kClassCount - 1);

inline Eigen::MatrixXd expand_condition_features(const Eigen::MatrixXd& condition) {
  if (condition.cols() != 2)
    throw std::invalid_argument("expand_condition_features: expected [confidence, code]");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(condition.rows(), kConditionFeatureCols);
  for (Eigen::Index r = 0; r < condition.rows(); ++r) {
    out(r, 0) = condition(r, 0);
    const int code = int(condition(r, 1));
    if (code < 1 || code >= kClassCount)
      throw std::invalid_argument("expand_condition_features: code outside non-free classes");
    out(r, code) = 1.0;
  }
  return out;
}

// Generative stage: sample an L x S state conditioned on the mask, take the
// row-wise argmax (ties to the smaller code), drop free rows, and emit the
// surviving voxel centres. An empty condition yields an empty cloud.
inline SemanticPointCloud stage2_generate(const DenoiserInterface& denoiser,
                                          const ConditionMatrix& condition,
                                          const NoiseSchedule& schedule, SampleMode mode,
                                          Rng& rng, std::size_t* evaluations = nullptr) {
  if (evaluations) *evaluations = 0;
  if (condition.rows() == 0) return {};

  const auto l = static_cast<Eigen::Index>(condition.rows());
  const Eigen::MatrixXd features = expand_condition_features(condition.features);
  const FeatureMatrix state =
      mode == SampleMode::kHeun
          ? heun_sample(denoiser, &features, l, kClassCount, schedule, rng, evaluations)
          : consistency_sample(denoiser, &features, l, kClassCount, schedule, rng, evaluations);

  SemanticPointCloud cloud;
  for (Eigen::Index r = 0; r < l; ++r) {
    int best = 0;
    double best_v = state(r, 0);
    for (int c = 1; c < kClassCount; ++c)
      if (state(r, c) > best_v) {
        best_v = state(r, c);
        best = c;
      }
    if (best == 0) continue;
    cloud.push_back(condition.spec.voxel_center(condition.support[r]).cast<float>(),
                    static_cast<ClassLabel>(best));
  }
  return cloud;
}

// Test-harness denoiser that always reconstructs a fixed ground-truth
// state: F is chosen so the preconditioned output equals x_star for any
// input and sigma. Upper bound for pipeline plumbing checks.
class CheatOracleDenoiser final : public DenoiserInterface {
 public:
  CheatOracleDenoiser(FeatureMatrix x_star, double sigma_data)
      : x_star_(std::move(x_star)), sigma_data_(sigma_data) {}

  FeatureMatrix evaluate(const FeatureMatrix& x_scaled, double c_noise,
                         const FeatureMatrix*) const override {
    const double sigma = std::exp(4.0 * c_noise);
    const Preconditioning c = preconditioning(sigma, sigma_data_);
    return (x_star_ - c.c_skip * (x_scaled / c.c_in)) / c.c_out;
  }

 private:
  FeatureMatrix x_star_;
  double sigma_data_;
};

// Condition derived from ground truth rather than a trained stage-one
// model: confidence 1 and the true class on every ground-truth voxel of the
// input support.
inline ConditionMatrix condition_from_ground_truth(const StageTwoSample& sample) {
  std::vector<VoxelIndex> kept;
  std::vector<int> codes;
  for (Eigen::Index r = 0; r < sample.x.rows(); ++r) {
    int label = 0;
    sample.x.row(r).maxCoeff(&label);
    if (label == 0) continue;
    kept.push_back(sample.support[r]);
    codes.push_back(label);
  }
  ConditionMatrix cond;
  cond.spec = sample.spec;
  cond.support = std::move(kept);
  cond.features.resize(static_cast<Eigen::Index>(codes.size()), 2);
  for (Eigen::Index r = 0; r < cond.features.rows(); ++r) {
    cond.features(r, 0) = 1.0;
    cond.features(r, 1) = codes[r];
  }
  return cond;
}

}  // namespace radsem
