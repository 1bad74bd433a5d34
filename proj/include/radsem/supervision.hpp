#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "radsem/sparse_grid.hpp"
#include "radsem/types.hpp"

namespace radsem {

struct KernelConfig {
  int size = 3;            // odd
  double sigma_voxels = 1.0;
};

template <typename T>
struct DenseGrid {
  GridSpec spec;
  std::vector<T> values;

  explicit DenseGrid(const GridSpec& s, T fill = T{})
      : spec(s), values(s.total_voxels(), fill) {}

  T& at(const VoxelIndex& v) { return values[spec.linear(v)]; }
  T at(const VoxelIndex& v) const { return values[spec.linear(v)]; }
};

namespace detail {

inline void check_kernel(const KernelConfig& k) {
  if (k.size < 1 || k.size % 2 == 0)
    throw std::invalid_argument("supervision: kernel size must be odd and positive");
  if (k.sigma_voxels <= 0.0)
    throw std::invalid_argument("supervision: kernel sigma must be positive");
}

}  // namespace detail

// Occupancy confidence target: the voxelized cloud is blurred with a k^3
// Gaussian rescaled to 1 at the kernel centre, overlapping responses add up,
// and the result is clipped to [0,1]. Occupied voxel centres therefore sit
// at exactly 1 and confidence decays with distance.
inline DenseGrid<float> build_structural_target(const SemanticPointCloud& lidar,
                                                const GridSpec& spec, const KernelConfig& kernel) {
  detail::check_kernel(kernel);
  DenseGrid<float> grid(spec, 0.0f);
  if (lidar.empty()) return grid;

  std::vector<float> ones(lidar.size(), 1.0f);
  const SparseVoxelTensor occ = voxelize(lidar.points, ones, 1, spec, Reduce::kMax);

  const int half = kernel.size / 2;
  std::vector<float> taps(kernel.size);
  for (int d = -half; d <= half; ++d)
    taps[d + half] =
        static_cast<float>(std::exp(-0.5 * double(d) * d / (kernel.sigma_voxels * kernel.sigma_voxels)));

  for (std::size_t r = 0; r < occ.rows(); ++r) {
    const VoxelIndex v = occ.index(r);
    for (int dx = -half; dx <= half; ++dx) {
      const int x = int(v[0]) + dx;
      if (x < 0 || x >= int(spec.dims[0])) continue;
      for (int dy = -half; dy <= half; ++dy) {
        const int y = int(v[1]) + dy;
        if (y < 0 || y >= int(spec.dims[1])) continue;
        const float wxy = taps[dx + half] * taps[dy + half];
        for (int dz = -half; dz <= half; ++dz) {
          const int z = int(v[2]) + dz;
          if (z < 0 || z >= int(spec.dims[2])) continue;
          grid.at({uint32_t(x), uint32_t(y), uint32_t(z)}) += wxy * taps[dz + half];
        }
      }
    }
  }
  for (float& v : grid.values) v = std::min(v, 1.0f);
  return grid;
}

// Semantic target: voxelized class codes (majority vote, ties to the
// smaller code) dilated with a k^3 max filter. Class codes are ordered by
// rarity, so the max is equivalent to the precedence
// wire > pole > tree > ground > free and thin structures thicken.
inline DenseGrid<uint8_t> build_semantic_target(const SemanticPointCloud& lidar,
                                                const GridSpec& spec, const KernelConfig& kernel) {
  detail::check_kernel(kernel);
  DenseGrid<uint8_t> grid(spec, 0);
  if (lidar.empty()) return grid;

  std::vector<float> codes(lidar.size());
  for (std::size_t i = 0; i < lidar.size(); ++i)
    codes[i] = static_cast<float>(static_cast<uint8_t>(lidar.labels[i]));
  const SparseVoxelTensor labels = voxelize(lidar.points, codes, 1, spec, Reduce::kMajority);

  const int half = kernel.size / 2;
  for (std::size_t r = 0; r < labels.rows(); ++r) {
    const auto code = static_cast<uint8_t>(labels.feature(r, 0));
    if (code == 0) continue;
    const VoxelIndex v = labels.index(r);
    for (int dx = -half; dx <= half; ++dx) {
      const int x = int(v[0]) + dx;
      if (x < 0 || x >= int(spec.dims[0])) continue;
      for (int dy = -half; dy <= half; ++dy) {
        const int y = int(v[1]) + dy;
        if (y < 0 || y >= int(spec.dims[1])) continue;
        for (int dz = -half; dz <= half; ++dz) {
          const int z = int(v[2]) + dz;
          if (z < 0 || z >= int(spec.dims[2])) continue;
          uint8_t& cell = grid.at({uint32_t(x), uint32_t(y), uint32_t(z)});
          cell = std::max(cell, code);
        }
      }
    }
  }
  return grid;
}

// Stage-one supervision sampled on the network input support.
struct StageOneTarget {
  std::vector<VoxelIndex> support;
  Eigen::VectorXf y_structural;  // M x 1 in [0,1]
  Eigen::MatrixXf y_semantic;    // M x S one-hot
};

inline StageOneTarget assemble_stage1_target(const DenseGrid<float>& structural,
                                             const DenseGrid<uint8_t>& semantic,
                                             const SparseVoxelTensor& input) {
  if (!(structural.spec == input.spec()) || !(semantic.spec == input.spec()))
    throw std::invalid_argument("stage1 target: grid spec mismatch with input support");

  StageOneTarget target;
  target.support = input.indices();
  const auto m = static_cast<Eigen::Index>(input.rows());
  target.y_structural.resize(m);
  target.y_semantic = Eigen::MatrixXf::Zero(m, kClassCount);
  for (Eigen::Index r = 0; r < m; ++r) {
    const VoxelIndex v = input.index(r);
    target.y_structural[r] = structural.at(v);
    target.y_semantic(r, semantic.at(v)) = 1.0f;
  }
  return target;
}

// Stage-two data sample: ground-truth one-hot classes expanded onto the
// conditional support. Support voxels with no ground truth become "free";
// ground-truth voxels outside the support cannot be represented and are
// reported through `coverage` (matched / total).
struct StageTwoSample {
  GridSpec spec;
  std::vector<VoxelIndex> support;
  Eigen::MatrixXf x;  // L x S one-hot
  double coverage = 1.0;
};

inline StageTwoSample expand_stage2_sample(const SparseVoxelTensor& gt_labels,
                                           const GridSpec& spec,
                                           std::span<const VoxelIndex> condition_support) {
  if (gt_labels.cols() != 1)
    throw std::invalid_argument("stage2 sample: ground truth must be C=1 class codes");
  if (!(gt_labels.spec() == spec))
    throw std::invalid_argument("stage2 sample: spec mismatch");

  StageTwoSample sample;
  sample.spec = spec;
  sample.support.assign(condition_support.begin(), condition_support.end());
  const auto l = static_cast<Eigen::Index>(condition_support.size());
  sample.x = Eigen::MatrixXf::Zero(l, kClassCount);

  std::size_t gt_row = 0;
  std::size_t matched = 0;
  for (Eigen::Index r = 0; r < l; ++r) {
    const uint64_t key = spec.linear(condition_support[r]);
    while (gt_row < gt_labels.rows() && spec.linear(gt_labels.index(gt_row)) < key) ++gt_row;
    if (gt_row < gt_labels.rows() && spec.linear(gt_labels.index(gt_row)) == key) {
      const auto code = static_cast<uint8_t>(gt_labels.feature(gt_row, 0));
      sample.x(r, code) = 1.0f;
      if (code != 0) ++matched;
    } else {
      sample.x(r, 0) = 1.0f;  // free
    }
  }

  std::size_t gt_nonfree = 0;
  for (std::size_t r = 0; r < gt_labels.rows(); ++r)
    if (gt_labels.feature(r, 0) != 0.0f) ++gt_nonfree;
  sample.coverage = gt_nonfree == 0 ? 1.0 : double(matched) / double(gt_nonfree);
  return sample;
}

}  // namespace radsem
