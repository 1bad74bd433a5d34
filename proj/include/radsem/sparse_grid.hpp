#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "radsem/types.hpp"

namespace radsem {

using VoxelIndex = std::array<uint32_t, 3>;

// Cartesian voxel grid geometry. Defaults cover x in [4,40], y in [-20,20],
// z in [-20,10] metres at 150x150x100 voxels.
struct GridSpec {
  std::array<uint32_t, 3> dims{150, 150, 100};
  Eigen::Vector3d min_m{4.0, -20.0, -20.0};
  Eigen::Vector3d max_m{40.0, 20.0, 10.0};

  double voxel_size(int axis) const { return (max_m[axis] - min_m[axis]) / dims[axis]; }

  uint64_t total_voxels() const {
    return uint64_t(dims[0]) * uint64_t(dims[1]) * uint64_t(dims[2]);
  }

  // Linear key ordered the same way as lexicographic (x, y, z) order.
  uint64_t linear(const VoxelIndex& v) const {
    return (uint64_t(v[0]) * dims[1] + v[1]) * dims[2] + v[2];
  }

  VoxelIndex from_linear(uint64_t key) const {
    VoxelIndex v;
    v[2] = static_cast<uint32_t>(key % dims[2]);
    key /= dims[2];
    v[1] = static_cast<uint32_t>(key % dims[1]);
    v[0] = static_cast<uint32_t>(key / dims[1]);
    return v;
  }

  bool in_bounds(const VoxelIndex& v) const {
    return v[0] < dims[0] && v[1] < dims[1] && v[2] < dims[2];
  }

  // Voxel containing p, or nullopt if p is outside [min, max) on any axis.
  std::optional<VoxelIndex> voxel_of(const Eigen::Vector3d& p) const {
    VoxelIndex v;
    for (int a = 0; a < 3; ++a) {
      const double t = std::floor((p[a] - min_m[a]) / voxel_size(a));
      if (t < 0.0 || t >= double(dims[a])) return std::nullopt;
      v[a] = static_cast<uint32_t>(t);
    }
    return v;
  }

  Eigen::Vector3d voxel_center(const VoxelIndex& v) const {
    return {min_m[0] + (v[0] + 0.5) * voxel_size(0),
            min_m[1] + (v[1] + 0.5) * voxel_size(1),
            min_m[2] + (v[2] + 0.5) * voxel_size(2)};
  }

  bool operator==(const GridSpec& o) const {
    return dims == o.dims && min_m == o.min_m && max_m == o.max_m;
  }
};

// Sparse voxel tensor: M unique voxel indices in strictly increasing
// lexicographic order plus an M x C row-major feature matrix. This is the
// carrier for the accumulated radar cube, the detector occupancy grid,
// supervision targets, and diffusion states.
class SparseVoxelTensor {
 public:
  SparseVoxelTensor() = default;

  SparseVoxelTensor(GridSpec spec, std::vector<VoxelIndex> indices, std::vector<float> features,
                    uint32_t cols)
      : spec_(spec), indices_(std::move(indices)), features_(std::move(features)), cols_(cols) {
    validate();
  }

  static SparseVoxelTensor empty(GridSpec spec, uint32_t cols) {
    return SparseVoxelTensor(spec, {}, {}, cols);
  }

  const GridSpec& spec() const { return spec_; }
  std::size_t rows() const { return indices_.size(); }
  uint32_t cols() const { return cols_; }
  const std::vector<VoxelIndex>& indices() const { return indices_; }
  const std::vector<float>& features() const { return features_; }

  const VoxelIndex& index(std::size_t row) const { return indices_[row]; }
  std::span<const float> feature_row(std::size_t row) const {
    return {features_.data() + row * cols_, cols_};
  }
  float& feature(std::size_t row, uint32_t col) { return features_[row * cols_ + col]; }
  float feature(std::size_t row, uint32_t col) const { return features_[row * cols_ + col]; }

  bool operator==(const SparseVoxelTensor& o) const {
    return spec_ == o.spec_ && cols_ == o.cols_ && indices_ == o.indices_ &&
           features_ == o.features_;
  }

 private:
  void validate() const {
    if (features_.size() != indices_.size() * cols_)
      throw std::invalid_argument("sparse tensor: feature block size mismatch");
    uint64_t prev = 0;
    for (std::size_t i = 0; i < indices_.size(); ++i) {
      if (!spec_.in_bounds(indices_[i]))
        throw std::invalid_argument("sparse tensor: index out of grid bounds");
      const uint64_t key = spec_.linear(indices_[i]);
      if (i > 0 && key <= prev)
        throw std::invalid_argument("sparse tensor: indices not strictly increasing");
      prev = key;
    }
  }

  GridSpec spec_;
  std::vector<VoxelIndex> indices_;
  std::vector<float> features_;
  uint32_t cols_ = 0;
};

enum class Reduce { kSum, kMax, kMajority };

// Voxelizes N points with N x C feature rows. Points outside [min, max) are
// dropped; co-located points are combined per `reduce`. Sum accumulates in
// input order, so the result is reproducible bit for bit. Majority requires
// C = 1 integer class codes and breaks ties toward the smaller code.
inline SparseVoxelTensor voxelize(std::span<const Eigen::Vector3f> points,
                                  std::span<const float> values, uint32_t cols,
                                  const GridSpec& spec, Reduce reduce) {
  if (values.size() != points.size() * cols)
    throw std::invalid_argument("voxelize: values size must be N*C");
  if (reduce == Reduce::kMajority && cols != 1)
    throw std::invalid_argument("voxelize: majority reduction requires C=1");

  std::vector<std::pair<uint64_t, uint32_t>> keyed;  // (voxel key, input row)
  keyed.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Eigen::Vector3f& p = points[i];
    if (!p.allFinite()) throw std::invalid_argument("voxelize: non-finite coordinate");
    if (auto v = spec.voxel_of(p.cast<double>()))
      keyed.emplace_back(spec.linear(*v), static_cast<uint32_t>(i));
  }
  // Input rows are unique, so sorting the pair gives voxel order with
  // original order preserved inside each voxel.
  std::sort(keyed.begin(), keyed.end());

  std::vector<VoxelIndex> out_idx;
  std::vector<float> out_feat;
  std::vector<float> acc(cols);
  std::vector<std::pair<float, uint32_t>> votes;  // (code, count) for majority

  std::size_t i = 0;
  while (i < keyed.size()) {
    std::size_t j = i;
    while (j < keyed.size() && keyed[j].first == keyed[i].first) ++j;

    if (reduce == Reduce::kMajority) {
      votes.clear();
      for (std::size_t k = i; k < j; ++k) {
        const float code = values[keyed[k].second];
        if (code != std::floor(code))
          throw std::invalid_argument("voxelize: majority reduction needs integer codes");
        auto it = std::find_if(votes.begin(), votes.end(),
                               [&](const auto& v) { return v.first == code; });
        if (it == votes.end())
          votes.emplace_back(code, 1);
        else
          ++it->second;
      }
      // Highest count wins; ties go to the smallest code.
      float best = votes[0].first;
      uint32_t best_count = votes[0].second;
      for (const auto& [code, count] : votes)
        if (count > best_count || (count == best_count && code < best)) {
          best = code;
          best_count = count;
        }
      acc[0] = best;
    } else {
      const float* first = values.data() + std::size_t(keyed[i].second) * cols;
      std::copy(first, first + cols, acc.begin());
      for (std::size_t k = i + 1; k < j; ++k) {
        const float* row = values.data() + std::size_t(keyed[k].second) * cols;
        for (uint32_t c = 0; c < cols; ++c)
          acc[c] = reduce == Reduce::kSum ? acc[c] + row[c] : std::max(acc[c], row[c]);
      }
    }

    out_idx.push_back(spec.from_linear(keyed[i].first));
    out_feat.insert(out_feat.end(), acc.begin(), acc.end());
    i = j;
  }
  return SparseVoxelTensor(spec, std::move(out_idx), std::move(out_feat), cols);
}

// Re-expresses `b` on the support of `a`: rows of b missing from a are
// dropped, rows of a missing from b take fill_b. Returns (a, b aligned).
inline std::pair<SparseVoxelTensor, SparseVoxelTensor> align_supports(
    const SparseVoxelTensor& a, const SparseVoxelTensor& b, std::span<const float> fill_b) {
  if (!(a.spec() == b.spec())) throw std::invalid_argument("align_supports: spec mismatch");
  if (fill_b.size() != b.cols()) throw std::invalid_argument("align_supports: fill size != C_b");

  std::vector<float> feat;
  feat.reserve(a.rows() * b.cols());
  std::size_t ib = 0;
  for (std::size_t ia = 0; ia < a.rows(); ++ia) {
    const uint64_t ka = a.spec().linear(a.index(ia));
    while (ib < b.rows() && b.spec().linear(b.index(ib)) < ka) ++ib;
    if (ib < b.rows() && b.spec().linear(b.index(ib)) == ka) {
      const auto row = b.feature_row(ib);
      feat.insert(feat.end(), row.begin(), row.end());
    } else {
      feat.insert(feat.end(), fill_b.begin(), fill_b.end());
    }
  }
  SparseVoxelTensor aligned(a.spec(), a.indices(), std::move(feat), b.cols());
  return {a, std::move(aligned)};
}

// Keeps rows where pred(index, feature_row) holds; canonical order survives.
inline SparseVoxelTensor filter_rows(
    const SparseVoxelTensor& t,
    const std::function<bool(const VoxelIndex&, std::span<const float>)>& pred) {
  std::vector<VoxelIndex> idx;
  std::vector<float> feat;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    if (pred(t.index(r), t.feature_row(r))) {
      idx.push_back(t.index(r));
      const auto row = t.feature_row(r);
      feat.insert(feat.end(), row.begin(), row.end());
    }
  }
  return SparseVoxelTensor(t.spec(), std::move(idx), std::move(feat), t.cols());
}

// Converts a C=1 class-code tensor to a point cloud of voxel centres.
// Free rows are excluded.
inline SemanticPointCloud to_point_cloud(const SparseVoxelTensor& t) {
  if (t.cols() != 1) throw std::invalid_argument("to_point_cloud: expected C=1 class codes");
  SemanticPointCloud cloud;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const float code = t.feature(r, 0);
    if (code != std::floor(code) || code < 0 || code >= kClassCount)
      throw std::invalid_argument("to_point_cloud: feature is not a class code");
    const auto label = static_cast<ClassLabel>(static_cast<uint8_t>(code));
    if (label == ClassLabel::kFree) continue;
    cloud.push_back(t.spec().voxel_center(t.index(r)).cast<float>(), label);
  }
  return cloud;
}

}  // namespace radsem
