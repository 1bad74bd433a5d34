#pragma once

// Independent reference implementations used only by tests. None of these
// share code with the library paths they check.

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "radsem/rng.hpp"
#include "radsem/sparse_grid.hpp"
#include "radsem/types.hpp"

namespace oracle {

// Dense scatter voxelizer: walks points in input order and reduces into a
// plain dense array, then reads the non-empty cells back in index order.
struct DenseVoxelizer {
  explicit DenseVoxelizer(const radsem::GridSpec& spec, uint32_t cols)
      : spec(spec), cols(cols), sum(spec.total_voxels() * cols, 0.0f),
        touched(spec.total_voxels(), false) {}

  void add_sum(const Eigen::Vector3f& p, std::span<const float> row) {
    if (auto v = voxel_of(p)) {
      const uint64_t key = linear(*v);
      touched[key] = true;
      for (uint32_t c = 0; c < cols; ++c) sum[key * cols + c] += row[c];
    }
  }

  std::optional<radsem::VoxelIndex> voxel_of(const Eigen::Vector3f& p) const {
    radsem::VoxelIndex v;
    for (int a = 0; a < 3; ++a) {
      const double size = (spec.max_m[a] - spec.min_m[a]) / spec.dims[a];
      const double t = std::floor((double(p[a]) - spec.min_m[a]) / size);
      if (t < 0.0 || t >= double(spec.dims[a])) return std::nullopt;
      v[a] = uint32_t(t);
    }
    return v;
  }

  uint64_t linear(const radsem::VoxelIndex& v) const {
    return (uint64_t(v[0]) * spec.dims[1] + v[1]) * spec.dims[2] + v[2];
  }

  // Non-empty cells in index order.
  std::vector<std::pair<radsem::VoxelIndex, std::vector<float>>> result() const {
    std::vector<std::pair<radsem::VoxelIndex, std::vector<float>>> out;
    for (uint64_t key = 0; key < touched.size(); ++key) {
      if (!touched[key]) continue;
      radsem::VoxelIndex v;
      uint64_t k = key;
      v[2] = uint32_t(k % spec.dims[2]);
      k /= spec.dims[2];
      v[1] = uint32_t(k % spec.dims[1]);
      v[0] = uint32_t(k / spec.dims[1]);
      out.emplace_back(v, std::vector<float>(sum.begin() + key * cols,
                                             sum.begin() + (key + 1) * cols));
    }
    return out;
  }

  radsem::GridSpec spec;
  uint32_t cols;
  std::vector<float> sum;
  std::vector<bool> touched;
};

// 4x4 homogeneous transform reference for rigid alignment.
inline Eigen::Vector3d homogeneous_transform(const radsem::PoseSE3& from,
                                             const radsem::PoseSE3& to,
                                             const Eigen::Vector3d& p) {
  Eigen::Matrix4d mf = Eigen::Matrix4d::Identity(), mt = Eigen::Matrix4d::Identity();
  mf.topLeftCorner<3, 3>() = from.rotation;
  mf.topRightCorner<3, 1>() = from.translation;
  mt.topLeftCorner<3, 3>() = to.rotation;
  mt.topRightCorner<3, 1>() = to.translation;
  const Eigen::Vector4d r = mt.inverse() * mf * Eigen::Vector4d(p.x(), p.y(), p.z(), 1.0);
  return r.head<3>() / r.w();
}

inline Eigen::Vector3f random_point(radsem::Rng& rng, const radsem::GridSpec& spec,
                                    double margin = 0.0) {
  return {float(rng.uniform(spec.min_m.x() - margin, spec.max_m.x() + margin)),
          float(rng.uniform(spec.min_m.y() - margin, spec.max_m.y() + margin)),
          float(rng.uniform(spec.min_m.z() - margin, spec.max_m.z() + margin))};
}

}  // namespace oracle
