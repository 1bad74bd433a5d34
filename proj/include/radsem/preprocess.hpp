#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "radsem/parallel.hpp"
#include "radsem/radar.hpp"
#include "radsem/sparse_grid.hpp"
#include "radsem/types.hpp"

namespace radsem {

// Multi-frame accumulation parameters. The per-frame and post-accumulation
// intensity filters are independent knobs with equal defaults.
struct PreprocessConfig {
  int frame_count = 5;                  // K: current frame plus K-1 past frames
  double per_frame_top_percent = 1.0;   // q_th for each spherical cube
  double final_top_percent = 1.0;       // q_th for the accumulated Cartesian cube
  GridSpec grid;
  FovConfig fov;
};

// Stage-one network input: support shared with the accumulated cube,
// column 0 = power normalized to [0,1], column 1 = detector occupancy.
inline constexpr uint32_t kStageOneInputCols = 2;

// Keeps the ceil(bins * q / 100) highest-power bins of a spherical cube.
// Ties break toward the lexicographically smaller bin index, and the
// selection is returned in index order.
inline std::pair<std::vector<std::array<uint32_t, 3>>, std::vector<float>> intensity_filter(
    const SphericalCube& cube, double top_percent) {
  if (top_percent <= 0.0 || top_percent > 100.0)
    throw ConfigError("intensity filter: percentile must be in (0, 100]");
  const std::size_t total = cube.power.size();
  const std::size_t keep = std::min<std::size_t>(
      total, static_cast<std::size_t>(std::ceil(total * top_percent / 100.0)));

  std::vector<uint32_t> order(total);
  std::iota(order.begin(), order.end(), 0u);
  auto better = [&](uint32_t a, uint32_t b) {
    if (cube.power[a] != cube.power[b]) return cube.power[a] > cube.power[b];
    return a < b;
  };
  if (keep < total) {
    std::nth_element(order.begin(), order.begin() + keep, order.end(), better);
    order.resize(keep);
  }
  std::sort(order.begin(), order.end());

  std::vector<std::array<uint32_t, 3>> bins(order.size());
  std::vector<float> powers(order.size());
  const uint32_t E = cube.config.dims[1], A = cube.config.dims[2];
  for (std::size_t i = 0; i < order.size(); ++i) {
    const uint32_t lin = order[i];
    bins[i] = {lin / (E * A), (lin / A) % E, lin % A};
    powers[i] = cube.power[lin];
  }
  return {std::move(bins), std::move(powers)};
}

// Rigid change of frame: applies to^-1 compose from.
inline std::vector<Eigen::Vector3d> transform_points(std::span<const Eigen::Vector3d> points,
                                                     const PoseSE3& from, const PoseSE3& to) {
  const Eigen::Matrix3d rot = to.rotation.transpose() * from.rotation;
  const Eigen::Vector3d trans = to.rotation.transpose() * (from.translation - to.translation);
  std::vector<Eigen::Vector3d> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(rot * p + trans);
  return out;
}

// Sums intensities per voxel. The result is bit-identical for any thread
// count and matches a sequential dense scatter-add over the same input:
// each voxel's contributions are added in input order with left
// association. Work is spread over a fixed grid of key-range buckets;
// entries reach their bucket in input order because input chunks are
// contiguous and concatenated in chunk order, and a stable per-bucket sort
// then groups keys without reordering equal keys.
inline SparseVoxelTensor parallel_index_accumulate(std::span<const VoxelIndex> indices,
                                                   std::span<const float> intensities,
                                                   const GridSpec& spec, unsigned threads) {
  if (indices.size() != intensities.size())
    throw std::invalid_argument("index accumulate: size mismatch");

  for (const auto& v : indices)
    if (!spec.in_bounds(v)) throw std::invalid_argument("index accumulate: voxel outside grid");

  constexpr std::size_t kBuckets = 64;  // fixed, independent of threads
  const uint64_t bucket_width = (spec.total_voxels() + kBuckets - 1) / kBuckets;
  const unsigned workers = std::max(1u, threads);

  using Entry = std::pair<uint64_t, float>;
  std::vector<std::vector<std::vector<Entry>>> staged(workers);  // [worker][bucket]

  parallel_chunks(indices.size(), workers, [&](std::size_t begin, std::size_t end, unsigned w) {
    auto& local = staged[w];
    local.resize(kBuckets);
    for (std::size_t i = begin; i < end; ++i) {
      const uint64_t key = spec.linear(indices[i]);
      local[key / bucket_width].emplace_back(key, intensities[i]);
    }
  });

  std::vector<std::vector<Entry>> buckets(kBuckets);
  for (std::size_t b = 0; b < kBuckets; ++b) {
    std::size_t total = 0;
    for (const auto& local : staged)
      if (b < local.size()) total += local[b].size();
    buckets[b].reserve(total);
    for (const auto& local : staged)
      if (b < local.size())
        buckets[b].insert(buckets[b].end(), local[b].begin(), local[b].end());
  }
  staged.clear();

  std::vector<std::vector<VoxelIndex>> out_idx(kBuckets);
  std::vector<std::vector<float>> out_feat(kBuckets);
  parallel_chunks(kBuckets, workers, [&](std::size_t begin, std::size_t end, unsigned) {
    for (std::size_t b = begin; b < end; ++b) {
      auto& entries = buckets[b];
      std::stable_sort(entries.begin(), entries.end(),
                       [](const Entry& x, const Entry& y) { return x.first < y.first; });
      std::size_t i = 0;
      while (i < entries.size()) {
        float sum = entries[i].second;
        std::size_t j = i + 1;
        for (; j < entries.size() && entries[j].first == entries[i].first; ++j)
          sum += entries[j].second;
        out_idx[b].push_back(spec.from_linear(entries[i].first));
        out_feat[b].push_back(sum);
        i = j;
      }
    }
  });

  std::vector<VoxelIndex> idx;
  std::vector<float> feat;
  for (std::size_t b = 0; b < kBuckets; ++b) {
    idx.insert(idx.end(), out_idx[b].begin(), out_idx[b].end());
    feat.insert(feat.end(), out_feat[b].begin(), out_feat[b].end());
  }
  return SparseVoxelTensor(spec, std::move(idx), std::move(feat), 1);
}

namespace detail {

// Keeps the top `keep` rows of a C=1 tensor by (feature desc, index asc)
// and returns them in canonical order.
inline SparseVoxelTensor keep_top_rows(const SparseVoxelTensor& t, std::size_t keep) {
  if (keep >= t.rows()) return t;
  std::vector<uint32_t> order(t.rows());
  std::iota(order.begin(), order.end(), 0u);
  auto better = [&](uint32_t a, uint32_t b) {
    if (t.feature(a, 0) != t.feature(b, 0)) return t.feature(a, 0) > t.feature(b, 0);
    return a < b;  // rows are already in index order
  };
  std::nth_element(order.begin(), order.begin() + keep, order.end(), better);
  order.resize(keep);
  std::sort(order.begin(), order.end());
  std::vector<VoxelIndex> idx(keep);
  std::vector<float> feat(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    idx[i] = t.index(order[i]);
    feat[i] = t.feature(order[i], 0);
  }
  return SparseVoxelTensor(t.spec(), std::move(idx), std::move(feat), 1);
}

}  // namespace detail

// Full pre-processing chain: per-frame intensity filter, spherical bin
// centres to Cartesian points, alignment of past frames onto the last
// (current) frame, FOV filter against the current frustum, voxel
// accumulation, a final intensity filter that keeps
// ceil(X*Y*Z*final_top_percent/100) voxels, and max-normalization of the
// surviving power to [0,1].
inline SparseVoxelTensor accumulate_frames(std::span<const SphericalCube> cubes,
                                           std::span<const PoseSE3> poses,
                                           const PreprocessConfig& cfg, unsigned threads = 1) {
  if (cubes.size() != poses.size() || cubes.empty())
    throw std::invalid_argument("accumulate_frames: need equal, non-zero cube and pose counts");

  const std::size_t current = cubes.size() - 1;
  std::vector<VoxelIndex> voxels;
  std::vector<float> intensities;

  for (std::size_t f = 0; f < cubes.size(); ++f) {
    auto [bins, powers] = intensity_filter(cubes[f], cfg.per_frame_top_percent);
    std::vector<Eigen::Vector3d> pts = spherical_bins_to_points(bins, cubes[f].config);
    if (f != current) pts = transform_points(pts, poses[f], poses[current]);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (!cfg.fov.contains(pts[i])) continue;
      if (auto v = cfg.grid.voxel_of(pts[i])) {
        voxels.push_back(*v);
        intensities.push_back(powers[i]);
      }
    }
  }

  SparseVoxelTensor acc = parallel_index_accumulate(voxels, intensities, cfg.grid, threads);

  if (cfg.final_top_percent <= 0.0 || cfg.final_top_percent > 100.0)
    throw ConfigError("accumulate_frames: final percentile must be in (0, 100]");
  const auto target = static_cast<std::size_t>(
      std::ceil(double(cfg.grid.total_voxels()) * cfg.final_top_percent / 100.0));
  SparseVoxelTensor rcc = detail::keep_top_rows(acc, target);

  float max_power = 0.0f;
  for (std::size_t r = 0; r < rcc.rows(); ++r) max_power = std::max(max_power, rcc.feature(r, 0));
  if (max_power > 0.0f) {
    std::vector<float> feat(rcc.features());
    for (float& v : feat) v /= max_power;
    rcc = SparseVoxelTensor(rcc.spec(), rcc.indices(), std::move(feat), 1);
  }
  return rcc;
}

// Detector point cloud, aligned and voxelized to {0,1} occupancy.
inline SparseVoxelTensor build_rpc(std::span<const std::vector<CfarDetection>> frame_detections,
                                   const RadarConfig& radar, std::span<const PoseSE3> poses,
                                   const PreprocessConfig& cfg) {
  if (frame_detections.size() != poses.size() || poses.empty())
    throw std::invalid_argument("build_rpc: need equal, non-zero detection and pose counts");

  const std::size_t current = poses.size() - 1;
  std::vector<Eigen::Vector3f> points;
  for (std::size_t f = 0; f < frame_detections.size(); ++f) {
    std::vector<std::array<uint32_t, 3>> bins;
    bins.reserve(frame_detections[f].size());
    for (const auto& d : frame_detections[f]) bins.push_back(d.bin);
    std::vector<Eigen::Vector3d> pts = spherical_bins_to_points(bins, radar);
    if (f != current) pts = transform_points(pts, poses[f], poses[current]);
    for (const auto& p : pts)
      if (cfg.fov.contains(p)) points.push_back(p.cast<float>());
  }
  std::vector<float> ones(points.size(), 1.0f);
  return voxelize(points, ones, 1, cfg.grid, Reduce::kMax);
}

// Concatenates normalized power and occupancy on the accumulated cube's
// support: column 0 is the power divided by its maximum, column 1 the
// occupancy bit expanded with fill 0.
inline SparseVoxelTensor assemble_stage1_input(const SparseVoxelTensor& rcc,
                                               const SparseVoxelTensor& rpc) {
  if (!(rcc.spec() == rpc.spec()))
    throw std::invalid_argument("assemble_stage1_input: spec mismatch");
  if (rcc.cols() != 1 || rpc.cols() != 1)
    throw std::invalid_argument("assemble_stage1_input: expected C=1 inputs");

  const float fill[1] = {0.0f};
  auto [ref, occupancy] = align_supports(rcc, rpc, fill);

  float max_power = 0.0f;
  for (std::size_t r = 0; r < ref.rows(); ++r) max_power = std::max(max_power, ref.feature(r, 0));

  std::vector<float> feat(ref.rows() * kStageOneInputCols);
  for (std::size_t r = 0; r < ref.rows(); ++r) {
    feat[r * 2] = max_power > 0.0f ? ref.feature(r, 0) / max_power : 0.0f;
    feat[r * 2 + 1] = occupancy.feature(r, 0) > 0.0f ? 1.0f : 0.0f;
  }
  return SparseVoxelTensor(ref.spec(), ref.indices(), std::move(feat), kStageOneInputCols);
}

}  // namespace radsem
