#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "radsem/models.hpp"
#include "radsem/radar.hpp"
#include "radsem/sparse_grid.hpp"
#include "radsem/types.hpp"

// Binary formats are little-endian with fixed-width fields, written in the
// order documented at each writer. Text formats are one record per line.

namespace radsem {

namespace detail {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError(std::string("truncated file while reading ") + what);
  return v;
}

inline void write_magic(std::ostream& out, const char magic[4]) { out.write(magic, 4); }

inline void expect_magic(std::istream& in, const char magic[4], const char* what) {
  char buf[4];
  in.read(buf, 4);
  if (!in || std::memcmp(buf, magic, 4) != 0)
    throw DataError(std::string("bad magic for ") + what);
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for reading: " + path.string());
  return in;
}

}  // namespace detail

inline uint64_t fnv1a(const void* data, std::size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

inline uint64_t radar_config_hash(const RadarConfig& c) {
  const double fields[] = {c.bandwidth_hz,
                           c.chirp_duration_s,
                           c.carrier_hz,
                           double(c.elements_azimuth),
                           double(c.elements_elevation),
                           c.element_spacing_m,
                           c.noise_floor,
                           double(c.dims[0]),
                           double(c.dims[1]),
                           double(c.dims[2]),
                           c.fov.range_min_m,
                           c.fov.range_max_m,
                           c.fov.elevation_max_rad,
                           c.fov.azimuth_max_rad,
                           c.kernel_truncation_mainlobes};
  return fnv1a(fields, sizeof(fields));
}

// --- spherical cube ---------------------------------------------------------
// "RSCB", u32 version, u32 dims[3] (R,E,A), f64 range_min, range_max,
// elevation_max, azimuth_max, u64 config hash, u32 frame index, then
// R*E*A f32 power values with azimuth fastest.

inline void save_cube(const SphericalCube& cube, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  detail::write_magic(out, "RSCB");
  detail::write_pod<uint32_t>(out, 1);
  for (int a = 0; a < 3; ++a) detail::write_pod<uint32_t>(out, cube.config.dims[a]);
  detail::write_pod<double>(out, cube.config.fov.range_min_m);
  detail::write_pod<double>(out, cube.config.fov.range_max_m);
  detail::write_pod<double>(out, cube.config.fov.elevation_max_rad);
  detail::write_pod<double>(out, cube.config.fov.azimuth_max_rad);
  detail::write_pod<uint64_t>(out, radar_config_hash(cube.config));
  detail::write_pod<uint32_t>(out, cube.frame_index);
  out.write(reinterpret_cast<const char*>(cube.power.data()),
            std::streamsize(cube.power.size() * sizeof(float)));
  if (!out) throw DataError("write failed: " + path.string());
}

// The file carries the cube geometry only; array and waveform parameters
// take defaults and are cross-checked through the stored hash when the
// caller provides the original config.
inline SphericalCube load_cube(const std::filesystem::path& path,
                               const RadarConfig* expected = nullptr) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "RSCB", "spherical cube");
  if (detail::read_pod<uint32_t>(in, "version") != 1)
    throw DataError("unsupported cube version: " + path.string());
  SphericalCube cube;
  if (expected) cube.config = *expected;
  for (int a = 0; a < 3; ++a) cube.config.dims[a] = detail::read_pod<uint32_t>(in, "dims");
  cube.config.fov.range_min_m = detail::read_pod<double>(in, "range_min");
  cube.config.fov.range_max_m = detail::read_pod<double>(in, "range_max");
  cube.config.fov.elevation_max_rad = detail::read_pod<double>(in, "elevation_max");
  cube.config.fov.azimuth_max_rad = detail::read_pod<double>(in, "azimuth_max");
  const auto hash = detail::read_pod<uint64_t>(in, "config hash");
  if (expected && hash != radar_config_hash(*expected))
    throw DataError("cube config hash mismatch: " + path.string());
  cube.frame_index = detail::read_pod<uint32_t>(in, "frame index");
  cube.power.resize(cube.config.bin_count());
  in.read(reinterpret_cast<char*>(cube.power.data()),
          std::streamsize(cube.power.size() * sizeof(float)));
  if (!in) throw DataError("truncated cube payload: " + path.string());
  return cube;
}

// --- sparse voxel tensor ----------------------------------------------------
// "SVXT", u32 version, u32 dims[3], f64 min[3], f64 max[3], u64 M, u32 C,
// then 3*M u32 indices (row-major) and C*M f32 features (row-major).

inline void save_tensor(const SparseVoxelTensor& t, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  detail::write_magic(out, "SVXT");
  detail::write_pod<uint32_t>(out, 1);
  for (int a = 0; a < 3; ++a) detail::write_pod<uint32_t>(out, t.spec().dims[a]);
  for (int a = 0; a < 3; ++a) detail::write_pod<double>(out, t.spec().min_m[a]);
  for (int a = 0; a < 3; ++a) detail::write_pod<double>(out, t.spec().max_m[a]);
  detail::write_pod<uint64_t>(out, t.rows());
  detail::write_pod<uint32_t>(out, t.cols());
  out.write(reinterpret_cast<const char*>(t.indices().data()),
            std::streamsize(t.rows() * 3 * sizeof(uint32_t)));
  out.write(reinterpret_cast<const char*>(t.features().data()),
            std::streamsize(t.features().size() * sizeof(float)));
  if (!out) throw DataError("write failed: " + path.string());
}

inline SparseVoxelTensor load_tensor(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "SVXT", "sparse tensor");
  if (detail::read_pod<uint32_t>(in, "version") != 1)
    throw DataError("unsupported tensor version: " + path.string());
  GridSpec spec;
  for (int a = 0; a < 3; ++a) spec.dims[a] = detail::read_pod<uint32_t>(in, "dims");
  for (int a = 0; a < 3; ++a) spec.min_m[a] = detail::read_pod<double>(in, "min");
  for (int a = 0; a < 3; ++a) spec.max_m[a] = detail::read_pod<double>(in, "max");
  const auto rows = detail::read_pod<uint64_t>(in, "row count");
  const auto cols = detail::read_pod<uint32_t>(in, "column count");
  std::vector<VoxelIndex> indices(rows);
  in.read(reinterpret_cast<char*>(indices.data()), std::streamsize(rows * 3 * sizeof(uint32_t)));
  std::vector<float> features(rows * cols);
  in.read(reinterpret_cast<char*>(features.data()),
          std::streamsize(features.size() * sizeof(float)));
  if (!in) throw DataError("truncated tensor payload: " + path.string());
  try {
    return SparseVoxelTensor(spec, std::move(indices), std::move(features), cols);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid tensor file: ") + e.what());
  }
}

// --- point clouds -----------------------------------------------------------
// Text, one point per line: "x y z label" after a single header line.

inline void save_point_cloud(const SemanticPointCloud& cloud, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "# radsem point cloud v1: x y z label\n";
  char line[128];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    std::snprintf(line, sizeof(line), "%.9g %.9g %.9g %u\n", double(p.x()), double(p.y()),
                  double(p.z()), unsigned(cloud.labels[i]));
    out << line;
  }
  if (!out) throw DataError("write failed: " + path.string());
}

inline SemanticPointCloud load_point_cloud(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string header;
  std::getline(in, header);
  if (header.rfind("# radsem point cloud v1", 0) != 0)
    throw DataError("bad point cloud header: " + path.string());
  SemanticPointCloud cloud;
  double x, y, z;
  unsigned label;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::sscanf(line.c_str(), "%lf %lf %lf %u", &x, &y, &z, &label) != 4)
      throw DataError("bad point cloud line: " + line);
    cloud.push_back(Eigen::Vector3f(float(x), float(y), float(z)), class_from_code(label));
  }
  return cloud;
}

// --- poses ------------------------------------------------------------------
// Text, one frame per line:
// "timestamp tx ty tz r00 r01 r02 r10 r11 r12 r20 r21 r22".

inline void save_poses(std::span<const PoseSE3> poses, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  char buf[512];
  for (const auto& pose : poses) {
    const auto& r = pose.rotation;
    const auto& t = pose.translation;
    std::snprintf(buf, sizeof(buf),
                  "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  pose.timestamp, t.x(), t.y(), t.z(), r(0, 0), r(0, 1), r(0, 2), r(1, 0), r(1, 1),
                  r(1, 2), r(2, 0), r(2, 1), r(2, 2));
    out << buf;
  }
  if (!out) throw DataError("write failed: " + path.string());
}

inline std::vector<PoseSE3> load_poses(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::vector<PoseSE3> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    PoseSE3 pose;
    double v[13];
    if (std::sscanf(line.c_str(), "%lf %lf %lf %lf %lf %lf %lf %lf %lf %lf %lf %lf %lf", &v[0],
                    &v[1], &v[2], &v[3], &v[4], &v[5], &v[6], &v[7], &v[8], &v[9], &v[10], &v[11],
                    &v[12]) != 13)
      throw DataError("bad pose line: " + line);
    pose.timestamp = v[0];
    pose.translation = {v[1], v[2], v[3]};
    pose.rotation << v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11], v[12];
    if (!pose.is_orthonormal(1e-6)) throw DataError("pose rotation is not orthonormal: " + line);
    poses.push_back(pose);
  }
  return poses;
}

// --- model parameters -------------------------------------------------------
// "RSMD", u32 version, u32 kind, kind-specific shape header, then a flat
// f32 parameter block. Kind 1 = stage-one predictor, 2 = row-wise denoiser.

inline void save_stage1_model(const ReferenceStage1Predictor& model,
                              const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  detail::write_magic(out, "RSMD");
  detail::write_pod<uint32_t>(out, 1);
  detail::write_pod<uint32_t>(out, 1);  // kind
  detail::write_pod<uint32_t>(out, ReferenceStage1Predictor::kFeatureCount);
  detail::write_pod<uint32_t>(out, kClassCount);
  auto put = [&](double v) { detail::write_pod<float>(out, static_cast<float>(v)); };
  for (int i = 0; i < ReferenceStage1Predictor::kFeatureCount; ++i) put(model.w_structural()[i]);
  put(model.b_structural());
  for (int c = 0; c < kClassCount; ++c)
    for (int i = 0; i < ReferenceStage1Predictor::kFeatureCount; ++i) put(model.w_semantic()(c, i));
  for (int c = 0; c < kClassCount; ++c) put(model.b_semantic()[c]);
  if (!out) throw DataError("write failed: " + path.string());
}

inline ReferenceStage1Predictor load_stage1_model(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "RSMD", "model");
  if (detail::read_pod<uint32_t>(in, "version") != 1)
    throw DataError("unsupported model version: " + path.string());
  if (detail::read_pod<uint32_t>(in, "kind") != 1)
    throw DataError("not a stage-one model: " + path.string());
  if (detail::read_pod<uint32_t>(in, "features") != ReferenceStage1Predictor::kFeatureCount ||
      detail::read_pod<uint32_t>(in, "classes") != kClassCount)
    throw DataError("stage-one model shape mismatch: " + path.string());
  ReferenceStage1Predictor model;
  auto get = [&] { return double(detail::read_pod<float>(in, "parameter")); };
  for (int i = 0; i < ReferenceStage1Predictor::kFeatureCount; ++i) model.w_structural()[i] = get();
  model.b_structural() = get();
  for (int c = 0; c < kClassCount; ++c)
    for (int i = 0; i < ReferenceStage1Predictor::kFeatureCount; ++i) model.w_semantic()(c, i) = get();
  for (int c = 0; c < kClassCount; ++c) model.b_semantic()[c] = get();
  return model;
}

inline void save_denoiser_model(const RowwiseDenoiser& model, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  detail::write_magic(out, "RSMD");
  detail::write_pod<uint32_t>(out, 1);
  detail::write_pod<uint32_t>(out, 2);  // kind
  const auto& cfg = model.config();
  detail::write_pod<uint32_t>(out, uint32_t(cfg.state_cols));
  detail::write_pod<uint32_t>(out, uint32_t(cfg.condition_cols));
  detail::write_pod<uint32_t>(out, uint32_t(cfg.hidden));
  detail::write_pod<uint32_t>(out, uint32_t(cfg.fourier_features));
  detail::write_pod<uint64_t>(out, model.mlp().parameter_count());
  for (double p : model.mlp().params()) detail::write_pod<float>(out, static_cast<float>(p));
  if (!out) throw DataError("write failed: " + path.string());
}

inline RowwiseDenoiser load_denoiser_model(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "RSMD", "model");
  if (detail::read_pod<uint32_t>(in, "version") != 1)
    throw DataError("unsupported model version: " + path.string());
  if (detail::read_pod<uint32_t>(in, "kind") != 2)
    throw DataError("not a denoiser model: " + path.string());
  RowwiseDenoiserConfig cfg;
  cfg.state_cols = int(detail::read_pod<uint32_t>(in, "state cols"));
  cfg.condition_cols = int(detail::read_pod<uint32_t>(in, "condition cols"));
  cfg.hidden = int(detail::read_pod<uint32_t>(in, "hidden"));
  cfg.fourier_features = int(detail::read_pod<uint32_t>(in, "fourier"));
  RowwiseDenoiser model(cfg);
  const auto count = detail::read_pod<uint64_t>(in, "parameter count");
  if (count != model.mlp().parameter_count())
    throw DataError("denoiser parameter count mismatch: " + path.string());
  for (auto& p : model.mlp().params()) p = double(detail::read_pod<float>(in, "parameter"));
  return model;
}

}  // namespace radsem
