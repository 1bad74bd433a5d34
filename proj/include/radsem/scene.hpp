#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "radsem/rng.hpp"
#include "radsem/types.hpp"

namespace radsem {

// One idealized point scatterer. rcs is linear power, not dBsm.
struct Scatterer {
  Eigen::Vector3f position;
  float rcs;
  ClassLabel label;
};

struct Scene {
  std::vector<Scatterer> scatterers;
  Eigen::Vector3d extent_min;
  Eigen::Vector3d extent_max;
};

// Procedural field layout: a jittered ground lattice, ellipsoidal tree
// clusters, vertical poles, and wires strung between consecutive pole tops
// with a small parabolic sag. RCS defaults make wires the weakest targets.
struct SceneConfig {
  Eigen::Vector3d extent_min{0.0, -25.0, -1.0};
  Eigen::Vector3d extent_max{60.0, 25.0, 12.0};

  bool ground_enabled = true;
  double ground_spacing_m = 1.0;
  double ground_roughness_m = 0.15;
  double ground_z_m = 0.0;
  double ground_rcs = 1.0;

  int tree_count = 6;
  int scatterers_per_tree = 40;
  double tree_radius_m = 1.8;
  double tree_height_m = 4.0;
  double tree_rcs = 0.5;

  int pole_count = 4;
  double pole_height_m = 6.0;
  double pole_sample_spacing_m = 0.4;
  double pole_rcs = 0.3;

  int wire_count = 3;
  double wire_sample_spacing_m = 0.5;
  double wire_sag_fraction = 0.02;  // sag depth as a fraction of span length
  double wire_rcs = 0.05;
};

struct TrajectoryConfig {
  int frame_count = 5;
  double frame_period_s = 0.2;  // 5 Hz
  double speed_mps = 2.0;
  Eigen::Vector3d start{2.0, 0.0, 3.0};
  double start_yaw_rad = 0.0;
  double yaw_rate_max_rad_s = 0.25;
  double yaw_noise_rad_s = 0.1;
};

namespace detail {

inline Eigen::Vector3d clamp_to_box(Eigen::Vector3d p, const Eigen::Vector3d& lo,
                                    const Eigen::Vector3d& hi) {
  for (int a = 0; a < 3; ++a) p[a] = std::clamp(p[a], lo[a], hi[a]);
  return p;
}

}  // namespace detail

inline Scene generate_scene(const SceneConfig& cfg, uint64_t seed) {
  const Eigen::Vector3d span = cfg.extent_max - cfg.extent_min;
  if ((span.array() <= 0.0).any()) throw ConfigError("scene: extent must be positive on all axes");
  if (cfg.tree_count < 0 || cfg.pole_count < 0 || cfg.wire_count < 0 ||
      cfg.scatterers_per_tree < 0)
    throw ConfigError("scene: feature counts must be >= 0");
  if (cfg.ground_enabled && (span.x() < cfg.ground_spacing_m || span.y() < cfg.ground_spacing_m))
    throw ConfigError("scene: extent cannot hold one ground lattice cell");
  if (cfg.tree_count > 0 && (span.minCoeff() < 2.0 * cfg.tree_radius_m))
    throw ConfigError("scene: extent cannot hold a tree cluster");
  if (cfg.pole_count > 0 && span.z() < cfg.pole_height_m)
    throw ConfigError("scene: extent cannot hold a pole");
  if (cfg.wire_count > 0 && cfg.pole_count < 2)
    throw ConfigError("scene: wires need at least two poles");

  Scene scene;
  scene.extent_min = cfg.extent_min;
  scene.extent_max = cfg.extent_max;
  Rng rng(seed);

  if (cfg.ground_enabled) {
    for (double x = cfg.extent_min.x() + 0.5 * cfg.ground_spacing_m; x < cfg.extent_max.x();
         x += cfg.ground_spacing_m) {
      for (double y = cfg.extent_min.y() + 0.5 * cfg.ground_spacing_m; y < cfg.extent_max.y();
           y += cfg.ground_spacing_m) {
        Eigen::Vector3d p{x + rng.uniform(-0.2, 0.2) * cfg.ground_spacing_m,
                          y + rng.uniform(-0.2, 0.2) * cfg.ground_spacing_m,
                          cfg.ground_z_m + rng.normal(0.0, cfg.ground_roughness_m)};
        p = detail::clamp_to_box(p, cfg.extent_min, cfg.extent_max);
        scene.scatterers.push_back(
            {p.cast<float>(), static_cast<float>(cfg.ground_rcs), ClassLabel::kGround});
      }
    }
  }

  for (int t = 0; t < cfg.tree_count; ++t) {
    const double margin = cfg.tree_radius_m;
    Eigen::Vector3d center{
        rng.uniform(cfg.extent_min.x() + margin, cfg.extent_max.x() - margin),
        rng.uniform(cfg.extent_min.y() + margin, cfg.extent_max.y() - margin),
        cfg.ground_z_m + 0.65 * cfg.tree_height_m};
    for (int s = 0; s < cfg.scatterers_per_tree; ++s) {
      Eigen::Vector3d offset{rng.normal(0.0, 0.5 * cfg.tree_radius_m),
                             rng.normal(0.0, 0.5 * cfg.tree_radius_m),
                             rng.normal(0.0, 0.35 * cfg.tree_height_m)};
      Eigen::Vector3d p = detail::clamp_to_box(center + offset, cfg.extent_min, cfg.extent_max);
      scene.scatterers.push_back(
          {p.cast<float>(), static_cast<float>(cfg.tree_rcs), ClassLabel::kTree});
    }
  }

  std::vector<Eigen::Vector3d> pole_tops;
  for (int p = 0; p < cfg.pole_count; ++p) {
    const double x = rng.uniform(cfg.extent_min.x() + 1.0, cfg.extent_max.x() - 1.0);
    const double y = rng.uniform(cfg.extent_min.y() + 1.0, cfg.extent_max.y() - 1.0);
    const int samples = std::max(1, int(std::round(cfg.pole_height_m / cfg.pole_sample_spacing_m)));
    for (int s = 0; s <= samples; ++s) {
      const double z = cfg.ground_z_m + cfg.pole_height_m * double(s) / samples;
      Eigen::Vector3d q = detail::clamp_to_box({x, y, z}, cfg.extent_min, cfg.extent_max);
      scene.scatterers.push_back(
          {q.cast<float>(), static_cast<float>(cfg.pole_rcs), ClassLabel::kPole});
    }
    pole_tops.push_back(
        detail::clamp_to_box({x, y, cfg.ground_z_m + cfg.pole_height_m}, cfg.extent_min,
                             cfg.extent_max));
  }

  if (cfg.wire_count > 0) {
    // Chain poles left to right; wire w spans consecutive pair (w mod n-1),
    // with a small vertical offset once every pair is used.
    std::sort(pole_tops.begin(), pole_tops.end(),
              [](const auto& a, const auto& b) { return a.x() < b.x(); });
    const int pairs = static_cast<int>(pole_tops.size()) - 1;
    for (int w = 0; w < cfg.wire_count; ++w) {
      const Eigen::Vector3d& a = pole_tops[w % pairs];
      const Eigen::Vector3d& b = pole_tops[w % pairs + 1];
      const double drop = 0.3 * (w / pairs);
      const double span_len = (b - a).norm();
      const double sag = cfg.wire_sag_fraction * span_len;
      const int samples = std::max(2, static_cast<int>(span_len / cfg.wire_sample_spacing_m));
      for (int s = 0; s <= samples; ++s) {
        const double t = static_cast<double>(s) / samples;
        Eigen::Vector3d p = a + t * (b - a);
        p.z() -= drop + sag * 4.0 * t * (1.0 - t);
        p = detail::clamp_to_box(p, cfg.extent_min, cfg.extent_max);
        scene.scatterers.push_back(
            {p.cast<float>(), static_cast<float>(cfg.wire_rcs), ClassLabel::kWire});
      }
    }
  }

  return scene;
}

// Smooth forward path with a bounded yaw-rate random walk. A stationary
// config (speed 0) holds both position and attitude.
inline std::vector<PoseSE3> generate_trajectory(const TrajectoryConfig& cfg, uint64_t seed) {
  if (cfg.frame_count < 1) throw ConfigError("trajectory: frame_count must be >= 1");
  if (cfg.frame_period_s <= 0.0) throw ConfigError("trajectory: frame period must be positive");

  std::vector<PoseSE3> poses;
  poses.reserve(cfg.frame_count);
  Rng rng(seed);
  Eigen::Vector3d position = cfg.start;
  double yaw = cfg.start_yaw_rad;

  for (int i = 0; i < cfg.frame_count; ++i) {
    PoseSE3 pose;
    pose.rotation = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    pose.translation = position;
    pose.timestamp = i * cfg.frame_period_s;
    poses.push_back(pose);

    if (cfg.speed_mps > 0.0) {
      const double step = cfg.speed_mps * cfg.frame_period_s;
      position += pose.rotation * Eigen::Vector3d{step, 0.0, 0.0};
      const double rate = std::clamp(rng.normal(0.0, cfg.yaw_noise_rad_s), -cfg.yaw_rate_max_rad_s,
                                     cfg.yaw_rate_max_rad_s);
      yaw += rate * cfg.frame_period_s;
    }
  }
  return poses;
}

// Samples the scene's scatterers from a pose: transform into the sensor
// frame, apply per-point position jitter, keep what falls inside the
// frustum. Labels pass through. An empty return is legal.
inline SemanticPointCloud render_lidar(const Scene& scene, const PoseSE3& pose,
                                       const FovConfig& fov, uint64_t seed,
                                       double jitter_sigma_m = 0.0) {
  SemanticPointCloud cloud;
  for (std::size_t i = 0; i < scene.scatterers.size(); ++i) {
    const Scatterer& s = scene.scatterers[i];
    Eigen::Vector3d p = pose.to_sensor(s.position.cast<double>());
    if (jitter_sigma_m > 0.0) {
      p.x() += jitter_sigma_m * hashed_normal(seed, i * 3 + 0);
      p.y() += jitter_sigma_m * hashed_normal(seed, i * 3 + 1);
      p.z() += jitter_sigma_m * hashed_normal(seed, i * 3 + 2);
    }
    if (fov.contains(p)) cloud.push_back(p.cast<float>(), s.label);
  }
  return cloud;
}

}  // namespace radsem
