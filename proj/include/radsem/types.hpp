#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace radsem {

// Errors that map to distinct CLI exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Semantic classes. Codes are ordered by rarity (rarer = larger) so that
// greyscale dilation with a max filter grows thin structures instead of
// losing them; the ordinal values are part of every file format.
enum class ClassLabel : uint8_t {
  kFree = 0,
  kGround = 1,
  kTree = 2,
  kPole = 3,
  kWire = 4,
};

inline constexpr int kClassCount = 5;

inline const char* class_name(ClassLabel c) {
  switch (c) {
    case ClassLabel::kFree: return "free";
    case ClassLabel::kGround: return "ground";
    case ClassLabel::kTree: return "tree";
    case ClassLabel::kPole: return "pole";
    case ClassLabel::kWire: return "wire";
  }
  return "unknown";
}

inline ClassLabel class_from_code(unsigned code) {
  if (code >= kClassCount) throw DataError("class code out of range: " + std::to_string(code));
  return static_cast<ClassLabel>(code);
}

// N points with a class label each; labels.size() == points.size().
struct SemanticPointCloud {
  std::vector<Eigen::Vector3f> points;
  std::vector<ClassLabel> labels;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void push_back(const Eigen::Vector3f& p, ClassLabel label) {
    points.push_back(p);
    labels.push_back(label);
  }
};

// Rigid body pose. rotation maps sensor-frame vectors into the world frame;
// translation is the sensor origin in world coordinates.
struct PoseSE3 {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double timestamp = 0.0;

  bool is_orthonormal(double tol = 1e-9) const {
    const Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
    return err.cwiseAbs().maxCoeff() <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }

  Eigen::Vector3d to_world(const Eigen::Vector3d& p_sensor) const {
    return rotation * p_sensor + translation;
  }

  Eigen::Vector3d to_sensor(const Eigen::Vector3d& p_world) const {
    return rotation.transpose() * (p_world - translation);
  }
};

// Spherical sensing frustum shared by the lidar model, the radar cube
// extents, and the accumulation FOV filter.
struct FovConfig {
  double range_min_m = 4.0;
  double range_max_m = 40.0;
  double elevation_max_rad = 45.0 * M_PI / 180.0;  // symmetric +/-
  double azimuth_max_rad = 25.0 * M_PI / 180.0;    // symmetric +/-

  bool contains(const Eigen::Vector3d& p_sensor) const {
    const double r = p_sensor.norm();
    if (r < range_min_m || r > range_max_m) return false;
    const double el = std::asin(p_sensor.z() / r);
    if (std::abs(el) > elevation_max_rad) return false;
    const double az = std::atan2(p_sensor.y(), p_sensor.x());
    return std::abs(az) <= azimuth_max_rad;
  }
};

inline Eigen::Vector3d spherical_to_cartesian(double range, double elevation, double azimuth) {
  return {range * std::cos(elevation) * std::cos(azimuth),
          range * std::cos(elevation) * std::sin(azimuth),
          range * std::sin(elevation)};
}

}  // namespace radsem
