#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "radsem/diffusion.hpp"
#include "radsem/io.hpp"
#include "radsem/models.hpp"
#include "radsem/preprocess.hpp"
#include "radsem/radar.hpp"
#include "radsem/scene.hpp"
#include "radsem/supervision.hpp"

namespace radsem {

// One self-describing JSON config shared by every subcommand, one section
// per module. Any missing field takes its default; unknown keys are
// rejected so typos fail loudly.
struct RunConfig {
  SceneConfig scene;
  TrajectoryConfig trajectory;
  FovConfig fov;
  RadarConfig radar;
  CfarConfig cfar;
  GridSpec grid;
  double per_frame_top_percent = 1.0;
  double final_top_percent = 1.0;
  double lidar_jitter_sigma_m = 0.03;
  KernelConfig kernel;
  NoiseSchedule schedule;
  Stage1TrainConfig stage1;
  Stage2TrainConfig stage2;
  int stage2_hidden = 32;
  int stage2_fourier_features = 4;
  DistillConfig distill;

  PreprocessConfig preprocess_config() const {
    PreprocessConfig p;
    p.frame_count = trajectory.frame_count;
    p.per_frame_top_percent = per_frame_top_percent;
    p.final_top_percent = final_top_percent;
    p.grid = grid;
    p.fov = fov;
    return p;
  }
};

namespace cfgdetail {

using nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& section) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError("config: unknown key \"" + key + "\" in section " + section);
  }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void get_vec3(const json& j, const char* key, Eigen::Vector3d& out) {
  if (!j.contains(key)) return;
  const auto arr = j.at(key);
  if (!arr.is_array() || arr.size() != 3) throw ConfigError(std::string("config: ") + key + " must be [x,y,z]");
  for (int a = 0; a < 3; ++a) out[a] = arr[a].get<double>();
}

inline void get_dims(const json& j, const char* key, std::array<uint32_t, 3>& out) {
  if (!j.contains(key)) return;
  const auto arr = j.at(key);
  if (!arr.is_array() || arr.size() != 3) throw ConfigError(std::string("config: ") + key + " must hold 3 counts");
  for (int a = 0; a < 3; ++a) out[a] = arr[a].get<uint32_t>();
}

}  // namespace cfgdetail

inline RunConfig parse_config(const nlohmann::json& j) {
  using namespace cfgdetail;
  RunConfig cfg;
  check_keys(j,
             {"scene", "trajectory", "fov", "radar", "cfar", "grid", "preprocess", "lidar",
              "kernel", "schedule", "stage1", "stage2", "distill"},
             "(root)");

  if (j.contains("scene")) {
    const auto& s = j.at("scene");
    check_keys(s,
               {"extent_min", "extent_max", "ground_enabled", "ground_spacing_m",
                "ground_roughness_m", "ground_z_m", "ground_rcs", "tree_count",
                "scatterers_per_tree", "tree_radius_m", "tree_height_m", "tree_rcs", "pole_count",
                "pole_height_m", "pole_sample_spacing_m", "pole_rcs", "wire_count",
                "wire_sample_spacing_m", "wire_sag_fraction", "wire_rcs"},
               "scene");
    get_vec3(s, "extent_min", cfg.scene.extent_min);
    get_vec3(s, "extent_max", cfg.scene.extent_max);
    get(s, "ground_enabled", cfg.scene.ground_enabled);
    get(s, "ground_spacing_m", cfg.scene.ground_spacing_m);
    get(s, "ground_roughness_m", cfg.scene.ground_roughness_m);
    get(s, "ground_z_m", cfg.scene.ground_z_m);
    get(s, "ground_rcs", cfg.scene.ground_rcs);
    get(s, "tree_count", cfg.scene.tree_count);
    get(s, "scatterers_per_tree", cfg.scene.scatterers_per_tree);
    get(s, "tree_radius_m", cfg.scene.tree_radius_m);
    get(s, "tree_height_m", cfg.scene.tree_height_m);
    get(s, "tree_rcs", cfg.scene.tree_rcs);
    get(s, "pole_count", cfg.scene.pole_count);
    get(s, "pole_height_m", cfg.scene.pole_height_m);
    get(s, "pole_sample_spacing_m", cfg.scene.pole_sample_spacing_m);
    get(s, "pole_rcs", cfg.scene.pole_rcs);
    get(s, "wire_count", cfg.scene.wire_count);
    get(s, "wire_sample_spacing_m", cfg.scene.wire_sample_spacing_m);
    get(s, "wire_sag_fraction", cfg.scene.wire_sag_fraction);
    get(s, "wire_rcs", cfg.scene.wire_rcs);
  }

  if (j.contains("trajectory")) {
    const auto& t = j.at("trajectory");
    check_keys(t,
               {"frame_count", "frame_period_s", "speed_mps", "start", "start_yaw_rad",
                "yaw_rate_max_rad_s", "yaw_noise_rad_s"},
               "trajectory");
    get(t, "frame_count", cfg.trajectory.frame_count);
    get(t, "frame_period_s", cfg.trajectory.frame_period_s);
    get(t, "speed_mps", cfg.trajectory.speed_mps);
    get_vec3(t, "start", cfg.trajectory.start);
    get(t, "start_yaw_rad", cfg.trajectory.start_yaw_rad);
    get(t, "yaw_rate_max_rad_s", cfg.trajectory.yaw_rate_max_rad_s);
    get(t, "yaw_noise_rad_s", cfg.trajectory.yaw_noise_rad_s);
  }

  if (j.contains("fov")) {
    const auto& f = j.at("fov");
    check_keys(f, {"range_min_m", "range_max_m", "elevation_max_deg", "azimuth_max_deg"}, "fov");
    get(f, "range_min_m", cfg.fov.range_min_m);
    get(f, "range_max_m", cfg.fov.range_max_m);
    double deg;
    if (f.contains("elevation_max_deg")) {
      deg = f.at("elevation_max_deg").get<double>();
      cfg.fov.elevation_max_rad = deg * M_PI / 180.0;
    }
    if (f.contains("azimuth_max_deg")) {
      deg = f.at("azimuth_max_deg").get<double>();
      cfg.fov.azimuth_max_rad = deg * M_PI / 180.0;
    }
  }

  if (j.contains("radar")) {
    const auto& r = j.at("radar");
    check_keys(r,
               {"bandwidth_hz", "chirp_duration_s", "carrier_hz", "elements_azimuth",
                "elements_elevation", "element_spacing_m", "noise_floor", "dims",
                "kernel_truncation_mainlobes"},
               "radar");
    get(r, "bandwidth_hz", cfg.radar.bandwidth_hz);
    get(r, "chirp_duration_s", cfg.radar.chirp_duration_s);
    get(r, "carrier_hz", cfg.radar.carrier_hz);
    get(r, "elements_azimuth", cfg.radar.elements_azimuth);
    get(r, "elements_elevation", cfg.radar.elements_elevation);
    get(r, "element_spacing_m", cfg.radar.element_spacing_m);
    get(r, "noise_floor", cfg.radar.noise_floor);
    get_dims(r, "dims", cfg.radar.dims);
    get(r, "kernel_truncation_mainlobes", cfg.radar.kernel_truncation_mainlobes);
  }

  if (j.contains("cfar")) {
    const auto& c = j.at("cfar");
    check_keys(c, {"guard_cells", "training_cells", "pfa"}, "cfar");
    get(c, "guard_cells", cfg.cfar.guard_cells);
    get(c, "training_cells", cfg.cfar.training_cells);
    get(c, "pfa", cfg.cfar.pfa);
  }

  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    check_keys(g, {"dims", "min", "max"}, "grid");
    get_dims(g, "dims", cfg.grid.dims);
    get_vec3(g, "min", cfg.grid.min_m);
    get_vec3(g, "max", cfg.grid.max_m);
  }

  if (j.contains("preprocess")) {
    const auto& p = j.at("preprocess");
    check_keys(p, {"per_frame_top_percent", "final_top_percent"}, "preprocess");
    get(p, "per_frame_top_percent", cfg.per_frame_top_percent);
    get(p, "final_top_percent", cfg.final_top_percent);
  }

  if (j.contains("lidar")) {
    const auto& l = j.at("lidar");
    check_keys(l, {"jitter_sigma_m"}, "lidar");
    get(l, "jitter_sigma_m", cfg.lidar_jitter_sigma_m);
  }

  if (j.contains("kernel")) {
    const auto& k = j.at("kernel");
    check_keys(k, {"size", "sigma_voxels"}, "kernel");
    get(k, "size", cfg.kernel.size);
    get(k, "sigma_voxels", cfg.kernel.sigma_voxels);
  }

  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    check_keys(s,
               {"sigma_min", "sigma_max", "sigma_data", "rho", "n_steps", "p_mean", "p_std"},
               "schedule");
    get(s, "sigma_min", cfg.schedule.sigma_min);
    get(s, "sigma_max", cfg.schedule.sigma_max);
    get(s, "sigma_data", cfg.schedule.sigma_data);
    get(s, "rho", cfg.schedule.rho);
    get(s, "n_steps", cfg.schedule.n_steps);
    get(s, "p_mean", cfg.schedule.p_mean);
    get(s, "p_std", cfg.schedule.p_std);
  }

  if (j.contains("stage1")) {
    const auto& s = j.at("stage1");
    check_keys(s, {"epochs", "learning_rate", "class_weights"}, "stage1");
    get(s, "epochs", cfg.stage1.epochs);
    get(s, "learning_rate", cfg.stage1.learning_rate);
    get(s, "class_weights", cfg.stage1.class_weights);
  }

  if (j.contains("stage2")) {
    const auto& s = j.at("stage2");
    check_keys(s, {"steps", "learning_rate", "class_weights", "hidden", "fourier_features"},
               "stage2");
    get(s, "steps", cfg.stage2.steps);
    get(s, "learning_rate", cfg.stage2.learning_rate);
    get(s, "class_weights", cfg.stage2.class_weights);
    get(s, "hidden", cfg.stage2_hidden);
    get(s, "fourier_features", cfg.stage2_fourier_features);
  }

  if (j.contains("distill")) {
    const auto& d = j.at("distill");
    check_keys(d, {"steps", "learning_rate", "ema_decay"}, "distill");
    get(d, "steps", cfg.distill.steps);
    get(d, "learning_rate", cfg.distill.learning_rate);
    get(d, "ema_decay", cfg.distill.ema_decay);
  }

  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(j);
}

// Canonical serialization of the effective config; nlohmann orders object
// keys, so the dump (and therefore the hash) is stable.
inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["scene"] = {{"extent_min", {c.scene.extent_min.x(), c.scene.extent_min.y(), c.scene.extent_min.z()}},
                {"extent_max", {c.scene.extent_max.x(), c.scene.extent_max.y(), c.scene.extent_max.z()}},
                {"ground_enabled", c.scene.ground_enabled},
                {"ground_spacing_m", c.scene.ground_spacing_m},
                {"ground_roughness_m", c.scene.ground_roughness_m},
                {"ground_z_m", c.scene.ground_z_m},
                {"ground_rcs", c.scene.ground_rcs},
                {"tree_count", c.scene.tree_count},
                {"scatterers_per_tree", c.scene.scatterers_per_tree},
                {"tree_radius_m", c.scene.tree_radius_m},
                {"tree_height_m", c.scene.tree_height_m},
                {"tree_rcs", c.scene.tree_rcs},
                {"pole_count", c.scene.pole_count},
                {"pole_height_m", c.scene.pole_height_m},
                {"pole_sample_spacing_m", c.scene.pole_sample_spacing_m},
                {"pole_rcs", c.scene.pole_rcs},
                {"wire_count", c.scene.wire_count},
                {"wire_sample_spacing_m", c.scene.wire_sample_spacing_m},
                {"wire_sag_fraction", c.scene.wire_sag_fraction},
                {"wire_rcs", c.scene.wire_rcs}};
  j["trajectory"] = {{"frame_count", c.trajectory.frame_count},
                     {"frame_period_s", c.trajectory.frame_period_s},
                     {"speed_mps", c.trajectory.speed_mps},
                     {"start", {c.trajectory.start.x(), c.trajectory.start.y(), c.trajectory.start.z()}},
                     {"start_yaw_rad", c.trajectory.start_yaw_rad},
                     {"yaw_rate_max_rad_s", c.trajectory.yaw_rate_max_rad_s},
                     {"yaw_noise_rad_s", c.trajectory.yaw_noise_rad_s}};
  j["fov"] = {{"range_min_m", c.fov.range_min_m},
              {"range_max_m", c.fov.range_max_m},
              {"elevation_max_deg", c.fov.elevation_max_rad * 180.0 / M_PI},
              {"azimuth_max_deg", c.fov.azimuth_max_rad * 180.0 / M_PI}};
  j["radar"] = {{"bandwidth_hz", c.radar.bandwidth_hz},
                {"chirp_duration_s", c.radar.chirp_duration_s},
                {"carrier_hz", c.radar.carrier_hz},
                {"elements_azimuth", c.radar.elements_azimuth},
                {"elements_elevation", c.radar.elements_elevation},
                {"element_spacing_m", c.radar.element_spacing_m},
                {"noise_floor", c.radar.noise_floor},
                {"dims", {c.radar.dims[0], c.radar.dims[1], c.radar.dims[2]}},
                {"kernel_truncation_mainlobes", c.radar.kernel_truncation_mainlobes}};
  j["cfar"] = {{"guard_cells", c.cfar.guard_cells},
               {"training_cells", c.cfar.training_cells},
               {"pfa", c.cfar.pfa}};
  j["grid"] = {{"dims", {c.grid.dims[0], c.grid.dims[1], c.grid.dims[2]}},
               {"min", {c.grid.min_m.x(), c.grid.min_m.y(), c.grid.min_m.z()}},
               {"max", {c.grid.max_m.x(), c.grid.max_m.y(), c.grid.max_m.z()}}};
  j["preprocess"] = {{"per_frame_top_percent", c.per_frame_top_percent},
                     {"final_top_percent", c.final_top_percent}};
  j["lidar"] = {{"jitter_sigma_m", c.lidar_jitter_sigma_m}};
  j["kernel"] = {{"size", c.kernel.size}, {"sigma_voxels", c.kernel.sigma_voxels}};
  j["schedule"] = {{"sigma_min", c.schedule.sigma_min}, {"sigma_max", c.schedule.sigma_max},
                   {"sigma_data", c.schedule.sigma_data}, {"rho", c.schedule.rho},
                   {"n_steps", c.schedule.n_steps},       {"p_mean", c.schedule.p_mean},
                   {"p_std", c.schedule.p_std}};
  j["stage1"] = {{"epochs", c.stage1.epochs}, {"learning_rate", c.stage1.learning_rate}};
  j["stage2"] = {{"steps", c.stage2.steps},
                 {"learning_rate", c.stage2.learning_rate},
                 {"hidden", c.stage2_hidden},
                 {"fourier_features", c.stage2_fourier_features}};
  j["distill"] = {{"steps", c.distill.steps},
                  {"learning_rate", c.distill.learning_rate},
                  {"ema_decay", c.distill.ema_decay}};
  return j;
}

inline uint64_t config_hash(const RunConfig& c) { return fnv1a(config_to_json(c).dump()); }

}  // namespace radsem
