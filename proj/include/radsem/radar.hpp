#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "radsem/parallel.hpp"
#include "radsem/rng.hpp"
#include "radsem/scene.hpp"
#include "radsem/types.hpp"

namespace radsem {

inline constexpr double kSpeedOfLight = 299792458.0;

// FMCW + virtual-array front end parameters. Cube dims default to the
// trimmed 166 x 94 x 177 range/elevation/azimuth grid; the spherical
// extents double as the sensing FOV.
struct RadarConfig {
  double bandwidth_hz = 1.0e9;
  double chirp_duration_s = 40e-6;
  double carrier_hz = 77e9;
  int elements_azimuth = 16;    // virtual array size, azimuth axis
  int elements_elevation = 12;  // virtual array size, elevation axis
  double element_spacing_m = 0.0;  // <= 0 selects half-wavelength spacing
  double noise_floor = 1e-8;       // mean linear noise power per bin
  std::array<uint32_t, 3> dims{166, 94, 177};  // (R, E, A)
  FovConfig fov;
  double kernel_truncation_mainlobes = 4.0;

  double wavelength_m() const { return kSpeedOfLight / carrier_hz; }
  double spacing_m() const { return element_spacing_m > 0.0 ? element_spacing_m : 0.5 * wavelength_m(); }

  uint64_t bin_count() const { return uint64_t(dims[0]) * dims[1] * dims[2]; }

  double range_step() const { return (fov.range_max_m - fov.range_min_m) / dims[0]; }
  double elevation_step() const { return 2.0 * fov.elevation_max_rad / dims[1]; }
  double azimuth_step() const { return 2.0 * fov.azimuth_max_rad / dims[2]; }

  double range_of(uint32_t r) const { return fov.range_min_m + (r + 0.5) * range_step(); }
  double elevation_of(uint32_t e) const { return -fov.elevation_max_rad + (e + 0.5) * elevation_step(); }
  double azimuth_of(uint32_t a) const { return -fov.azimuth_max_rad + (a + 0.5) * azimuth_step(); }
};

enum class AngularAxis { kAzimuth, kElevation };

inline double range_resolution(const RadarConfig& cfg) {
  if (cfg.bandwidth_hz <= 0.0) throw ConfigError("radar: bandwidth must be positive");
  return kSpeedOfLight / (2.0 * cfg.bandwidth_hz);
}

inline double angular_resolution(const RadarConfig& cfg, AngularAxis axis) {
  const int n = axis == AngularAxis::kAzimuth ? cfg.elements_azimuth : cfg.elements_elevation;
  if (n < 1) throw ConfigError("radar: virtual array size must be >= 1");
  if (cfg.spacing_m() <= 0.0) throw ConfigError("radar: element spacing must be positive");
  return cfg.wavelength_m() / (n * cfg.spacing_m());
}

// Dense range x elevation x azimuth grid of echo power for one frame.
// Layout: power[(r * E + e) * A + a].
struct SphericalCube {
  RadarConfig config;
  uint32_t frame_index = 0;
  std::vector<float> power;

  std::size_t linear(uint32_t r, uint32_t e, uint32_t a) const {
    return (std::size_t(r) * config.dims[1] + e) * config.dims[2] + a;
  }
  float at(uint32_t r, uint32_t e, uint32_t a) const { return power[linear(r, e, a)]; }
  float& at(uint32_t r, uint32_t e, uint32_t a) { return power[linear(r, e, a)]; }
};

namespace detail {

// |sin(N psi/2) / (N sin(psi/2))| for a uniform N-element array, evaluated
// in sine space: psi = 2 pi (d / lambda) * (sin(theta) - sin(theta0)).
inline double array_factor(int n, double d_over_lambda, double delta_u) {
  const double half_psi = M_PI * d_over_lambda * delta_u;
  const double denom = std::sin(half_psi);
  if (std::abs(denom) < 1e-12) return 1.0;
  return std::abs(std::sin(n * half_psi) / (n * denom));
}

inline double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(M_PI * x) / (M_PI * x);
}

}  // namespace detail

// Synthesizes the spatial power spectrum of a scene directly: each in-FOV
// scatterer contributes a separable response, squared Dirichlet array
// pattern in azimuth and elevation (evaluated in sine space) and a squared
// sinc in range, scaled by rcs / r^4. Responses are truncated at
// kernel_truncation_mainlobes null-to-null widths per axis. Exponential
// noise power with mean noise_floor is added to every bin from a per-bin
// hash, so the cube is byte-identical for any thread count. Threads split
// the azimuth axis into disjoint slabs; every bin is written by exactly one
// thread and per-bin contributions are applied in scatterer order.
inline SphericalCube synthesize_spherical_cube(const Scene& scene, const PoseSE3& pose,
                                               const RadarConfig& cfg, uint64_t seed,
                                               unsigned threads = 1) {
  SphericalCube cube;
  cube.config = cfg;
  cube.power.assign(cfg.bin_count(), 0.0f);

  const double res_r = range_resolution(cfg);
  const double d_over_lambda = cfg.spacing_m() / cfg.wavelength_m();
  const double trunc = cfg.kernel_truncation_mainlobes;
  const double null_u_az = cfg.wavelength_m() / (cfg.elements_azimuth * cfg.spacing_m());
  const double null_u_el = cfg.wavelength_m() / (cfg.elements_elevation * cfg.spacing_m());

  struct Splat {
    uint32_t r_lo, r_hi, e_lo, e_hi, a_lo, a_hi;
    std::vector<float> wr, we, wa;
    double amplitude;
  };

  // Per-axis bin center tables.
  const uint32_t R = cfg.dims[0], E = cfg.dims[1], A = cfg.dims[2];
  std::vector<double> sin_el(E), sin_az(A);
  for (uint32_t e = 0; e < E; ++e) sin_el[e] = std::sin(cfg.elevation_of(e));
  for (uint32_t a = 0; a < A; ++a) sin_az[a] = std::sin(cfg.azimuth_of(a));

  auto window = [](const std::vector<double>& sins, double center, double halfwidth, uint32_t& lo,
                   uint32_t& hi) {
    auto first = std::lower_bound(sins.begin(), sins.end(), center - halfwidth);
    auto last = std::upper_bound(sins.begin(), sins.end(), center + halfwidth);
    lo = static_cast<uint32_t>(first - sins.begin());
    hi = static_cast<uint32_t>(last - sins.begin());  // exclusive
  };

  std::vector<Splat> splats;
  splats.reserve(scene.scatterers.size());
  for (const Scatterer& s : scene.scatterers) {
    const Eigen::Vector3d p = pose.to_sensor(s.position.cast<double>());
    if (!cfg.fov.contains(p)) continue;
    const double r = p.norm();
    const double u_el = p.z() / r;
    const double u_az = std::sin(std::atan2(p.y(), p.x()));

    Splat sp;
    sp.amplitude = s.rcs / (r * r * r * r);

    const double r_half = trunc * res_r;
    const double r_lo_m = std::max(cfg.fov.range_min_m, r - r_half);
    const double r_hi_m = std::min(cfg.fov.range_max_m, r + r_half);
    sp.r_lo = static_cast<uint32_t>(
        std::clamp(std::floor((r_lo_m - cfg.fov.range_min_m) / cfg.range_step()), 0.0, double(R)));
    sp.r_hi = static_cast<uint32_t>(
        std::clamp(std::ceil((r_hi_m - cfg.fov.range_min_m) / cfg.range_step()), 0.0, double(R)));
    window(sin_el, u_el, trunc * null_u_el, sp.e_lo, sp.e_hi);
    window(sin_az, u_az, trunc * null_u_az, sp.a_lo, sp.a_hi);
    if (sp.r_lo >= sp.r_hi || sp.e_lo >= sp.e_hi || sp.a_lo >= sp.a_hi) continue;

    sp.wr.resize(sp.r_hi - sp.r_lo);
    for (uint32_t i = sp.r_lo; i < sp.r_hi; ++i) {
      const double w = detail::sinc((cfg.range_of(i) - r) / res_r);
      sp.wr[i - sp.r_lo] = static_cast<float>(w * w);
    }
    sp.we.resize(sp.e_hi - sp.e_lo);
    for (uint32_t j = sp.e_lo; j < sp.e_hi; ++j) {
      const double w = detail::array_factor(cfg.elements_elevation, d_over_lambda, sin_el[j] - u_el);
      sp.we[j - sp.e_lo] = static_cast<float>(w * w);
    }
    sp.wa.resize(sp.a_hi - sp.a_lo);
    for (uint32_t k = sp.a_lo; k < sp.a_hi; ++k) {
      const double w = detail::array_factor(cfg.elements_azimuth, d_over_lambda, sin_az[k] - u_az);
      sp.wa[k - sp.a_lo] = static_cast<float>(w * w);
    }
    splats.push_back(std::move(sp));
  }

  parallel_chunks(A, threads, [&](std::size_t a_begin, std::size_t a_end, unsigned) {
    for (const Splat& sp : splats) {
      const uint32_t a0 = std::max<uint32_t>(sp.a_lo, static_cast<uint32_t>(a_begin));
      const uint32_t a1 = std::min<uint32_t>(sp.a_hi, static_cast<uint32_t>(a_end));
      if (a0 >= a1) continue;
      for (uint32_t i = sp.r_lo; i < sp.r_hi; ++i) {
        const float wr = sp.wr[i - sp.r_lo];
        for (uint32_t j = sp.e_lo; j < sp.e_hi; ++j) {
          const float scale = static_cast<float>(sp.amplitude * wr * sp.we[j - sp.e_lo]);
          float* row = cube.power.data() + cube.linear(i, j, 0);
          for (uint32_t k = a0; k < a1; ++k) row[k] += scale * sp.wa[k - sp.a_lo];
        }
      }
    }
  });

  if (cfg.noise_floor > 0.0) {
    parallel_chunks(cube.power.size(), threads, [&](std::size_t begin, std::size_t end, unsigned) {
      for (std::size_t b = begin; b < end; ++b)
        cube.power[b] += static_cast<float>(hashed_exponential(seed, b, cfg.noise_floor));
    });
  }
  return cube;
}

struct CfarConfig {
  int guard_cells = 1;     // per axis, per side
  int training_cells = 2;  // per axis, per side
  double pfa = 1e-4;
};

struct CfarDetection {
  std::array<uint32_t, 3> bin;  // (r, e, a)
  float power;
};

// Cell-averaging CFAR over the full 3D cube. The training set is the box
// window of half-extent guard+training minus the guard box (which contains
// the cell under test); both boxes are clamped at the cube faces and the
// threshold factor alpha = T * (pfa^(-1/T) - 1) uses the clamped training
// count T. Box sums come from a summed-area table.
inline std::vector<CfarDetection> ca_cfar(const SphericalCube& cube, const CfarConfig& cfar,
                                          unsigned threads = 1) {
  const auto& dims = cube.config.dims;
  if (cfar.guard_cells < 0 || cfar.training_cells < 1) throw ConfigError("cfar: need guard >= 0, training >= 1");
  if (cfar.pfa <= 0.0 || cfar.pfa >= 1.0) throw ConfigError("cfar: pfa must be in (0,1)");
  const int w = cfar.guard_cells + cfar.training_cells;
  for (int a = 0; a < 3; ++a)
    if (2 * w + 1 > static_cast<int>(dims[a]))
      throw ConfigError("cfar: window larger than cube axis");

  const uint32_t R = dims[0], E = dims[1], A = dims[2];
  // Inclusive prefix sums with a zero border: sat has (R+1)(E+1)(A+1) cells.
  std::vector<double> sat((R + 1) * std::size_t(E + 1) * (A + 1), 0.0);
  const std::size_t sE = E + 1, sA = A + 1;
  auto sat_at = [&](std::size_t i, std::size_t j, std::size_t k) -> double& {
    return sat[(i * sE + j) * sA + k];
  };
  for (uint32_t i = 0; i < R; ++i)
    for (uint32_t j = 0; j < E; ++j)
      for (uint32_t k = 0; k < A; ++k)
        sat_at(i + 1, j + 1, k + 1) = double(cube.at(i, j, k)) + sat_at(i, j + 1, k + 1) +
                                      sat_at(i + 1, j, k + 1) + sat_at(i + 1, j + 1, k) -
                                      sat_at(i, j, k + 1) - sat_at(i, j + 1, k) -
                                      sat_at(i + 1, j, k) + sat_at(i, j, k);

  auto box_sum = [&](int r0, int r1, int e0, int e1, int a0, int a1) {  // inclusive bounds
    return sat_at(r1 + 1, e1 + 1, a1 + 1) - sat_at(r0, e1 + 1, a1 + 1) -
           sat_at(r1 + 1, e0, a1 + 1) - sat_at(r1 + 1, e1 + 1, a0) + sat_at(r0, e0, a1 + 1) +
           sat_at(r0, e1 + 1, a0) + sat_at(r1 + 1, e0, a0) - sat_at(r0, e0, a0);
  };

  std::vector<std::vector<CfarDetection>> per_chunk;
  const unsigned workers = std::max(1u, threads);
  per_chunk.resize(workers);
  parallel_chunks(R, workers, [&](std::size_t r_begin, std::size_t r_end, unsigned chunk) {
    auto& out = per_chunk[chunk];
    const int g = cfar.guard_cells;
    for (uint32_t r = r_begin; r < r_end; ++r) {
      const int wr0 = std::max(0, int(r) - w), wr1 = std::min(int(R) - 1, int(r) + w);
      const int gr0 = std::max(0, int(r) - g), gr1 = std::min(int(R) - 1, int(r) + g);
      for (uint32_t e = 0; e < E; ++e) {
        const int we0 = std::max(0, int(e) - w), we1 = std::min(int(E) - 1, int(e) + w);
        const int ge0 = std::max(0, int(e) - g), ge1 = std::min(int(E) - 1, int(e) + g);
        for (uint32_t a = 0; a < A; ++a) {
          const int wa0 = std::max(0, int(a) - w), wa1 = std::min(int(A) - 1, int(a) + w);
          const int ga0 = std::max(0, int(a) - g), ga1 = std::min(int(A) - 1, int(a) + g);
          const double win_cells = double(wr1 - wr0 + 1) * (we1 - we0 + 1) * (wa1 - wa0 + 1);
          const double guard_cells = double(gr1 - gr0 + 1) * (ge1 - ge0 + 1) * (ga1 - ga0 + 1);
          const double t_count = win_cells - guard_cells;
          const double train_sum = box_sum(wr0, wr1, we0, we1, wa0, wa1) -
                                   box_sum(gr0, gr1, ge0, ge1, ga0, ga1);
          const double alpha = t_count * (std::pow(cfar.pfa, -1.0 / t_count) - 1.0);
          const double p = cube.at(r, e, a);
          if (p * t_count > alpha * train_sum) out.push_back({{r, e, a}, cube.at(r, e, a)});
        }
      }
    }
  });

  std::vector<CfarDetection> detections;
  for (auto& chunk : per_chunk)
    detections.insert(detections.end(), chunk.begin(), chunk.end());
  return detections;
}

// Cartesian coordinates of spherical bin centres.
inline std::vector<Eigen::Vector3d> spherical_bins_to_points(
    std::span<const std::array<uint32_t, 3>> bins, const RadarConfig& cfg) {
  std::vector<Eigen::Vector3d> points;
  points.reserve(bins.size());
  for (const auto& b : bins) {
    if (b[0] >= cfg.dims[0] || b[1] >= cfg.dims[1] || b[2] >= cfg.dims[2])
      throw std::out_of_range("spherical_bins_to_points: bin outside cube dims");
    points.push_back(
        spherical_to_cartesian(cfg.range_of(b[0]), cfg.elevation_of(b[1]), cfg.azimuth_of(b[2])));
  }
  return points;
}

}  // namespace radsem
