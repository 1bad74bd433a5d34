#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "radsem/rng.hpp"
#include "radsem/types.hpp"

namespace radsem {

using FeatureMatrix = Eigen::MatrixXd;  // L x S diffusion state

// Continuous-time noise schedule: sigma range, data scale, rho spacing
// exponent, step count, and the log-normal parameters used to draw training
// noise levels.
struct NoiseSchedule {
  double sigma_min = 0.002;
  double sigma_max = 80.0;
  double sigma_data = 0.5;
  double rho = 7.0;
  int n_steps = 40;
  double p_mean = -1.2;
  double p_std = 1.2;

  void validate() const {
    if (sigma_min <= 0.0 || sigma_max <= sigma_min)
      throw ConfigError("schedule: need 0 < sigma_min < sigma_max");
    if (sigma_data <= 0.0 || rho <= 0.0) throw ConfigError("schedule: sigma_data and rho must be positive");
  }
};

// Scaling functions of the preconditioned denoiser
//   D(x_s; s) = c_skip(s) * x_s + c_out(s) * F(c_in(s) * x_s; c_noise(s)).
struct Preconditioning {
  double c_skip;
  double c_out;
  double c_in;
  double c_noise;
};

inline Preconditioning preconditioning(double sigma, double sigma_data) {
  if (sigma <= 0.0) throw std::invalid_argument("preconditioning: sigma must be positive");
  const double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
  return {d2 / (s2 + d2), sigma * sigma_data / std::sqrt(s2 + d2), 1.0 / std::sqrt(s2 + d2),
          0.25 * std::log(sigma)};
}

// Loss weight that equalizes the training loss across sigma; satisfies
// loss_weight(s) * c_out(s)^2 = 1.
inline double loss_weight(double sigma, double sigma_data) {
  const double s2 = sigma * sigma, d2 = sigma_data * sigma_data;
  return (s2 + d2) / (s2 * d2);
}

// Raw network interface. `x_scaled` is the c_in-scaled noisy state; the
// optional condition matrix has one row per state row. Implementations must
// be safe for concurrent read-only evaluation.
class DenoiserInterface {
 public:
  virtual ~DenoiserInterface() = default;
  virtual FeatureMatrix evaluate(const FeatureMatrix& x_scaled, double c_noise,
                                 const FeatureMatrix* condition) const = 0;
};

// Preconditioned denoiser output for a noisy state at level sigma.
// sigma == 0 is the identity (c_skip -> 1, c_out -> 0).
inline FeatureMatrix denoise(const DenoiserInterface& d, const FeatureMatrix& x_sigma,
                             double sigma, double sigma_data,
                             const FeatureMatrix* condition = nullptr) {
  if (sigma == 0.0) return x_sigma;
  const Preconditioning c = preconditioning(sigma, sigma_data);
  FeatureMatrix f = d.evaluate(c.c_in * x_sigma, c.c_noise, condition);
  if (f.rows() != x_sigma.rows() || f.cols() != x_sigma.cols())
    throw std::runtime_error("denoise: network output shape mismatch");
  return c.c_skip * x_sigma + c.c_out * f;
}

inline double sample_training_sigma(const NoiseSchedule& schedule, Rng& rng) {
  return std::exp(schedule.p_mean + schedule.p_std * rng.normal());
}

// Forward perturbation x + sigma * eps with entry order fixed (row-major)
// so a seeded Rng reproduces the same field.
inline FeatureMatrix perturb(const FeatureMatrix& x, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("perturb: sigma must be non-negative");
  FeatureMatrix out = x;
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) += sigma * rng.normal();
  return out;
}

// Training objective: loss_weight(sigma) * mean over entries of
// w_c[class] * (D(x_sigma) - x)^2.
inline double edm_loss(const DenoiserInterface& d, const FeatureMatrix& x, double sigma,
                       const FeatureMatrix* condition, std::span<const double> class_weights,
                       Rng& rng, double sigma_data) {
  if (static_cast<Eigen::Index>(class_weights.size()) != x.cols())
    throw std::invalid_argument("edm_loss: class weight length must equal S");
  for (double w : class_weights)
    if (w <= 0.0) throw std::invalid_argument("edm_loss: class weights must be positive");

  const FeatureMatrix x_sigma = perturb(x, sigma, rng);
  const FeatureMatrix x_hat = denoise(d, x_sigma, sigma, sigma_data, condition);
  double acc = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double e = x_hat(r, c) - x(r, c);
      acc += class_weights[c] * e * e;
    }
  return loss_weight(sigma, sigma_data) * acc / double(x.rows() * x.cols());
}

// rho-spaced descending sigma ladder with a terminal zero:
// sigma_i = (sigma_max^(1/rho) + i/(n-1) * (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho.
inline std::vector<double> step_schedule(const NoiseSchedule& schedule) {
  schedule.validate();
  if (schedule.n_steps < 2) throw ConfigError("step_schedule: need n_steps >= 2");
  const double a = std::pow(schedule.sigma_max, 1.0 / schedule.rho);
  const double b = std::pow(schedule.sigma_min, 1.0 / schedule.rho);
  std::vector<double> sigmas(schedule.n_steps + 1);
  for (int i = 0; i < schedule.n_steps; ++i) {
    const double t = double(i) / (schedule.n_steps - 1);
    sigmas[i] = std::pow(a + t * (b - a), schedule.rho);
  }
  sigmas.front() = schedule.sigma_max;
  sigmas[schedule.n_steps - 1] = schedule.sigma_min;
  sigmas.back() = 0.0;
  return sigmas;
}

// Deterministic probability-flow sampler, 2nd-order Heun steps. Starts from
// N(0, sigma_max^2 I) and integrates dx/dsigma = (x - D(x; sigma)) / sigma
// down the schedule; the final leg to sigma = 0 is plain Euler. Uses
// n_steps evaluations for the Euler legs plus one per correction (2n - 1
// total). `evaluations`, when given, receives the exact count.
inline FeatureMatrix heun_sample(const DenoiserInterface& d, const FeatureMatrix* condition,
                                 Eigen::Index rows, Eigen::Index cols,
                                 const NoiseSchedule& schedule, Rng& rng,
                                 std::size_t* evaluations = nullptr) {
  const std::vector<double> sigmas = step_schedule(schedule);
  FeatureMatrix x(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) x(r, c) = schedule.sigma_max * rng.normal();

  std::size_t evals = 0;
  for (std::size_t i = 0; i + 1 < sigmas.size(); ++i) {
    const double s_cur = sigmas[i], s_next = sigmas[i + 1];
    const FeatureMatrix slope = (x - denoise(d, x, s_cur, schedule.sigma_data, condition)) / s_cur;
    ++evals;
    FeatureMatrix x_next = x + (s_next - s_cur) * slope;
    if (s_next > 0.0) {
      const FeatureMatrix slope_next =
          (x_next - denoise(d, x_next, s_next, schedule.sigma_data, condition)) / s_next;
      ++evals;
      x_next = x + (s_next - s_cur) * 0.5 * (slope + slope_next);
    }
    x = std::move(x_next);
  }
  if (evaluations) *evaluations = evals;
  return x;
}

// Closed-form optimal denoiser for x ~ N(mu, s^2 I): the posterior mean
// (s^2 x_sigma + sigma^2 mu) / (s^2 + sigma^2), exposed through the raw
// interface by inverting the preconditioning. Verification oracle.
class GaussianOracleDenoiser final : public DenoiserInterface {
 public:
  GaussianOracleDenoiser(FeatureMatrix mu, double s, double sigma_data)
      : mu_(std::move(mu)), s2_(s * s), sigma_data_(sigma_data) {
    if (s < 0.0) throw std::invalid_argument("gaussian oracle: s must be >= 0");
  }

  FeatureMatrix evaluate(const FeatureMatrix& x_scaled, double c_noise,
                         const FeatureMatrix*) const override {
    const double sigma = std::exp(4.0 * c_noise);
    const Preconditioning c = preconditioning(sigma, sigma_data_);
    const FeatureMatrix x_sigma = x_scaled / c.c_in;
    const FeatureMatrix target = (s2_ * x_sigma + sigma * sigma * mu_) / (s2_ + sigma * sigma);
    return (target - c.c_skip * x_sigma) / c.c_out;
  }

 private:
  FeatureMatrix mu_;
  double s2_;
  double sigma_data_;
};

// Consistency-function scalings. The sigma_min offset makes
// f(x, sigma_min) = x hold exactly (c_skip -> 1, c_out -> 0 there).
inline Preconditioning consistency_preconditioning(double sigma, double sigma_min,
                                                   double sigma_data) {
  if (sigma <= 0.0) throw std::invalid_argument("consistency: sigma must be positive");
  const double d2 = sigma_data * sigma_data;
  const double off = sigma - sigma_min;
  return {d2 / (off * off + d2), sigma_data * off / std::sqrt(d2 + sigma * sigma),
          1.0 / std::sqrt(d2 + sigma * sigma), 0.25 * std::log(sigma)};
}

inline FeatureMatrix consistency_apply(const DenoiserInterface& f, const FeatureMatrix& x_sigma,
                                       double sigma, const NoiseSchedule& schedule,
                                       const FeatureMatrix* condition = nullptr) {
  const Preconditioning c =
      consistency_preconditioning(sigma, schedule.sigma_min, schedule.sigma_data);
  FeatureMatrix out = f.evaluate(c.c_in * x_sigma, c.c_noise, condition);
  return c.c_skip * x_sigma + c.c_out * out;
}

// One-evaluation generation: f applied to pure noise at sigma_max.
inline FeatureMatrix consistency_sample(const DenoiserInterface& f,
                                        const FeatureMatrix* condition, Eigen::Index rows,
                                        Eigen::Index cols, const NoiseSchedule& schedule, Rng& rng,
                                        std::size_t* evaluations = nullptr) {
  FeatureMatrix x(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) x(r, c) = schedule.sigma_max * rng.normal();
  if (evaluations) *evaluations = 1;
  return consistency_apply(f, x, schedule.sigma_max, schedule, condition);
}

}  // namespace radsem
