#pragma once

#include "gnepmpc/rng.hpp"

#include <Eigen/Core>

namespace gnepmpc {

/// Closed-loop tracker state in plane coordinates.
struct TrackerState {
  double x = 0.0;
  double y = 0.0;
  double v = 0.0;
  double a = 0.0;
  double theta = 0.0;
};

struct TrackerParams {
  double tau = 0.4;        // powertrain lag (s)
  double wheelbase = 2.7;  // m; l_m = l_p = wheelbase / 2
  double k1 = 1.0, k2 = 0.8, k3 = 0.15, k4 = 1.0;  // steering gains
  double delta_min = -0.6, delta_max = 0.6;        // rad
  Eigen::Matrix<double, 5, 5> noise_cov = default_noise_cov();
  std::uint64_t seed = 0;

  double l_m() const { return 0.5 * wheelbase; }
  double l_p() const { return 0.5 * wheelbase; }

  static Eigen::Matrix<double, 5, 5> default_noise_cov() {
    Eigen::Matrix<double, 5, 5> s = Eigen::Matrix<double, 5, 5>::Zero();
    s.diagonal() << 1e-4, 1e-4, 1e-4, 1e-6, 1e-6;
    return s;
  }
};

/// PSD square root of the noise covariance (for drawing W = L * n).
Eigen::Matrix<double, 5, 5> noise_sqrt(const Eigen::Matrix<double, 5, 5>& cov);

/// One RK4 step of the kinematic bicycle with powertrain lag, followed by an
/// additive Gaussian draw from the stream (skipped when rng is null or the
/// covariance is zero). Speed is clamped at zero after the draw.
TrackerState tracker_step(const TrackerState& x, double u_a, double u_delta, double dt,
                          const TrackerParams& p, GaussianStream* rng,
                          const Eigen::Matrix<double, 5, 5>* noise_sqrt_cached = nullptr);

/// Steering law: delta = k1 * phi_e + atan(k2 * l_e / (k3 * v + k4)),
/// saturated to [delta_min, delta_max]. phi_e is the heading error to the
/// road direction, l_e the lane-position error in lane units.
double steering_law(double phi_e, double l_e, double v, const TrackerParams& p);

/// Per-vehicle tracker owning its state and noise stream.
class VehicleTracker {
 public:
  VehicleTracker(const TrackerParams& p, const TrackerState& x0);
  void step(double u_a, double u_delta, double dt);
  const TrackerState& state() const { return x_; }
  const TrackerParams& params() const { return params_; }

 private:
  TrackerParams params_;
  TrackerState x_;
  GaussianStream rng_;
  Eigen::Matrix<double, 5, 5> noise_sqrt_;
  bool has_noise_ = false;
};

}  // namespace gnepmpc
