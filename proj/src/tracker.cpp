#include "gnepmpc/tracker.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gnepmpc {

namespace {

using Vec5d = Eigen::Matrix<double, 5, 1>;

Vec5d dynamics(const Vec5d& x, double u_a, double u_delta, const TrackerParams& p) {
  const double v = x(2), a = x(3), theta = x(4);
  const double beta = std::atan(p.l_m() / (p.l_p() + p.l_m()) * std::tan(u_delta));
  Vec5d dx;
  dx(0) = v * std::cos(theta + beta);
  dx(1) = v * std::sin(theta + beta);
  dx(2) = a;
  dx(3) = (u_a - a) / p.tau;
  dx(4) = (v / p.l_m()) * std::sin(beta);
  return dx;
}

}  // namespace

Eigen::Matrix<double, 5, 5> noise_sqrt(const Eigen::Matrix<double, 5, 5>& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 5, 5>> es(cov);
  if (es.eigenvalues().minCoeff() < -1e-10)
    throw std::invalid_argument("tracker: noise covariance must be positive semidefinite");
  Eigen::Matrix<double, 5, 1> d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

TrackerState tracker_step(const TrackerState& x, double u_a, double u_delta, double dt,
                          const TrackerParams& p, GaussianStream* rng,
                          const Eigen::Matrix<double, 5, 5>* noise_sqrt_cached) {
  if (!(dt > 0.0)) throw std::invalid_argument("tracker_step: dt must be > 0");
  if (!std::isfinite(x.x) || !std::isfinite(x.y) || !std::isfinite(x.v) ||
      !std::isfinite(x.a) || !std::isfinite(x.theta) || !std::isfinite(u_a) ||
      !std::isfinite(u_delta))
    throw std::invalid_argument("tracker_step: non-finite input");

  Vec5d z;
  z << x.x, x.y, x.v, x.a, x.theta;
  const Vec5d k1 = dynamics(z, u_a, u_delta, p);
  const Vec5d k2 = dynamics(z + 0.5 * dt * k1, u_a, u_delta, p);
  const Vec5d k3 = dynamics(z + 0.5 * dt * k2, u_a, u_delta, p);
  const Vec5d k4 = dynamics(z + dt * k3, u_a, u_delta, p);
  Vec5d zn = z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  if (rng != nullptr && !p.noise_cov.isZero(0.0)) {
    Eigen::Matrix<double, 5, 5> L =
        noise_sqrt_cached ? *noise_sqrt_cached : noise_sqrt(p.noise_cov);
    Vec5d n;
    for (int i = 0; i < 5; ++i) n(i) = rng->next();
    zn += L * n;
  }
  zn(2) = std::max(0.0, zn(2));  // no reversing
  return {zn(0), zn(1), zn(2), zn(3), zn(4)};
}

double steering_law(double phi_e, double l_e, double v, const TrackerParams& p) {
  if (v < 0.0) throw std::invalid_argument("steering_law: v must be >= 0");
  const double denom = p.k3 * v + p.k4;
  if (denom <= 0.0)
    throw std::invalid_argument("steering_law: k3*v + k4 must be positive (k4 > 0)");
  const double delta = p.k1 * phi_e + std::atan(p.k2 * l_e / denom);
  return std::clamp(delta, p.delta_min, p.delta_max);
}

VehicleTracker::VehicleTracker(const TrackerParams& p, const TrackerState& x0)
    : params_(p), x_(x0), rng_(p.seed) {
  has_noise_ = !p.noise_cov.isZero(0.0);
  noise_sqrt_ = has_noise_ ? noise_sqrt(p.noise_cov) : Eigen::Matrix<double, 5, 5>::Zero();
}

void VehicleTracker::step(double u_a, double u_delta, double dt) {
  x_ = tracker_step(x_, u_a, u_delta, dt, params_, has_noise_ ? &rng_ : nullptr, &noise_sqrt_);
}

}  // namespace gnepmpc
