#pragma once

#include <Eigen/Core>

namespace gnepmpc {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;
using Mat52 = Eigen::Matrix<double, 5, 2>;

/// Planner state of one vehicle: longitudinal position/velocity/acceleration,
/// lane position (continuous, lane units) and lane change rate.
struct AgentState {
  double s = 0.0;
  double s_dot = 0.0;
  double a = 0.0;
  double l = 0.0;
  double l_dot = 0.0;

  Vec5 vec() const {
    Vec5 v;
    v << s, s_dot, a, l, l_dot;
    return v;
  }
  static AgentState from_vec(const Vec5& v) { return {v(0), v(1), v(2), v(3), v(4)}; }
  bool finite() const;
};

/// Planner control: acceleration command and integer lane command.
struct AgentControl {
  double u_a = 0.0;
  int u_l = 0;
};

/// Continuous-time LTI planner model. Row 3 carries the first-order
/// powertrain lag (time constant tau); rows 4-5 the second-order damped
/// lateral response to the lane command.
struct ContinuousLti {
  Mat5 A = Mat5::Zero();
  Mat52 B = Mat52::Zero();
  double tau = 0.0, k_l = 0.0, omega_n = 0.0, zeta = 0.0;
};

struct DiscreteLti {
  Mat5 A_d = Mat5::Identity();
  Mat52 B_d = Mat52::Zero();
  double dt = 0.0;
};

ContinuousLti build_continuous_model(double tau, double k_l, double omega_n, double zeta);

/// Exact zero-order-hold discretization via the augmented matrix exponential.
DiscreteLti discretize_zoh(const ContinuousLti& model, double dt);

AgentState propagate(const DiscreteLti& d, const AgentState& x, double u_a, double u_l);

}  // namespace gnepmpc
