#include "gnepmpc/vehicle_model.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <stdexcept>

namespace gnepmpc {

bool AgentState::finite() const {
  return std::isfinite(s) && std::isfinite(s_dot) && std::isfinite(a) && std::isfinite(l) &&
         std::isfinite(l_dot);
}

ContinuousLti build_continuous_model(double tau, double k_l, double omega_n, double zeta) {
  if (!(tau > 0.0)) throw std::invalid_argument("build_continuous_model: tau must be > 0");
  if (!(omega_n > 0.0)) throw std::invalid_argument("build_continuous_model: omega_n must be > 0");
  if (!(zeta > 0.0)) throw std::invalid_argument("build_continuous_model: zeta must be > 0");

  ContinuousLti m;
  m.tau = tau;
  m.k_l = k_l;
  m.omega_n = omega_n;
  m.zeta = zeta;
  m.A(0, 1) = 1.0;
  m.A(1, 2) = 1.0;
  m.A(2, 2) = -1.0 / tau;
  m.A(3, 4) = 1.0;
  m.A(4, 3) = -omega_n * omega_n;
  m.A(4, 4) = -2.0 * zeta * omega_n;
  m.B(2, 0) = 1.0 / tau;
  m.B(4, 1) = k_l * omega_n * omega_n;
  return m;
}

DiscreteLti discretize_zoh(const ContinuousLti& model, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("discretize_zoh: dt must be > 0");
  Eigen::Matrix<double, 7, 7> aug = Eigen::Matrix<double, 7, 7>::Zero();
  aug.topLeftCorner<5, 5>() = model.A;
  aug.topRightCorner<5, 2>() = model.B;
  Eigen::Matrix<double, 7, 7> e = (aug * dt).exp();
  DiscreteLti d;
  d.A_d = e.topLeftCorner<5, 5>();
  d.B_d = e.topRightCorner<5, 2>();
  d.dt = dt;
  return d;
}

AgentState propagate(const DiscreteLti& d, const AgentState& x, double u_a, double u_l) {
  Eigen::Vector2d u(u_a, u_l);
  return AgentState::from_vec(d.A_d * x.vec() + d.B_d * u);
}

}  // namespace gnepmpc
