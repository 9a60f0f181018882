#pragma once

#include "gnepmpc/miqp.hpp"

namespace gnepmpc {

enum class QpStatus { Optimal, Infeasible, NumericalError };

struct QpSolution {
  Eigen::VectorXd z;
  Eigen::VectorXd y_eq;    // equality multipliers
  Eigen::VectorXd lam_in;  // inequality multipliers, >= 0
  double objective = 0.0;
  QpStatus status = QpStatus::NumericalError;
  double kkt_residual = 0.0;  // max of stationarity / primal / complementarity
  int iterations = 0;
};

struct QpOptions {
  int max_iters = 150;
  double tol_primal = 1e-10;  // scaled row residuals
  double tol_dual = 1e-10;
  double tol_comp = 1e-11;
  double feas_tol = 1e-7;  // phase-1 violation threshold for infeasibility
};

/// Convex QP solve (binary_idx / sos1_groups of the instance are ignored).
/// Primal-dual interior point on the presolved problem; returns a KKT point
/// with residuals <= ~1e-8 or an infeasibility certificate from a phase-1
/// elastic solve. Throws std::invalid_argument for structurally bad input
/// (lb > ub is reported as Infeasible, not thrown).
QpSolution solve_qp(const Miqp& qp, const QpOptions& opt = {});

/// Same, with per-call bound overrides (used by branch-and-bound nodes).
QpSolution solve_qp_bounded(const Miqp& qp, const Eigen::VectorXd& lb,
                            const Eigen::VectorXd& ub, const QpOptions& opt = {});

}  // namespace gnepmpc
