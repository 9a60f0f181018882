#pragma once

#include "gnepmpc/miqp.hpp"
#include "gnepmpc/qp_solver.hpp"

namespace gnepmpc {

// Shared between the public QP entry points and the branch-and-bound search.
// Aggressive mode enables bound tightening that invalidates dual recovery;
// B&B only consumes primal values and objectives.
struct ReducedSolve {
  QpStatus status = QpStatus::NumericalError;
  Eigen::VectorXd z, y_eq, lam_in;
  double objective = 0.0;
  int iterations = 0;
  double res_primal = 0.0, res_dual = 0.0, mu = 0.0;
};

ReducedSolve solve_reduced(const Miqp& p, const Eigen::VectorXd& lb,
                           const Eigen::VectorXd& ub, bool aggressive,
                           const QpOptions& opt);

}  // namespace gnepmpc
