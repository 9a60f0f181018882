#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <string>
#include <vector>

namespace gnepmpc {

using SpMat = Eigen::SparseMatrix<double>;

/// Mixed-integer quadratic program in solver form:
///
///   min  1/2 z'Hz + f'z + obj_const
///   s.t. A_eq z  = b_eq
///        A_in z <= b_in
///        lb <= z <= ub
///        z_i in {0,1}           for i in binary_idx
///        at most one nonzero    per SOS1 group (groups index binaries only)
///
/// H must be symmetric PSD. Infinite bounds are allowed.
struct Miqp {
  SpMat H;
  Eigen::VectorXd f;
  SpMat A_eq;
  Eigen::VectorXd b_eq;
  SpMat A_in;
  Eigen::VectorXd b_in;
  Eigen::VectorXd lb, ub;
  std::vector<int> binary_idx;
  std::vector<std::vector<int>> sos1_groups;
  double obj_const = 0.0;

  int num_vars() const { return static_cast<int>(f.size()); }
  int num_eq() const { return static_cast<int>(b_eq.size()); }
  int num_in() const { return static_cast<int>(b_in.size()); }

  /// Objective value at a point (includes obj_const).
  double objective_at(const Eigen::VectorXd& z) const;

  /// Max violation over equality rows, inequality rows and bounds.
  double max_violation(const Eigen::VectorXd& z) const;

  /// Shape/bound/index consistency; throws std::invalid_argument on defects.
  /// With check_psd, additionally verifies the smallest eigenvalue of the
  /// symmetrized H is >= -1e-9 (factorization-based for large n).
  void validate(bool check_psd = false) const;
};

enum class SolveStatus {
  Optimal,
  FeasibleIncumbent,  // search stopped early but an integral solution is at hand
  Infeasible,
  NodeLimit,          // limit hit with no incumbent
  NumericalError,
};

const char* to_string(SolveStatus s);

struct SolveStats {
  long nodes_explored = 0;
  long qp_iterations = 0;
  double wall_time_s = 0.0;
  bool hit_node_limit = false;
  bool hit_time_limit = false;
};

struct MiqpSolution {
  Eigen::VectorXd z;
  double objective = 0.0;
  double best_bound = -std::numeric_limits<double>::infinity();
  SolveStatus status = SolveStatus::NumericalError;
  SolveStats stats;
};

struct SolverOptions {
  double integrality_tol = 1e-5;
  double rel_gap_tol = 1e-4;
  long node_limit = 50000;
  double time_limit_s = std::numeric_limits<double>::infinity();
  enum class Branching { MostFractional, Sos1Priority };
  enum class NodeOrder { BestBound, DepthFirst };
  Branching branching = Branching::Sos1Priority;
  NodeOrder node_order = NodeOrder::BestBound;
  bool record_tree = false;  // keep per-node bound/incumbent series (tests)

  void validate() const;  // all tolerances must be positive
};

/// Plain-text instance dump for offline reproduction. One section each for
/// H triplets, f, equality rows, inequality rows, bounds, binaries and SOS1
/// groups. parse_miqp reads the same format back.
std::string dump_miqp(const Miqp& p);
Miqp parse_miqp(const std::string& text);

}  // namespace gnepmpc
