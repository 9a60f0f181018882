#pragma once

#include "gnepmpc/miqp.hpp"
#include "gnepmpc/qp_solver.hpp"

#include <optional>

namespace gnepmpc {

/// Branch-and-bound over convex QP relaxations.
///
/// SOS1 groups are enforced as constraints (at most one nonzero member) and
/// exploited by the sos1-priority branching rule. An optional warm start
/// seeds the incumbent by fixing binaries to the hint's rounded values.
/// Deterministic: fixed instance + options give an identical solution vector
/// and node count.
MiqpSolution solve_miqp(const Miqp& p, const SolverOptions& opt = {},
                        const std::optional<Eigen::VectorXd>& warm_start = std::nullopt);

/// Exact reference: solves the QP for every SOS1-feasible binary assignment.
/// Refuses instances with more than 20 binaries.
MiqpSolution enumerate_oracle(const Miqp& p);

/// Diagnostic series recorded when SolverOptions::record_tree is set.
struct SearchTrace {
  std::vector<double> node_relax_obj;   // per explored node, in order
  std::vector<double> parent_bound;     // matching parent bound at solve time
  std::vector<double> incumbent_after;  // incumbent objective after the node
};

MiqpSolution solve_miqp_traced(const Miqp& p, const SolverOptions& opt, SearchTrace& trace,
                               const std::optional<Eigen::VectorXd>& warm_start = std::nullopt);

}  // namespace gnepmpc
