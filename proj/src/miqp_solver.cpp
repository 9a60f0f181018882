#include "gnepmpc/miqp_solver.hpp"
#include "gnepmpc/qp_internal.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace gnepmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFeasTol = 1e-6;

using Eigen::VectorXd;
using RowMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Node {
  double bound = -kInf;
  long id = 0;
  int depth = 0;
  VectorXd lb, ub;
};

struct NodeOrderCmp {
  // priority_queue pops the largest; invert so the smallest bound (then id) wins
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

// Instance with SOS1 groups linearized (sum over group <= 1); binaries are
// enforced through branching on this copy.
Miqp with_sos1_rows(const Miqp& p) {
  if (p.sos1_groups.empty()) return p;
  Miqp q = p;
  const int m0 = p.num_in();
  const int mg = static_cast<int>(p.sos1_groups.size());
  std::vector<Eigen::Triplet<double>> trips;
  for (int k = 0; k < p.A_in.outerSize(); ++k)
    for (SpMat::InnerIterator it(p.A_in, k); it; ++it)
      trips.emplace_back(it.row(), it.col(), it.value());
  Eigen::VectorXd b(m0 + mg);
  b.head(m0) = p.b_in;
  for (int g = 0; g < mg; ++g) {
    for (int i : p.sos1_groups[g]) trips.emplace_back(m0 + g, i, 1.0);
    b(m0 + g) = 1.0;
  }
  q.A_in.resize(m0 + mg, p.num_vars());
  q.A_in.setFromTriplets(trips.begin(), trips.end());
  q.b_in = b;
  return q;
}

bool integral_point(const Miqp& p, const VectorXd& z, double tol) {
  for (int b : p.binary_idx) {
    const double v = z(b);
    if (std::min(v, 1.0 - v) > tol) return false;
  }
  for (const auto& g : p.sos1_groups) {
    int nz = 0;
    for (int i : g)
      if (z(i) > 0.5) ++nz;
    if (nz > 1) return false;
  }
  return true;
}

bool incumbent_feasible(const Miqp& p, const VectorXd& z, double int_tol) {
  if (p.max_violation(z) > kFeasTol) return false;
  return integral_point(p, z, std::max(int_tol, 1e-5) /*solution invariant*/);
}

// Union-find over binary indices.
struct Dsu {
  std::vector<int> up;
  explicit Dsu(int n) : up(n) { std::iota(up.begin(), up.end(), 0); }
  int find(int x) {
    while (up[x] != x) x = up[x] = up[up[x]];
    return x;
  }
  void join(int a, int b) { up[find(a)] = find(b); }
};

// Attempts to complete a relaxed point to an integral one without moving the
// continuous part: snaps near-integral binaries, then enumerates the small
// connected components of fractional binaries against the rows they touch.
// Returns the completed point if every component admits a feasible
// assignment; std::nullopt otherwise.
std::optional<VectorXd> complete_binaries(const Miqp& p, const RowMat& AeR, const RowMat& AiR,
                                          const VectorXd& z_rel, const VectorXd& lo,
                                          const VectorXd& hi, double int_tol) {
  const int n = p.num_vars();
  std::vector<int> bin_pos(n, -1);
  for (int k = 0; k < static_cast<int>(p.binary_idx.size()); ++k)
    bin_pos[p.binary_idx[k]] = k;

  VectorXd cand = z_rel;
  std::vector<int> frac;
  for (int b : p.binary_idx) {
    const double v = cand(b);
    if (std::min(v, 1.0 - v) <= int_tol)
      cand(b) = std::round(v);
    else
      frac.push_back(b);
  }
  if (frac.empty()) return cand;
  if (static_cast<int>(frac.size()) > 64) return std::nullopt;

  std::vector<char> is_frac(n, 0);
  for (int b : frac) is_frac[b] = 1;

  Dsu dsu(n);
  auto join_row = [&](const RowMat& A, int r) {
    int first = -1;
    for (RowMat::InnerIterator it(A, r); it; ++it) {
      const int j = static_cast<int>(it.col());
      if (!is_frac[j]) continue;
      if (first < 0)
        first = j;
      else
        dsu.join(first, j);
    }
  };
  for (int r = 0; r < AeR.rows(); ++r) join_row(AeR, r);
  for (int r = 0; r < AiR.rows(); ++r) join_row(AiR, r);
  for (const auto& g : p.sos1_groups) {
    int first = -1;
    for (int i : g) {
      if (!is_frac[i]) continue;
      if (first < 0)
        first = i;
      else
        dsu.join(first, i);
    }
  }
  for (int k = 0; k < p.H.outerSize(); ++k)
    for (SpMat::InnerIterator it(p.H, k); it; ++it) {
      const int i = static_cast<int>(it.row()), j = static_cast<int>(it.col());
      if (is_frac[i] && is_frac[j]) dsu.join(i, j);
    }

  std::vector<std::vector<int>> comps;
  {
    std::vector<int> root_of(n, -1);
    for (int b : frac) {
      const int r = dsu.find(b);
      if (root_of[r] < 0) {
        root_of[r] = static_cast<int>(comps.size());
        comps.emplace_back();
      }
      comps[root_of[r]].push_back(b);
    }
  }

  // Rows touching each component.
  std::vector<std::vector<int>> comp_eq(comps.size()), comp_in(comps.size());
  std::vector<int> comp_of(n, -1);
  for (int c = 0; c < static_cast<int>(comps.size()); ++c)
    for (int b : comps[c]) comp_of[b] = c;
  auto collect = [&](const RowMat& A, std::vector<std::vector<int>>& dst) {
    for (int r = 0; r < A.rows(); ++r) {
      int c = -1;
      for (RowMat::InnerIterator it(A, r); it; ++it) {
        const int j = static_cast<int>(it.col());
        if (is_frac[j]) {
          c = comp_of[j];
          break;
        }
      }
      if (c >= 0) dst[c].push_back(r);
    }
  };
  collect(AeR, comp_eq);
  collect(AiR, comp_in);

  for (int c = 0; c < static_cast<int>(comps.size()); ++c) {
    auto& vars = comps[c];
    std::sort(vars.begin(), vars.end());
    const int k = static_cast<int>(vars.size());
    if (k > 12) return std::nullopt;

    double best_obj = kInf;
    long best_mask = -1;
    for (long mask = 0; mask < (1L << k); ++mask) {
      bool ok = true;
      for (int t = 0; t < k && ok; ++t) {
        const double v = (mask >> t) & 1;
        if (v < lo(vars[t]) - 1e-9 || v > hi(vars[t]) + 1e-9) ok = false;
      }
      if (!ok) continue;
      auto value_of = [&](int j) -> double {
        if (is_frac[j] && comp_of[j] == c) {
          const int t = static_cast<int>(std::lower_bound(vars.begin(), vars.end(), j) -
                                         vars.begin());
          return static_cast<double>((mask >> t) & 1);
        }
        return cand(j);
      };
      for (const auto& g : p.sos1_groups) {
        int nz = 0;
        for (int i : g)
          if (value_of(i) > 0.5) ++nz;
        if (nz > 1) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      for (int r : comp_eq[c]) {
        double act = 0.0;
        for (RowMat::InnerIterator it(AeR, r); it; ++it)
          act += it.value() * value_of(static_cast<int>(it.col()));
        if (std::abs(act - p.b_eq(r)) > kFeasTol * (1.0 + std::abs(p.b_eq(r)))) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      for (int r : comp_in[c]) {
        double act = 0.0;
        for (RowMat::InnerIterator it(AiR, r); it; ++it)
          act += it.value() * value_of(static_cast<int>(it.col()));
        if (act > p.b_in(r) + kFeasTol * (1.0 + std::abs(p.b_in(r)))) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      VectorXd trial = cand;
      for (int t = 0; t < k; ++t) trial(vars[t]) = static_cast<double>((mask >> t) & 1);
      const double obj = p.objective_at(trial);
      if (obj < best_obj - 1e-12) {
        best_obj = obj;
        best_mask = mask;
      }
    }
    if (best_mask < 0) return std::nullopt;
    for (int t = 0; t < k; ++t) cand(vars[t]) = static_cast<double>((best_mask >> t) & 1);
  }
  return cand;
}

struct BranchChoice {
  enum class Kind { None, Variable, Sos1 } kind = Kind::None;
  int var = -1;                    // Variable: fix to 0 / 1
  int sos_star = -1;               // Sos1: member kept free in child 2
  std::vector<int> sos_others;     // Sos1: members zeroed in child 2
};

BranchChoice choose_branch(const Miqp& p, const VectorXd& z, const VectorXd& lo,
                           const VectorXd& hi, const SolverOptions& opt) {
  BranchChoice ch;
  if (opt.branching == SolverOptions::Branching::Sos1Priority) {
    // Group with the largest total fractionality among >= 2 positive members.
    double best = 1e-7;
    int best_g = -1;
    for (int g = 0; g < static_cast<int>(p.sos1_groups.size()); ++g) {
      int positive = 0;
      double score = 0.0;
      for (int i : p.sos1_groups[g]) {
        if (hi(i) < 0.5) continue;  // already excluded at this node
        if (z(i) > 1e-6) ++positive;
        score += std::min(z(i), 1.0 - z(i));
      }
      if (positive >= 2 && score > best) {
        best = score;
        best_g = g;
      }
    }
    if (best_g >= 0) {
      const auto& g = p.sos1_groups[best_g];
      int star = -1;
      double zmax = -1.0;
      for (int i : g) {
        if (hi(i) < 0.5) continue;
        if (z(i) > zmax + 1e-12) {
          zmax = z(i);
          star = i;
        }
      }
      ch.kind = BranchChoice::Kind::Sos1;
      ch.sos_star = star;
      for (int i : g)
        if (i != star && hi(i) >= 0.5) ch.sos_others.push_back(i);
      return ch;
    }
  }
  // Most fractional single binary; ties resolved by lowest index.
  double best = -1.0;
  int best_i = -1;
  for (int b : p.binary_idx) {
    if (hi(b) - lo(b) <= 1e-9) continue;
    const double fr = std::min(z(b), 1.0 - z(b));
    if (fr > opt.integrality_tol && fr > best + 1e-12) {
      best = fr;
      best_i = b;
    }
  }
  if (best_i >= 0) {
    ch.kind = BranchChoice::Kind::Variable;
    ch.var = best_i;
  }
  return ch;
}

MiqpSolution run_bnb(const Miqp& p_in, const SolverOptions& opt, SearchTrace* trace,
                     const std::optional<VectorXd>& warm_start) {
  opt.validate();
  p_in.validate(p_in.num_vars() <= 256);
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  const Miqp p = with_sos1_rows(p_in);
  const RowMat AeR = p.A_eq;
  const RowMat AiR = p.A_in;

  QpOptions qopt;
  MiqpSolution out;
  out.status = SolveStatus::NumericalError;

  double inc_obj = kInf;
  VectorXd inc_z;
  bool degraded = false;

  auto prune_eps = [&] { return opt.rel_gap_tol * std::max(1.0, std::abs(inc_obj)); };

  auto try_incumbent = [&](const VectorXd& z) {
    if (!incumbent_feasible(p_in, z, opt.integrality_tol)) return false;
    const double obj = p_in.objective_at(z);
    if (obj < inc_obj - 1e-12) {
      inc_obj = obj;
      inc_z = z;
      // exact integrality on the stored solution
      for (int b : p_in.binary_idx) inc_z(b) = std::round(inc_z(b));
      return true;
    }
    return false;
  };

  // Warm start: fix binaries to the hint's rounded values and solve the QP.
  if (warm_start && warm_start->size() == p.num_vars()) {
    VectorXd lo = p.lb, hi = p.ub;
    bool usable = true;
    for (int b : p.binary_idx) {
      const double v = std::round(std::clamp((*warm_start)(b), 0.0, 1.0));
      if (v < lo(b) - 1e-9 || v > hi(b) + 1e-9) {
        usable = false;
        break;
      }
      lo(b) = hi(b) = v;
    }
    for (const auto& g : p.sos1_groups) {
      int nz = 0;
      for (int i : g)
        if (lo(i) > 0.5) ++nz;
      if (nz > 1) usable = false;
    }
    if (usable) {
      ReducedSolve rs = solve_reduced(p, lo, hi, /*aggressive=*/true, qopt);
      out.stats.qp_iterations += rs.iterations;
      if (rs.status == QpStatus::Optimal) try_incumbent(rs.z);
    }
  }

  std::priority_queue<Node, std::vector<Node>, NodeOrderCmp> heap;
  std::vector<Node> stack;
  long next_id = 0;
  auto push_node = [&](Node n) {
    n.id = next_id++;
    if (opt.node_order == SolverOptions::NodeOrder::BestBound)
      heap.push(std::move(n));
    else
      stack.push_back(std::move(n));
  };
  auto have_nodes = [&] { return opt.node_order == SolverOptions::NodeOrder::BestBound
                                     ? !heap.empty()
                                     : !stack.empty(); };
  auto pop_node = [&] {
    if (opt.node_order == SolverOptions::NodeOrder::BestBound) {
      Node n = heap.top();
      heap.pop();
      return n;
    }
    Node n = std::move(stack.back());
    stack.pop_back();
    return n;
  };

  push_node(Node{-kInf, 0, 0, p.lb, p.ub});
  double best_open_bound = -kInf;
  bool root_infeasible = false;

  while (have_nodes()) {
    if (out.stats.nodes_explored >= opt.node_limit) {
      out.stats.hit_node_limit = true;
      break;
    }
    if (elapsed() > opt.time_limit_s) {
      out.stats.hit_time_limit = true;
      break;
    }
    Node node = pop_node();
    best_open_bound = node.bound;
    if (std::isfinite(inc_obj) && node.bound >= inc_obj - prune_eps()) {
      if (opt.node_order == SolverOptions::NodeOrder::BestBound) break;  // all bounds worse
      continue;
    }

    ReducedSolve rs = solve_reduced(p, node.lb, node.ub, /*aggressive=*/true, qopt);
    ++out.stats.nodes_explored;
    out.stats.qp_iterations += rs.iterations;

    if (rs.status == QpStatus::Infeasible) {
      if (node.depth == 0) root_infeasible = true;
      continue;
    }
    if (rs.status == QpStatus::NumericalError) {
      // Conservative: split on the lowest-index free binary, keep parent bound.
      int j = -1;
      for (int b : p.binary_idx)
        if (node.ub(b) - node.lb(b) > 1e-9) {
          j = b;
          break;
        }
      if (j < 0 || node.depth > 2 * static_cast<int>(p.binary_idx.size())) {
        degraded = true;
        continue;
      }
      Node c0 = node, c1 = node;
      c0.depth = c1.depth = node.depth + 1;
      c0.ub(j) = 0.0;
      c1.lb(j) = 1.0;
      push_node(std::move(c0));
      push_node(std::move(c1));
      continue;
    }

    const double bound = std::max(node.bound, rs.objective);
    if (trace) {
      trace->node_relax_obj.push_back(rs.objective);
      trace->parent_bound.push_back(node.bound);
    }
    if (std::isfinite(inc_obj) && bound >= inc_obj - prune_eps()) {
      if (trace) trace->incumbent_after.push_back(inc_obj);
      continue;
    }

    if (integral_point(p, rs.z, opt.integrality_tol)) {
      try_incumbent(rs.z);
      if (trace) trace->incumbent_after.push_back(inc_obj);
      continue;
    }

    // Rounding completion: may close the node outright when the completed
    // objective matches the relaxation bound.
    bool closed = false;
    if (auto cand = complete_binaries(p, AeR, AiR, rs.z, node.lb, node.ub,
                                      opt.integrality_tol)) {
      if (try_incumbent(*cand) || incumbent_feasible(p_in, *cand, opt.integrality_tol)) {
        const double cobj = p_in.objective_at(*cand);
        if (cobj <= bound + prune_eps()) closed = true;
      }
    }
    if (trace) trace->incumbent_after.push_back(inc_obj);
    if (closed) continue;

    BranchChoice ch = choose_branch(p, rs.z, node.lb, node.ub, opt);
    if (ch.kind == BranchChoice::Kind::None) {
      // Fractionality below the integrality tolerance but SOS1-consistent
      // rounding failed: accept the rounded point when feasible.
      VectorXd zr = rs.z;
      for (int b : p.binary_idx) zr(b) = std::round(zr(b));
      try_incumbent(zr);
      continue;
    }
    Node c0 = node, c1 = node;
    c0.depth = c1.depth = node.depth + 1;
    c0.bound = c1.bound = bound;
    if (ch.kind == BranchChoice::Kind::Variable) {
      c0.ub(ch.var) = 0.0;
      c1.lb(ch.var) = 1.0;
    } else {
      c0.ub(ch.sos_star) = 0.0;
      for (int i : ch.sos_others) c1.ub(i) = 0.0;
    }
    push_node(std::move(c0));
    push_node(std::move(c1));
  }

  out.stats.wall_time_s = elapsed();
  const bool exhausted = !have_nodes() && !out.stats.hit_node_limit && !out.stats.hit_time_limit;

  if (std::isfinite(inc_obj)) {
    out.z = inc_z;
    out.objective = inc_obj;
    out.best_bound = exhausted ? inc_obj : std::max(best_open_bound, -kInf);
    if (exhausted || (std::isfinite(best_open_bound) &&
                      best_open_bound >= inc_obj - prune_eps()))
      out.status = degraded ? SolveStatus::FeasibleIncumbent : SolveStatus::Optimal;
    else
      out.status = SolveStatus::FeasibleIncumbent;
  } else if (root_infeasible || (exhausted && !degraded)) {
    out.status = SolveStatus::Infeasible;
  } else if (out.stats.hit_node_limit || out.stats.hit_time_limit) {
    out.status = SolveStatus::NodeLimit;
  } else {
    out.status = SolveStatus::NumericalError;
  }
  return out;
}

}  // namespace

MiqpSolution solve_miqp(const Miqp& p, const SolverOptions& opt,
                        const std::optional<Eigen::VectorXd>& warm_start) {
  return run_bnb(p, opt, nullptr, warm_start);
}

MiqpSolution solve_miqp_traced(const Miqp& p, const SolverOptions& opt, SearchTrace& trace,
                               const std::optional<Eigen::VectorXd>& warm_start) {
  return run_bnb(p, opt, &trace, warm_start);
}

MiqpSolution enumerate_oracle(const Miqp& p) {
  p.validate(p.num_vars() <= 256);
  const int m = static_cast<int>(p.binary_idx.size());
  if (m > 20) throw std::invalid_argument("enumerate_oracle: more than 20 binaries");
  const auto t_start = std::chrono::steady_clock::now();

  std::vector<int> bins = p.binary_idx;
  std::sort(bins.begin(), bins.end());

  QpOptions qopt;
  MiqpSolution out;
  double best = kInf;

  for (long mask = 0; mask < (1L << m); ++mask) {
    bool sos_ok = true;
    for (const auto& g : p.sos1_groups) {
      int nz = 0;
      for (int i : g) {
        const int t = static_cast<int>(std::lower_bound(bins.begin(), bins.end(), i) -
                                       bins.begin());
        if ((mask >> t) & 1) ++nz;
      }
      if (nz > 1) {
        sos_ok = false;
        break;
      }
    }
    if (!sos_ok) continue;
    Eigen::VectorXd lo = p.lb, hi = p.ub;
    bool in_bounds = true;
    for (int t = 0; t < m; ++t) {
      const double v = static_cast<double>((mask >> t) & 1);
      if (v < lo(bins[t]) - 1e-9 || v > hi(bins[t]) + 1e-9) {
        in_bounds = false;
        break;
      }
      lo(bins[t]) = hi(bins[t]) = v;
    }
    if (!in_bounds) continue;
    ReducedSolve rs = solve_reduced(p, lo, hi, /*aggressive=*/true, qopt);
    ++out.stats.nodes_explored;
    out.stats.qp_iterations += rs.iterations;
    if (rs.status != QpStatus::Optimal) continue;
    const double obj = p.objective_at(rs.z);
    if (obj < best - 1e-12) {
      best = obj;
      out.z = rs.z;
      for (int b : p.binary_idx) out.z(b) = std::round(out.z(b));
    }
  }
  out.stats.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  if (std::isfinite(best)) {
    out.objective = best;
    out.best_bound = best;
    out.status = SolveStatus::Optimal;
  } else {
    out.status = SolveStatus::Infeasible;
  }
  return out;
}

}  // namespace gnepmpc
