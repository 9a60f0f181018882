#include "gnepmpc/miqp_solver.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <random>

using namespace gnepmpc;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Miqp scalar_binary_qp(double target) {
  // min (z - target)^2, z binary
  Miqp p;
  p.H.resize(1, 1);
  p.H.insert(0, 0) = 2.0;
  p.f = VectorXd::Constant(1, -2.0 * target);
  p.obj_const = target * target;
  p.A_eq.resize(0, 1);
  p.b_eq.resize(0);
  p.A_in.resize(0, 1);
  p.b_in.resize(0);
  p.lb = VectorXd::Zero(1);
  p.ub = VectorXd::Ones(1);
  p.binary_idx = {0};
  return p;
}

SolverOptions tight_opts() {
  SolverOptions o;
  o.rel_gap_tol = 1e-7;
  return o;
}

}  // namespace

TEST_CASE("nearest-integer analytic optimum") {
  auto sol = solve_miqp(scalar_binary_qp(0.6), tight_opts());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.z(0) == doctest::Approx(1.0));
  CHECK(sol.objective == doctest::Approx(0.16).epsilon(1e-9));
}

TEST_CASE("degenerate B&B: no binaries reduces to solve_qp") {
  std::mt19937 rng(99);
  Miqp p = testutil::random_miqp(rng, 8, 0, true, false, true);
  auto mip = solve_miqp(p, tight_opts());
  auto qp = solve_qp(p);
  REQUIRE(mip.status == SolveStatus::Optimal);
  REQUIRE(qp.status == QpStatus::Optimal);
  CHECK(mip.objective == doctest::Approx(qp.objective).epsilon(1e-7));
  CHECK((mip.z - qp.z).lpNorm<Eigen::Infinity>() <= 1e-5);
  CHECK(mip.stats.nodes_explored == 1);
}

TEST_CASE("enumerate_oracle basics") {
  SUBCASE("zero binaries equals solve_qp") {
    std::mt19937 rng(3);
    Miqp p = testutil::random_miqp(rng, 6, 0, true, false, true);
    auto oracle = enumerate_oracle(p);
    auto qp = solve_qp(p);
    REQUIRE(oracle.status == SolveStatus::Optimal);
    CHECK(oracle.objective == doctest::Approx(qp.objective).epsilon(1e-8));
  }
  SUBCASE("single binary enumerates both points") {
    auto sol = enumerate_oracle(scalar_binary_qp(0.6));
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.z(0) == doctest::Approx(1.0));
    CHECK(sol.stats.nodes_explored == 2);
  }
  SUBCASE("refuses more than 20 binaries") {
    Miqp p = scalar_binary_qp(0.5);
    const int n = 21;
    p.H.resize(n, n);
    p.f = VectorXd::Zero(n);
    p.A_eq.resize(0, n);
    p.A_in.resize(0, n);
    p.lb = VectorXd::Zero(n);
    p.ub = VectorXd::Ones(n);
    p.binary_idx.clear();
    for (int i = 0; i < n; ++i) p.binary_idx.push_back(i);
    CHECK_THROWS_AS(enumerate_oracle(p), std::invalid_argument);
  }
}

TEST_CASE("oracle equivalence on random mixed instances") {
  std::mt19937 rng(20240812);
  for (int trial = 0; trial < 40; ++trial) {
    const int n_bin = 1 + static_cast<int>(rng() % 8);
    const int n_cont = 2 + static_cast<int>(rng() % 10);
    Miqp p = testutil::random_miqp(rng, n_cont, n_bin);
    auto oracle = enumerate_oracle(p);
    auto sol = solve_miqp(p, tight_opts());
    REQUIRE(oracle.status == SolveStatus::Optimal);
    REQUIRE(sol.status == SolveStatus::Optimal);
    const double denom = std::max(1.0, std::abs(oracle.objective));
    CHECK(std::abs(sol.objective - oracle.objective) / denom <= 1e-6);
    CHECK(p.max_violation(sol.z) <= 1e-6);
    for (int b : p.binary_idx) CHECK(std::min(sol.z(b), 1.0 - sol.z(b)) <= 1e-5);
  }
}

TEST_CASE("SOS1 groups restrict to one active binary") {
  // Objective pulls both binaries toward 1; SOS1 allows only one. The second
  // carries a higher reward, so it wins.
  Miqp p;
  const int n = 2;
  p.H.resize(n, n);
  p.f.resize(n);
  p.f << -1.0, -2.0;
  p.A_eq.resize(0, n);
  p.b_eq.resize(0);
  p.A_in.resize(0, n);
  p.b_in.resize(0);
  p.lb = VectorXd::Zero(n);
  p.ub = VectorXd::Ones(n);
  p.binary_idx = {0, 1};
  p.sos1_groups = {{0, 1}};
  auto sol = solve_miqp(p, tight_opts());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.z(0) == doctest::Approx(0.0));
  CHECK(sol.z(1) == doctest::Approx(1.0));
  CHECK(sol.objective == doctest::Approx(-2.0));
  auto oracle = enumerate_oracle(p);
  CHECK(oracle.objective == doctest::Approx(-2.0));
}

TEST_CASE("infeasible instances report infeasible") {
  Miqp p = scalar_binary_qp(0.5);
  p.A_in.resize(2, 1);
  p.A_in.insert(0, 0) = 1.0;   // z <= 0.4
  p.A_in.insert(1, 0) = -1.0;  // z >= 0.6
  p.b_in.resize(2);
  p.b_in << 0.4, -0.6;
  CHECK(solve_miqp(p, tight_opts()).status == SolveStatus::Infeasible);
  CHECK(enumerate_oracle(p).status == SolveStatus::Infeasible);
}

TEST_CASE("determinism: identical instance gives identical run") {
  std::mt19937 rng(5150);
  Miqp p = testutil::random_miqp(rng, 6, 6);
  auto a = solve_miqp(p, tight_opts());
  auto b = solve_miqp(p, tight_opts());
  REQUIRE(a.status == b.status);
  CHECK(a.stats.nodes_explored == b.stats.nodes_explored);
  CHECK((a.z - b.z).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("bound and incumbent monotonicity over the search") {
  std::mt19937 rng(777);
  int branchy = 0;
  for (int trial = 0; trial < 12; ++trial) {
    Miqp p = testutil::random_miqp(rng, 4, 7);
    SolverOptions opt = tight_opts();
    opt.record_tree = true;
    SearchTrace tr;
    auto sol = solve_miqp_traced(p, opt, tr);
    REQUIRE(sol.status == SolveStatus::Optimal);
    for (size_t i = 0; i < tr.node_relax_obj.size(); ++i) {
      if (std::isfinite(tr.parent_bound[i]))
        CHECK(tr.node_relax_obj[i] >= tr.parent_bound[i] - 1e-9 * (1.0 + std::abs(tr.parent_bound[i])));
    }
    for (size_t i = 1; i < tr.incumbent_after.size(); ++i)
      CHECK(tr.incumbent_after[i] <= tr.incumbent_after[i - 1] + 1e-12);
    if (tr.node_relax_obj.size() > 1) ++branchy;
  }
  CHECK(branchy >= 1);  // at least some instances actually branched
}

TEST_CASE("node limit yields a degraded status") {
  std::mt19937 rng(31337);
  Miqp p = testutil::random_miqp(rng, 6, 9);
  SolverOptions opt = tight_opts();
  opt.node_limit = 1;
  auto sol = solve_miqp(p, opt);
  CHECK((sol.status == SolveStatus::FeasibleIncumbent || sol.status == SolveStatus::NodeLimit ||
         sol.status == SolveStatus::Optimal));
}

TEST_CASE("debug dump round-trips") {
  std::mt19937 rng(6);
  Miqp p = testutil::random_miqp(rng, 5, 4);
  p.lb(0) = -kInf;  // exercise infinite bounds in the format
  Miqp q = parse_miqp(dump_miqp(p));
  CHECK(q.num_vars() == p.num_vars());
  CHECK(q.binary_idx == p.binary_idx);
  CHECK(q.sos1_groups == p.sos1_groups);
  auto a = solve_miqp(p, tight_opts());
  auto b = solve_miqp(q, tight_opts());
  CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-10));
  CHECK(a.stats.nodes_explored == b.stats.nodes_explored);
}
