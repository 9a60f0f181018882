#include "gnepmpc/qp_solver.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <random>

using namespace gnepmpc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Miqp empty_qp(int n) {
  Miqp p;
  p.H.resize(n, n);
  p.f = VectorXd::Zero(n);
  p.A_eq.resize(0, n);
  p.b_eq.resize(0);
  p.A_in.resize(0, n);
  p.b_in.resize(0);
  p.lb = VectorXd::Constant(n, -kInf);
  p.ub = VectorXd::Constant(n, kInf);
  return p;
}

// ---- independent first-order oracle: projected gradient with Dykstra ----

VectorXd dykstra_project(const VectorXd& x, const MatrixXd& A, const VectorXd& b,
                         const VectorXd& lb, const VectorXd& ub) {
  const int m = static_cast<int>(b.size());
  const int sets = m + 1;
  std::vector<VectorXd> corr(sets, VectorXd::Zero(x.size()));
  VectorXd z = x;
  for (int sweep = 0; sweep < 4000; ++sweep) {
    double moved = 0.0;
    for (int i = 0; i < sets; ++i) {
      VectorXd w = z + corr[i];
      VectorXd pz;
      if (i < m) {
        const double viol = A.row(i).dot(w) - b(i);
        pz = viol > 0 ? VectorXd(w - viol / A.row(i).squaredNorm() * A.row(i).transpose())
                      : w;
      } else {
        pz = w.cwiseMax(lb).cwiseMin(ub);
      }
      corr[i] = w - pz;
      moved = std::max(moved, (pz - z).lpNorm<Eigen::Infinity>());
      z = pz;
    }
    if (moved < 1e-14) break;
  }
  return z;
}

double pgd_oracle_objective(const Miqp& p) {
  MatrixXd H = MatrixXd(p.H);
  MatrixXd A = MatrixXd(p.A_in);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(H);
  const double L = std::max(1e-8, es.eigenvalues().maxCoeff());
  VectorXd z = dykstra_project(VectorXd::Zero(p.num_vars()), A, p.b_in, p.lb, p.ub);
  for (int it = 0; it < 200000; ++it) {
    VectorXd g = H * z + p.f;
    VectorXd zn = dykstra_project(z - g / L, A, p.b_in, p.lb, p.ub);
    const double step = (zn - z).lpNorm<Eigen::Infinity>();
    z = zn;
    if (step < 1e-13) break;
  }
  return p.objective_at(z);
}

}  // namespace

TEST_CASE("unconstrained scalar quadratic") {
  // min (z-1)^2 = z^2 - 2z + 1
  Miqp p = empty_qp(1);
  p.H.insert(0, 0) = 2.0;
  p.f(0) = -2.0;
  p.obj_const = 1.0;
  auto sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK(sol.z(0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(sol.objective == doctest::Approx(0.0).epsilon(1e-8));
  CHECK(sol.kkt_residual <= 1e-8);
}

TEST_CASE("active bound: min z^2 s.t. z >= 2") {
  Miqp p = empty_qp(1);
  p.H.insert(0, 0) = 2.0;
  SUBCASE("as variable bound") { p.lb(0) = 2.0; }
  SUBCASE("as inequality row") {
    p.A_in.resize(1, 1);
    p.A_in.insert(0, 0) = -1.0;
    p.b_in.resize(1);
    p.b_in(0) = -2.0;
  }
  auto sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::Optimal);
  CHECK(sol.z(0) == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(sol.objective == doctest::Approx(4.0).epsilon(1e-8));
}

TEST_CASE("equality-constrained analytic solution") {
  // min 0.5||z||^2 s.t. sum z = 1  ->  z_i = 1/3
  Miqp p = empty_qp(3);
  for (int i = 0; i < 3; ++i) p.H.insert(i, i) = 1.0;
  p.A_eq.resize(1, 3);
  for (int i = 0; i < 3; ++i) p.A_eq.insert(0, i) = 1.0;
  p.b_eq.resize(1);
  p.b_eq(0) = 1.0;
  auto sol = solve_qp(p);
  REQUIRE(sol.status == QpStatus::Optimal);
  for (int i = 0; i < 3; ++i) CHECK(sol.z(i) == doctest::Approx(1.0 / 3).epsilon(1e-9));
  CHECK(sol.kkt_residual <= 1e-8);
}

TEST_CASE("infeasibility is certified") {
  SUBCASE("crossed bounds") {
    Miqp p = empty_qp(2);
    p.H.insert(0, 0) = 1.0;
    p.lb(0) = 1.0;
    p.ub(0) = 0.0;
    CHECK(solve_qp(p).status == QpStatus::Infeasible);
  }
  SUBCASE("conflicting rows") {
    // z <= 1 and z >= 2
    Miqp p = empty_qp(1);
    p.H.insert(0, 0) = 2.0;
    p.A_in.resize(2, 1);
    p.A_in.insert(0, 0) = 1.0;
    p.A_in.insert(1, 0) = -1.0;
    p.b_in.resize(2);
    p.b_in << 1.0, -2.0;
    CHECK(solve_qp(p).status == QpStatus::Infeasible);
  }
  SUBCASE("conflicting multi-variable rows") {
    // x + y <= -1, x >= 0, y >= 0
    Miqp p = empty_qp(2);
    p.H.insert(0, 0) = 2.0;
    p.H.insert(1, 1) = 2.0;
    p.lb << 0.0, 0.0;
    p.A_in.resize(1, 2);
    p.A_in.insert(0, 0) = 1.0;
    p.A_in.insert(0, 1) = 1.0;
    p.b_in.resize(1);
    p.b_in(0) = -1.0;
    CHECK(solve_qp(p).status == QpStatus::Infeasible);
  }
}

TEST_CASE("non-PSD H raises a parameter error") {
  Miqp p = empty_qp(2);
  p.H.insert(0, 0) = 1.0;
  p.H.insert(1, 1) = -1.0;
  p.lb = VectorXd::Constant(2, -1.0);
  p.ub = VectorXd::Constant(2, 1.0);
  CHECK_THROWS_AS(solve_qp(p), std::invalid_argument);
}

TEST_CASE("random PSD instances match the projected-gradient oracle") {
  std::mt19937 rng(20240811);
  int checked = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 4 + static_cast<int>(rng() % 17);  // up to 20
    Miqp p = testutil::random_miqp(rng, n, 0, /*with_eq=*/false, /*with_sos=*/false,
                                   /*strongly_convex=*/true);
    auto sol = solve_qp(p);
    REQUIRE(sol.status == QpStatus::Optimal);
    const double oracle = pgd_oracle_objective(p);
    CHECK(sol.objective == doctest::Approx(oracle).epsilon(1e-6));
    CHECK(sol.kkt_residual <= 1e-8);
    ++checked;
  }
  CHECK(checked == 12);
}

TEST_CASE("KKT residual contract on degenerate (singular H) instances") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 10);
    Miqp p = testutil::random_miqp(rng, n, 0, true, false, false);
    auto sol = solve_qp(p);
    REQUIRE(sol.status == QpStatus::Optimal);
    CHECK(sol.kkt_residual <= 1e-8);
    CHECK(p.max_violation(sol.z) <= 1e-7);
  }
}
