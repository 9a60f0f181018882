#pragma once

#include "gnepmpc/miqp.hpp"

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace gnepmpc::testutil {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline SpMat to_sparse(const MatrixXd& m) {
  SpMat s = m.sparseView(1e-300, 1.0);
  s.makeCompressed();
  return s;
}

/// Random feasible MIQP: PSD objective over box-bounded continuous variables
/// plus binaries, with inequality/equality rows built around a known feasible
/// point so every instance has at least one integral solution.
inline Miqp random_miqp(std::mt19937& rng, int n_cont, int n_bin, bool with_eq = true,
                        bool with_sos = true, bool strongly_convex = false) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n = n_cont + n_bin;

  MatrixXd M = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (unif(rng) < 0.4) M(i, j) = gauss(rng);
  MatrixXd H = M.transpose() * M;
  if (strongly_convex) H += 0.5 * MatrixXd::Identity(n, n);

  Miqp p;
  p.H = to_sparse(H);
  p.f = VectorXd::NullaryExpr(n, [&] { return gauss(rng); });
  p.lb = VectorXd::Constant(n, -3.0);
  p.ub = VectorXd::Constant(n, 3.0);
  for (int b = 0; b < n_bin; ++b) {
    p.binary_idx.push_back(n_cont + b);
    p.lb(n_cont + b) = 0.0;
    p.ub(n_cont + b) = 1.0;
  }

  // Feasible anchor point.
  VectorXd z0(n);
  for (int j = 0; j < n_cont; ++j) z0(j) = -2.0 + 4.0 * unif(rng);
  for (int b = 0; b < n_bin; ++b) z0(n_cont + b) = unif(rng) < 0.5 ? 0.0 : 1.0;

  if (with_sos && n_bin >= 2) {
    int at = 0;
    while (at + 2 <= n_bin) {
      const int len = (unif(rng) < 0.5 && at + 3 <= n_bin) ? 3 : 2;
      std::vector<int> g;
      for (int k = 0; k < len; ++k) g.push_back(n_cont + at + k);
      p.sos1_groups.push_back(g);
      bool first = true;
      for (int i : g) {  // anchor must satisfy SOS1
        if (z0(i) > 0.5 && !first) z0(i) = 0.0;
        if (z0(i) > 0.5) first = false;
      }
      at += len;
      if (unif(rng) < 0.5) break;
    }
  }

  const int m_in = 2 + static_cast<int>(unif(rng) * 5);
  std::vector<Eigen::Triplet<double>> ti;
  p.b_in.resize(m_in);
  for (int r = 0; r < m_in; ++r) {
    double act = 0.0;
    for (int j = 0; j < n; ++j)
      if (unif(rng) < 0.35) {
        const double a = gauss(rng);
        ti.emplace_back(r, j, a);
        act += a * z0(j);
      }
    p.b_in(r) = act + 0.1 + 2.0 * unif(rng);
  }
  p.A_in.resize(m_in, n);
  p.A_in.setFromTriplets(ti.begin(), ti.end());

  if (with_eq) {
    const int m_eq = 1 + static_cast<int>(unif(rng) * 2);
    std::vector<Eigen::Triplet<double>> te;
    p.b_eq.resize(m_eq);
    for (int r = 0; r < m_eq; ++r) {
      double act = 0.0;
      int placed = 0;
      for (int j = 0; j < n; ++j)
        if (unif(rng) < 0.3) {
          const double a = gauss(rng);
          te.emplace_back(r, j, a);
          act += a * z0(j);
          ++placed;
        }
      if (placed == 0) {
        te.emplace_back(r, 0, 1.0);
        act = z0(0);
      }
      p.b_eq(r) = act;
    }
    p.A_eq.resize(m_eq, n);
    p.A_eq.setFromTriplets(te.begin(), te.end());
  } else {
    p.A_eq.resize(0, n);
    p.b_eq.resize(0);
  }
  return p;
}

}  // namespace gnepmpc::testutil
