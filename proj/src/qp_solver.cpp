#include "gnepmpc/qp_solver.hpp"
#include "gnepmpc/qp_internal.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace gnepmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using RowMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Eigen::VectorXd;

// Reduced problem after presolve:
//   min 1/2 z'Hz + f'z + c0   s.t.  Ae z = be, Ai z <= bi, lb <= z <= ub
// with fixed variables substituted out and rows scaled to unit inf-norm.
struct Reduced {
  SpMat H;
  VectorXd f;
  double c0 = 0.0;
  SpMat Ae;
  VectorXd be;
  SpMat Ai;
  VectorXd bi;
  VectorXd lb, ub;
  std::vector<int> var_of;  // reduced var -> original var
  std::vector<int> eq_of;   // reduced row -> original row
  std::vector<int> in_of;
  VectorXd eq_scale, in_scale;
  VectorXd z_fixed;  // original size; fixed values, 0 elsewhere
  std::vector<char> fixed;
};

// ---------------------------------------------------------------------------
// Presolve
// ---------------------------------------------------------------------------

struct PresolveWork {
  VectorXd lo, hi;
  std::vector<char> eq_dropped, in_dropped;
  bool infeasible = false;
};

// One fixed-point loop of bound-based reductions. With `aggressive`,
// inequality min-activity propagation tightens bounds (dual recovery is then
// not attempted; branch-and-bound only consumes primal values).
PresolveWork presolve_bounds(const Miqp& p, const VectorXd& lb, const VectorXd& ub,
                             bool aggressive) {
  const int n = p.num_vars();
  PresolveWork w;
  w.lo = lb;
  w.hi = ub;
  w.eq_dropped.assign(p.num_eq(), 0);
  w.in_dropped.assign(p.num_in(), 0);

  RowMat AeR = p.A_eq;
  RowMat AiR = p.A_in;

  std::vector<char> is_bin(n, 0);
  for (int b : p.binary_idx) is_bin[b] = 1;

  auto fixed = [&](int j) { return w.hi(j) - w.lo(j) <= 1e-11; };

  const double tol = 1e-9;
  for (int pass = 0; pass < 25; ++pass) {
    bool changed = false;

    for (int j = 0; j < n; ++j) {
      if (w.lo(j) > w.hi(j) + 1e-9) {
        w.infeasible = true;
        return w;
      }
    }

    // Equality rows: consistency of constant rows, substitution of singletons.
    for (int r = 0; r < p.num_eq(); ++r) {
      if (w.eq_dropped[r]) continue;
      int free_count = 0, free_j = -1;
      double free_a = 0.0, fixed_sum = 0.0;
      for (RowMat::InnerIterator it(AeR, r); it; ++it) {
        if (it.value() == 0.0) continue;
        if (fixed(it.col())) {
          fixed_sum += it.value() * 0.5 * (w.lo(it.col()) + w.hi(it.col()));
        } else {
          ++free_count;
          free_j = static_cast<int>(it.col());
          free_a = it.value();
        }
      }
      const double rhs = p.b_eq(r) - fixed_sum;
      if (free_count == 0) {
        if (std::abs(rhs) > 1e-7 * (1.0 + std::abs(p.b_eq(r)))) {
          w.infeasible = true;
          return w;
        }
        w.eq_dropped[r] = 1;
        changed = true;
      } else if (free_count == 1) {
        const double v = rhs / free_a;
        if (v < w.lo(free_j) - 1e-7 || v > w.hi(free_j) + 1e-7) {
          w.infeasible = true;
          return w;
        }
        const double vc = std::clamp(v, w.lo(free_j), w.hi(free_j));
        w.lo(free_j) = w.hi(free_j) = vc;
        w.eq_dropped[r] = 1;
        changed = true;
      }
    }

    // Inequality rows: constant-row checks, singleton bound tightening and,
    // in aggressive mode, min-activity propagation.
    for (int r = 0; r < p.num_in(); ++r) {
      if (w.in_dropped[r]) continue;
      int free_count = 0;
      double fixed_sum = 0.0;
      for (RowMat::InnerIterator it(AiR, r); it; ++it) {
        if (it.value() == 0.0) continue;
        if (fixed(it.col()))
          fixed_sum += it.value() * 0.5 * (w.lo(it.col()) + w.hi(it.col()));
        else
          ++free_count;
      }
      const double rhs = p.b_in(r) - fixed_sum;
      if (free_count == 0) {
        if (rhs < -1e-7 * (1.0 + std::abs(p.b_in(r)))) {
          w.infeasible = true;
          return w;
        }
        w.in_dropped[r] = 1;
        changed = true;
        continue;
      }
      if (free_count == 1) {
        for (RowMat::InnerIterator it(AiR, r); it; ++it) {
          if (it.value() == 0.0 || fixed(it.col())) continue;
          const int j = static_cast<int>(it.col());
          const double a = it.value();
          if (a > 0 && rhs / a < w.hi(j) - tol) {
            w.hi(j) = rhs / a;
            changed = true;
          } else if (a < 0 && rhs / a > w.lo(j) + tol) {
            w.lo(j) = rhs / a;
            changed = true;
          }
        }
        continue;
      }
      if (!aggressive) continue;

      // Min activity over free vars; propagate slack to each var in turn.
      double minact = 0.0;
      int n_inf = 0;
      int inf_j = -1;
      for (RowMat::InnerIterator it(AiR, r); it; ++it) {
        const double a = it.value();
        if (a == 0.0) continue;
        const int j = static_cast<int>(it.col());
        const double c = fixed(j) ? a * 0.5 * (w.lo(j) + w.hi(j))
                                  : (a > 0 ? a * w.lo(j) : a * w.hi(j));
        if (std::isinf(c)) {
          ++n_inf;
          inf_j = j;
        } else {
          minact += c;
        }
      }
      if (n_inf == 0 && minact > p.b_in(r) + 1e-7 * (1.0 + std::abs(p.b_in(r)))) {
        w.infeasible = true;
        return w;
      }
      if (n_inf > 1) continue;
      for (RowMat::InnerIterator it(AiR, r); it; ++it) {
        const double a = it.value();
        if (a == 0.0) continue;
        const int j = static_cast<int>(it.col());
        if (fixed(j)) continue;
        if (n_inf == 1 && j != inf_j) continue;
        const double cmin = (a > 0 ? a * w.lo(j) : a * w.hi(j));
        const double slack = p.b_in(r) - (std::isinf(cmin) ? minact : minact - cmin);
        double nhi, nlo;
        if (a > 0) {
          nhi = slack / a;
          if (is_bin[j] && nhi < 1.0 - 1e-7) nhi = std::min(nhi, 0.0);
          if (nhi < w.hi(j) - tol) {
            w.hi(j) = nhi;
            changed = true;
          }
        } else {
          nlo = slack / a;
          if (is_bin[j] && nlo > 1e-7) nlo = std::max(nlo, 1.0);
          if (nlo > w.lo(j) + tol) {
            w.lo(j) = nlo;
            changed = true;
          }
        }
      }
    }

    if (!changed) break;
  }
  return w;
}

Reduced build_reduced(const Miqp& p, const PresolveWork& w) {
  const int n = p.num_vars();
  Reduced R;
  R.fixed.assign(n, 0);
  R.z_fixed = VectorXd::Zero(n);
  std::vector<int> new_idx(n, -1);
  for (int j = 0; j < n; ++j) {
    if (w.hi(j) - w.lo(j) <= 1e-11) {
      R.fixed[j] = 1;
      R.z_fixed(j) = 0.5 * (w.lo(j) + w.hi(j));
    } else {
      new_idx[j] = static_cast<int>(R.var_of.size());
      R.var_of.push_back(j);
    }
  }
  const int nr = static_cast<int>(R.var_of.size());

  // Objective: f_r = f + H[:,fixed] * z_fixed restricted to kept vars;
  // c0 collects the fixed-part quadratic and linear terms.
  R.f = VectorXd::Zero(nr);
  R.c0 = p.obj_const;
  VectorXd Hzf = VectorXd::Zero(n);
  if (p.H.nonZeros() > 0) Hzf = p.H * R.z_fixed;
  for (int j = 0; j < n; ++j) {
    if (R.fixed[j])
      R.c0 += (0.5 * Hzf(j) + p.f(j)) * R.z_fixed(j);
    else
      R.f(new_idx[j]) = p.f(j) + Hzf(j);
  }
  {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(p.H.nonZeros());
    for (int k = 0; k < p.H.outerSize(); ++k)
      for (SpMat::InnerIterator it(p.H, k); it; ++it) {
        const int i = static_cast<int>(it.row()), j = static_cast<int>(it.col());
        if (!R.fixed[i] && !R.fixed[j])
          trips.emplace_back(new_idx[i], new_idx[j], it.value());
      }
    R.H.resize(nr, nr);
    R.H.setFromTriplets(trips.begin(), trips.end());
  }

  auto reduce_rows = [&](const SpMat& A, const VectorXd& b,
                         const std::vector<char>& dropped, SpMat& Ar, VectorXd& br,
                         std::vector<int>& row_of, VectorXd& scale) {
    RowMat AR = A;
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<double> rhs, scl;
    for (int r = 0; r < AR.rows(); ++r) {
      if (dropped[r]) continue;
      double brr = b(r);
      double mx = 0.0;
      std::vector<std::pair<int, double>> ents;
      for (RowMat::InnerIterator it(AR, r); it; ++it) {
        if (it.value() == 0.0) continue;
        const int j = static_cast<int>(it.col());
        if (R.fixed[j]) {
          brr -= it.value() * R.z_fixed(j);
        } else {
          ents.emplace_back(new_idx[j], it.value());
          mx = std::max(mx, std::abs(it.value()));
        }
      }
      if (ents.empty()) continue;  // became constant after fixing; checked in presolve
      const double m = std::clamp(mx, 1e-8, 1e8);
      const int rr = static_cast<int>(rhs.size());
      for (auto& [j, v] : ents) trips.emplace_back(rr, j, v / m);
      rhs.push_back(brr / m);
      scl.push_back(m);
      row_of.push_back(r);
    }
    Ar.resize(static_cast<int>(rhs.size()), nr);
    Ar.setFromTriplets(trips.begin(), trips.end());
    br = Eigen::Map<VectorXd>(rhs.data(), static_cast<int>(rhs.size()));
    scale = Eigen::Map<VectorXd>(scl.data(), static_cast<int>(scl.size()));
  };
  reduce_rows(p.A_eq, p.b_eq, w.eq_dropped, R.Ae, R.be, R.eq_of, R.eq_scale);
  reduce_rows(p.A_in, p.b_in, w.in_dropped, R.Ai, R.bi, R.in_of, R.in_scale);

  R.lb = VectorXd(nr);
  R.ub = VectorXd(nr);
  for (int jr = 0; jr < nr; ++jr) {
    R.lb(jr) = w.lo(R.var_of[jr]);
    R.ub(jr) = w.hi(R.var_of[jr]);
  }
  return R;
}

// ---------------------------------------------------------------------------
// Interior point core (Mehrotra predictor-corrector on the reduced problem)
// ---------------------------------------------------------------------------

struct IpmResult {
  VectorXd z, y, lam;
  double objective = 0.0;
  bool converged = false;
  bool looks_infeasible = false;  // divergence heuristic; confirm via phase-1
  int iterations = 0;
  double res_primal = kInf, res_dual = kInf, mu = kInf;
};

struct IpmScratch {
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt;
  bool analyzed = false;
};

IpmResult ipm_solve(const Reduced& P, const QpOptions& opt) {
  const int n = static_cast<int>(P.f.size());
  const int me = static_cast<int>(P.be.size());
  const int mi = static_cast<int>(P.bi.size());
  const int N = n + me + mi;
  const double sigma_reg = 1e-8, delta_reg = 1e-8;

  IpmResult out;
  out.z = VectorXd::Zero(n);
  out.y = VectorXd::Zero(me);
  out.lam = VectorXd::Zero(mi);
  if (n == 0) {
    out.converged = true;
    out.objective = P.c0;
    return out;
  }

  std::vector<int> blo, bhi;
  for (int j = 0; j < n; ++j) {
    if (std::isfinite(P.lb(j))) blo.push_back(j);
    if (std::isfinite(P.ub(j))) bhi.push_back(j);
  }
  const long npairs = mi + static_cast<long>(blo.size()) + static_cast<long>(bhi.size());

  // Starting point away from the boundary.
  VectorXd z(n);
  for (int j = 0; j < n; ++j) {
    const bool lo = std::isfinite(P.lb(j)), hi = std::isfinite(P.ub(j));
    if (lo && hi)
      z(j) = 0.5 * (P.lb(j) + P.ub(j));
    else if (lo)
      z(j) = P.lb(j) + 1.0;
    else if (hi)
      z(j) = P.ub(j) - 1.0;
    else
      z(j) = 0.0;
  }
  VectorXd y = VectorXd::Zero(me);
  VectorXd s(mi), lam(mi);
  if (mi > 0) {
    VectorXd sraw = P.bi - P.Ai * z;
    for (int i = 0; i < mi; ++i) s(i) = std::max(1.0, std::abs(sraw(i)));
    lam.setOnes();
  }
  VectorXd wl = VectorXd::Zero(n), wu = VectorXd::Zero(n);
  for (int j : blo) wl(j) = 1.0;
  for (int j : bhi) wu(j) = 1.0;

  // Pure equality / unconstrained problems: a couple of Newton solves.
  const bool pure_newton = (npairs == 0);

  IpmScratch scratch;
  VectorXd reg(N);

  auto assemble = [&](const VectorXd& dbox, const VectorXd& slam) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(P.H.nonZeros() + P.Ae.nonZeros() + P.Ai.nonZeros() + N);
    for (int k = 0; k < P.H.outerSize(); ++k)
      for (SpMat::InnerIterator it(P.H, k); it; ++it)
        if (it.row() >= it.col()) trips.emplace_back(it.row(), it.col(), it.value());
    for (int j = 0; j < n; ++j) trips.emplace_back(j, j, dbox(j) + sigma_reg);
    for (int k = 0; k < P.Ae.outerSize(); ++k)
      for (SpMat::InnerIterator it(P.Ae, k); it; ++it)
        trips.emplace_back(n + it.row(), it.col(), it.value());
    for (int r = 0; r < me; ++r) trips.emplace_back(n + r, n + r, -delta_reg);
    for (int k = 0; k < P.Ai.outerSize(); ++k)
      for (SpMat::InnerIterator it(P.Ai, k); it; ++it)
        trips.emplace_back(n + me + it.row(), it.col(), it.value());
    for (int r = 0; r < mi; ++r)
      trips.emplace_back(n + me + r, n + me + r, -(slam(r) + delta_reg));
    SpMat K(N, N);
    K.setFromTriplets(trips.begin(), trips.end());
    for (int j = 0; j < n; ++j) reg(j) = sigma_reg;
    for (int r = 0; r < me; ++r) reg(n + r) = -delta_reg;
    for (int r = 0; r < mi; ++r) reg(n + me + r) = -delta_reg;
    return K;
  };

  // Solve K_true d = rhs via the regularized factorization + refinement.
  auto solve_kkt = [&](const SpMat& K, const VectorXd& rhs) -> VectorXd {
    VectorXd d = scratch.ldlt.solve(rhs);
    for (int ref = 0; ref < 2; ++ref) {
      VectorXd r = rhs - K.selfadjointView<Eigen::Lower>() * d + reg.cwiseProduct(d);
      d += scratch.ldlt.solve(r);
    }
    return d;
  };

  double best_merit = kInf;
  int stall = 0;

  for (int iter = 0; iter < opt.max_iters; ++iter) {
    VectorXd p(n), q(n);
    for (int j = 0; j < n; ++j) {
      p(j) = std::isfinite(P.lb(j)) ? z(j) - P.lb(j) : 1.0;
      q(j) = std::isfinite(P.ub(j)) ? P.ub(j) - z(j) : 1.0;
    }

    VectorXd rd = P.f;
    if (P.H.nonZeros() > 0) rd += P.H * z;
    if (me > 0) rd += P.Ae.transpose() * y;
    if (mi > 0) rd += P.Ai.transpose() * lam;
    rd -= wl;
    rd += wu;
    VectorXd re = (me > 0) ? VectorXd(P.Ae * z - P.be) : VectorXd(0);
    VectorXd ri = (mi > 0) ? VectorXd(P.Ai * z + s - P.bi) : VectorXd(0);

    double comp = 0.0;
    if (mi > 0) comp += s.dot(lam);
    for (int j : blo) comp += p(j) * wl(j);
    for (int j : bhi) comp += q(j) * wu(j);
    const double mu = (npairs > 0) ? comp / static_cast<double>(npairs) : 0.0;

    const double obj = 0.5 * z.dot(P.H.selfadjointView<Eigen::Upper>() * z) + P.f.dot(z) + P.c0;
    double dual_scale = 1.0 + P.f.lpNorm<Eigen::Infinity>();
    if (P.H.nonZeros() > 0) dual_scale = std::max(dual_scale, (P.H * z).lpNorm<Eigen::Infinity>());
    if (me > 0) dual_scale = std::max(dual_scale, (P.Ae.transpose() * y).lpNorm<Eigen::Infinity>());
    if (mi > 0) dual_scale = std::max(dual_scale, (P.Ai.transpose() * lam).lpNorm<Eigen::Infinity>());
    const double nrd = rd.lpNorm<Eigen::Infinity>() / dual_scale;
    const double nre = (me > 0) ? re.lpNorm<Eigen::Infinity>() / (1.0 + P.be.lpNorm<Eigen::Infinity>()) : 0.0;
    const double nri = (mi > 0) ? ri.lpNorm<Eigen::Infinity>() / (1.0 + P.bi.lpNorm<Eigen::Infinity>()) : 0.0;

    out.iterations = iter;
    out.res_primal = std::max(nre, nri);
    out.res_dual = nrd;
    out.mu = mu;
    out.z = z;
    out.y = y;
    out.lam = lam;
    out.objective = obj;

    if (nrd <= opt.tol_dual && nre <= opt.tol_primal && nri <= opt.tol_primal &&
        mu <= opt.tol_comp * (1.0 + std::abs(obj))) {
      out.converged = true;
      return out;
    }

    // Stall / divergence bookkeeping.
    const double merit = std::max({nrd, nre, nri, mu});
    if (merit < 0.9 * best_merit) {
      best_merit = merit;
      stall = 0;
    } else if (++stall > 12) {
      double dual_mag = std::max(y.size() ? y.lpNorm<Eigen::Infinity>() : 0.0,
                                 lam.size() ? lam.lpNorm<Eigen::Infinity>() : 0.0);
      out.looks_infeasible = (out.res_primal > 1e3 * opt.tol_primal) || dual_mag > 1e10;
      return out;
    }

    VectorXd dbox = VectorXd::Zero(n);
    for (int j : blo) dbox(j) += wl(j) / p(j);
    for (int j : bhi) dbox(j) += wu(j) / q(j);
    VectorXd slam = (mi > 0) ? VectorXd(s.cwiseQuotient(lam)) : VectorXd(0);

    SpMat K = assemble(dbox, slam);
    if (!scratch.analyzed) {
      scratch.ldlt.analyzePattern(K);
      scratch.analyzed = true;
    }
    scratch.ldlt.factorize(K);
    if (scratch.ldlt.info() != Eigen::Success) return out;

    if (pure_newton) {
      VectorXd rhs(N);
      rhs.head(n) = -rd;
      if (me > 0) rhs.segment(n, me) = -re;
      VectorXd d = solve_kkt(K, rhs);
      z += d.head(n);
      if (me > 0) y += d.segment(n, me);
      continue;
    }

    // Affine predictor.
    auto build_rhs = [&](const VectorXd& cs, const VectorXd& cl, const VectorXd& cu) {
      VectorXd rhs(N);
      VectorXd r1 = -rd;
      for (int j : blo) r1(j) -= cl(j) / p(j);
      for (int j : bhi) r1(j) += cu(j) / q(j);
      rhs.head(n) = r1;
      if (me > 0) rhs.segment(n, me) = -re;
      if (mi > 0) rhs.segment(n + me, mi) = -ri + cs.cwiseQuotient(lam);
      return rhs;
    };

    VectorXd cs_aff = (mi > 0) ? VectorXd(s.cwiseProduct(lam)) : VectorXd(0);
    VectorXd cl_aff = VectorXd::Zero(n), cu_aff = VectorXd::Zero(n);
    for (int j : blo) cl_aff(j) = p(j) * wl(j);
    for (int j : bhi) cu_aff(j) = q(j) * wu(j);

    VectorXd d_aff = solve_kkt(K, build_rhs(cs_aff, cl_aff, cu_aff));
    VectorXd dz_aff = d_aff.head(n);
    VectorXd dlam_aff = (mi > 0) ? VectorXd(d_aff.segment(n + me, mi)) : VectorXd(0);
    VectorXd ds_aff(mi), dwl_aff = VectorXd::Zero(n), dwu_aff = VectorXd::Zero(n);
    for (int i = 0; i < mi; ++i) ds_aff(i) = (-cs_aff(i) - s(i) * dlam_aff(i)) / lam(i);
    for (int j : blo) dwl_aff(j) = (-cl_aff(j) - wl(j) * dz_aff(j)) / p(j);
    for (int j : bhi) dwu_aff(j) = (-cu_aff(j) + wu(j) * dz_aff(j)) / q(j);

    auto step_len = [&](const VectorXd& dz, const VectorXd& ds, const VectorXd& dlam,
                        const VectorXd& dwl, const VectorXd& dwu, double& ap, double& ad) {
      ap = 1.0;
      ad = 1.0;
      for (int i = 0; i < mi; ++i) {
        if (ds(i) < 0) ap = std::min(ap, -s(i) / ds(i));
        if (dlam(i) < 0) ad = std::min(ad, -lam(i) / dlam(i));
      }
      for (int j : blo) {
        if (dz(j) < 0) ap = std::min(ap, -p(j) / dz(j));
        if (dwl(j) < 0) ad = std::min(ad, -wl(j) / dwl(j));
      }
      for (int j : bhi) {
        if (dz(j) > 0) ap = std::min(ap, q(j) / dz(j));
        if (dwu(j) < 0) ad = std::min(ad, -wu(j) / dwu(j));
      }
    };

    double ap_aff, ad_aff;
    step_len(dz_aff, ds_aff, dlam_aff, dwl_aff, dwu_aff, ap_aff, ad_aff);

    double comp_aff = 0.0;
    for (int i = 0; i < mi; ++i)
      comp_aff += (s(i) + ap_aff * ds_aff(i)) * (lam(i) + ad_aff * dlam_aff(i));
    for (int j : blo)
      comp_aff += (p(j) + ap_aff * dz_aff(j)) * (wl(j) + ad_aff * dwl_aff(j));
    for (int j : bhi)
      comp_aff += (q(j) - ap_aff * dz_aff(j)) * (wu(j) + ad_aff * dwu_aff(j));
    const double mu_aff = comp_aff / static_cast<double>(npairs);
    double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3.0);
    sigma = std::clamp(sigma, 1e-8, 0.999);
    const double tau = sigma * mu;

    // Corrector.
    VectorXd cs = cs_aff, cl = cl_aff, cu = cu_aff;
    for (int i = 0; i < mi; ++i) cs(i) += ds_aff(i) * dlam_aff(i) - tau;
    for (int j : blo) cl(j) += dz_aff(j) * dwl_aff(j) - tau;
    for (int j : bhi) cu(j) += -dz_aff(j) * dwu_aff(j) - tau;

    VectorXd d = solve_kkt(K, build_rhs(cs, cl, cu));
    VectorXd dz = d.head(n);
    VectorXd dy = (me > 0) ? VectorXd(d.segment(n, me)) : VectorXd(0);
    VectorXd dlam = (mi > 0) ? VectorXd(d.segment(n + me, mi)) : VectorXd(0);
    VectorXd ds(mi), dwl = VectorXd::Zero(n), dwu = VectorXd::Zero(n);
    for (int i = 0; i < mi; ++i) ds(i) = (-cs(i) - s(i) * dlam(i)) / lam(i);
    for (int j : blo) dwl(j) = (-cl(j) - wl(j) * dz(j)) / p(j);
    for (int j : bhi) dwu(j) = (-cu(j) + wu(j) * dz(j)) / q(j);

    double ap, ad;
    step_len(dz, ds, dlam, dwl, dwu, ap, ad);
    const double eta = (mu < 1e-6) ? 0.9999 : 0.995;
    ap = std::min(1.0, eta * ap);
    ad = std::min(1.0, eta * ad);

    z += ap * dz;
    if (me > 0) y += ad * dy;
    if (mi > 0) {
      s += ap * ds;
      lam += ad * dlam;
    }
    for (int j : blo) wl(j) += ad * dwl(j);
    for (int j : bhi) wu(j) += ad * dwu(j);
  }
  return out;
}

// Phase-1 elastic feasibility problem: min sum of violations.
Reduced make_phase1(const Reduced& P) {
  const int n = static_cast<int>(P.f.size());
  const int me = static_cast<int>(P.be.size());
  const int mi = static_cast<int>(P.bi.size());
  const int n1 = n + mi + 2 * me;
  Reduced F;
  F.f = VectorXd::Zero(n1);
  F.f.segment(n, mi + 2 * me).setOnes();
  F.c0 = 0.0;
  F.H.resize(n1, n1);

  std::vector<Eigen::Triplet<double>> te, ti;
  for (int k = 0; k < P.Ae.outerSize(); ++k)
    for (SpMat::InnerIterator it(P.Ae, k); it; ++it)
      te.emplace_back(it.row(), it.col(), it.value());
  for (int r = 0; r < me; ++r) {
    te.emplace_back(r, n + mi + r, 1.0);
    te.emplace_back(r, n + mi + me + r, -1.0);
  }
  F.Ae.resize(me, n1);
  F.Ae.setFromTriplets(te.begin(), te.end());
  F.be = P.be;

  for (int k = 0; k < P.Ai.outerSize(); ++k)
    for (SpMat::InnerIterator it(P.Ai, k); it; ++it)
      ti.emplace_back(it.row(), it.col(), it.value());
  for (int r = 0; r < mi; ++r) ti.emplace_back(r, n + r, -1.0);
  F.Ai.resize(mi, n1);
  F.Ai.setFromTriplets(ti.begin(), ti.end());
  F.bi = P.bi;

  F.lb = VectorXd::Constant(n1, 0.0);
  F.ub = VectorXd::Constant(n1, kInf);
  F.lb.head(n) = P.lb;
  F.ub.head(n) = P.ub;
  return F;
}

}  // namespace

// ---------------------------------------------------------------------------
// Internal entry point shared with branch-and-bound
// ---------------------------------------------------------------------------

ReducedSolve solve_reduced(const Miqp& p, const Eigen::VectorXd& lb, const Eigen::VectorXd& ub,
                           bool aggressive, const QpOptions& opt) {
  ReducedSolve rs;
  PresolveWork w = presolve_bounds(p, lb, ub, aggressive);
  if (w.infeasible) {
    rs.status = QpStatus::Infeasible;
    return rs;
  }
  Reduced R = build_reduced(p, w);
  const int nr = static_cast<int>(R.f.size());

  if (nr == 0) {
    rs.status = QpStatus::Optimal;
    rs.z = R.z_fixed;
    rs.objective = R.c0;
    rs.iterations = 0;
    return rs;
  }

  IpmResult res = ipm_solve(R, opt);
  rs.iterations = res.iterations;

  if (!res.converged) {
    // Confirm or refute feasibility with an elastic phase-1 LP.
    Reduced F = make_phase1(R);
    QpOptions o1 = opt;
    o1.tol_comp = 1e-10;
    o1.tol_primal = 1e-9;
    o1.tol_dual = 1e-9;
    IpmResult f1 = ipm_solve(F, o1);
    rs.iterations += f1.iterations;
    const double viol = f1.objective;
    if (f1.converged && viol > opt.feas_tol) {
      rs.status = QpStatus::Infeasible;
      return rs;
    }
    // Feasible (or unknown): retry phase-2 with more headroom.
    QpOptions o2 = opt;
    o2.max_iters = 2 * opt.max_iters;
    IpmResult res2 = ipm_solve(R, o2);
    rs.iterations += res2.iterations;
    if (!res2.converged && !f1.converged) {
      rs.status = QpStatus::NumericalError;
      return rs;
    }
    if (!res2.converged) {
      // Phase-1 says feasible but phase-2 stalls: accept only mild stalls.
      if (res2.res_primal < 1e-6 && res2.mu < 1e-6)
        res = res2;
      else {
        rs.status = QpStatus::NumericalError;
        return rs;
      }
    } else {
      res = res2;
    }
  }

  // Postsolve: scatter reduced solution into original coordinates.
  rs.status = QpStatus::Optimal;
  rs.z = R.z_fixed;
  for (int jr = 0; jr < nr; ++jr) rs.z(R.var_of[jr]) = res.z(jr);
  rs.objective = res.objective;
  rs.y_eq = VectorXd::Zero(p.num_eq());
  rs.lam_in = VectorXd::Zero(p.num_in());
  for (int r = 0; r < static_cast<int>(R.eq_of.size()); ++r)
    rs.y_eq(R.eq_of[r]) = res.y(r) / R.eq_scale(r);
  for (int r = 0; r < static_cast<int>(R.in_of.size()); ++r)
    rs.lam_in(R.in_of[r]) = std::max(0.0, res.lam(r) / R.in_scale(r));
  rs.res_primal = res.res_primal;
  rs.res_dual = res.res_dual;
  rs.mu = res.mu;
  return rs;
}

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

namespace {

QpSolution finish_solution(const Miqp& p, const ReducedSolve& rs) {
  QpSolution sol;
  sol.iterations = rs.iterations;
  switch (rs.status) {
    case QpStatus::Infeasible:
      sol.status = QpStatus::Infeasible;
      return sol;
    case QpStatus::NumericalError:
      sol.status = QpStatus::NumericalError;
      return sol;
    case QpStatus::Optimal:
      break;
  }
  sol.status = QpStatus::Optimal;
  sol.z = rs.z;
  sol.y_eq = rs.y_eq;
  sol.lam_in = rs.lam_in;
  sol.objective = p.objective_at(rs.z);

  // KKT residual on the original problem. Components of fixed variables
  // (lb == ub) are absorbable by bound multipliers and excluded.
  const int n = p.num_vars();
  VectorXd grad = p.f;
  if (p.H.nonZeros() > 0) grad += p.H * rs.z;
  if (p.num_eq() > 0) grad += p.A_eq.transpose() * rs.y_eq;
  if (p.num_in() > 0) grad += p.A_in.transpose() * rs.lam_in;
  double stat = 0.0;
  for (int j = 0; j < n; ++j) {
    if (p.ub(j) - p.lb(j) <= 1e-11) continue;
    double g = grad(j);
    const double at_lo = rs.z(j) - p.lb(j), at_hi = p.ub(j) - rs.z(j);
    if (std::isfinite(p.lb(j)) && at_lo <= 1e-7 && g > 0) g = 0.0;  // bound multiplier
    if (std::isfinite(p.ub(j)) && at_hi <= 1e-7 && g < 0) g = 0.0;
    stat = std::max(stat, std::abs(g));
  }
  double viol = p.max_violation(rs.z);
  double comp = 0.0;
  for (int r = 0; r < p.num_in(); ++r) {
    const double slack = p.b_in(r) - p.A_in.row(r).dot(rs.z.transpose());
    comp = std::max(comp, std::abs(slack * rs.lam_in(r)));
  }
  sol.kkt_residual = std::max({stat, viol, comp});
  return sol;
}

}  // namespace

QpSolution solve_qp_bounded(const Miqp& qp, const Eigen::VectorXd& lb,
                            const Eigen::VectorXd& ub, const QpOptions& opt) {
  qp.validate(qp.num_vars() <= 256);
  ReducedSolve rs = solve_reduced(qp, lb, ub, /*aggressive=*/false, opt);
  return finish_solution(qp, rs);
}

QpSolution solve_qp(const Miqp& qp, const QpOptions& opt) {
  return solve_qp_bounded(qp, qp.lb, qp.ub, opt);
}

}  // namespace gnepmpc
