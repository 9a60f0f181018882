#include "gnepmpc/miqp.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace gnepmpc {

double Miqp::objective_at(const Eigen::VectorXd& z) const {
  double q = 0.0;
  if (H.nonZeros() > 0) q = 0.5 * z.dot(H.selfadjointView<Eigen::Upper>() * z);
  return q + f.dot(z) + obj_const;
}

double Miqp::max_violation(const Eigen::VectorXd& z) const {
  double v = 0.0;
  if (num_eq() > 0) v = (A_eq * z - b_eq).cwiseAbs().maxCoeff();
  if (num_in() > 0) v = std::max(v, (A_in * z - b_in).cwiseMax(0.0).maxCoeff());
  for (int j = 0; j < num_vars(); ++j) {
    if (std::isfinite(lb(j))) v = std::max(v, lb(j) - z(j));
    if (std::isfinite(ub(j))) v = std::max(v, z(j) - ub(j));
  }
  return v;
}

void Miqp::validate(bool check_psd) const {
  const int n = num_vars();
  if (H.rows() != n || H.cols() != n) throw std::invalid_argument("Miqp: H shape mismatch");
  if (lb.size() != n || ub.size() != n) throw std::invalid_argument("Miqp: bound size mismatch");
  if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != n))
    throw std::invalid_argument("Miqp: equality block mismatch");
  if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != n))
    throw std::invalid_argument("Miqp: inequality block mismatch");
  for (int j = 0; j < n; ++j) {
    if (std::isnan(lb(j)) || std::isnan(ub(j))) throw std::invalid_argument("Miqp: NaN bound");
  }
  std::vector<char> is_bin(n, 0);
  for (int b : binary_idx) {
    if (b < 0 || b >= n) throw std::invalid_argument("Miqp: binary index out of range");
    if (lb(b) < -1e-9 || ub(b) > 1.0 + 1e-9)
      throw std::invalid_argument("Miqp: binary variable bounds must lie in [0,1]");
    is_bin[b] = 1;
  }
  for (const auto& g : sos1_groups) {
    if (g.empty()) throw std::invalid_argument("Miqp: empty SOS1 group");
    for (int i : g)
      if (i < 0 || i >= n || !is_bin[i])
        throw std::invalid_argument("Miqp: SOS1 group must index binaries");
  }
  if (check_psd && n > 0 && H.nonZeros() > 0) {
    Eigen::MatrixXd Hd = Eigen::MatrixXd(H);
    Eigen::MatrixXd Hs = 0.5 * (Hd + Hd.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hs, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-9 * std::max(1.0, Hs.cwiseAbs().maxCoeff()))
      throw std::invalid_argument("Miqp: H is not positive semidefinite");
  }
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::FeasibleIncumbent: return "feasible-incumbent";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::NodeLimit: return "node-limit";
    case SolveStatus::NumericalError: return "numerical-error";
  }
  return "?";
}

void SolverOptions::validate() const {
  if (integrality_tol <= 0 || rel_gap_tol <= 0 || node_limit <= 0 || time_limit_s <= 0)
    throw std::invalid_argument("SolverOptions: tolerances and limits must be positive");
}

namespace {
void put(std::ostringstream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}
}  // namespace

std::string dump_miqp(const Miqp& p) {
  std::ostringstream os;
  os << "miqp 1\n";
  os << "nvars " << p.num_vars() << "\n";
  os << "objconst ";
  put(os, p.obj_const);
  os << "\n";
  os << "H " << p.H.nonZeros() << "\n";
  for (int k = 0; k < p.H.outerSize(); ++k)
    for (SpMat::InnerIterator it(p.H, k); it; ++it) {
      os << it.row() << " " << it.col() << " ";
      put(os, it.value());
      os << "\n";
    }
  os << "f " << p.f.size() << "\n";
  for (int i = 0; i < p.f.size(); ++i) {
    put(os, p.f(i));
    os << "\n";
  }
  auto rows = [&](const char* tag, const SpMat& A, const Eigen::VectorXd& b) {
    Eigen::SparseMatrix<double, Eigen::RowMajor> R = A;
    os << tag << " " << A.rows() << "\n";
    for (int r = 0; r < R.rows(); ++r) {
      os << R.innerVector(r).nonZeros();
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(R, r); it; ++it) {
        os << " " << it.col() << " ";
        put(os, it.value());
      }
      os << " rhs ";
      put(os, b(r));
      os << "\n";
    }
  };
  rows("eq", p.A_eq, p.b_eq);
  rows("in", p.A_in, p.b_in);
  os << "bounds " << p.num_vars() << "\n";
  for (int j = 0; j < p.num_vars(); ++j) {
    put(os, p.lb(j));
    os << " ";
    put(os, p.ub(j));
    os << "\n";
  }
  os << "binaries " << p.binary_idx.size() << "\n";
  for (int b : p.binary_idx) os << b << "\n";
  os << "sos1 " << p.sos1_groups.size() << "\n";
  for (const auto& g : p.sos1_groups) {
    os << g.size();
    for (int i : g) os << " " << i;
    os << "\n";
  }
  return os.str();
}

Miqp parse_miqp(const std::string& text) {
  std::istringstream is(text);
  std::string tok;
  auto expect = [&](const char* want) {
    is >> tok;
    if (tok != want) throw std::invalid_argument(std::string("parse_miqp: expected ") + want);
  };
  // strtod-based so that inf/-inf round-trip through the dump format
  auto rd = [&]() {
    is >> tok;
    if (!is) throw std::invalid_argument("parse_miqp: truncated input");
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str()) throw std::invalid_argument("parse_miqp: bad number '" + tok + "'");
    return v;
  };
  expect("miqp");
  int version;
  is >> version;
  if (version != 1) throw std::invalid_argument("parse_miqp: unsupported version");
  expect("nvars");
  int n;
  is >> n;
  if (!is || n < 0) throw std::invalid_argument("parse_miqp: bad nvars");
  Miqp p;
  expect("objconst");
  p.obj_const = rd();
  expect("H");
  long nnz;
  is >> nnz;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(nnz);
  for (long k = 0; k < nnz; ++k) {
    int i, j;
    is >> i >> j;
    trips.emplace_back(i, j, rd());
  }
  p.H.resize(n, n);
  p.H.setFromTriplets(trips.begin(), trips.end());
  expect("f");
  int nf;
  is >> nf;
  p.f.resize(nf);
  for (int i = 0; i < nf; ++i) p.f(i) = rd();
  auto rows = [&](const char* tag, SpMat& A, Eigen::VectorXd& b) {
    expect(tag);
    int m;
    is >> m;
    std::vector<Eigen::Triplet<double>> t;
    b.resize(m);
    for (int r = 0; r < m; ++r) {
      int cnt;
      is >> cnt;
      for (int k = 0; k < cnt; ++k) {
        int j;
        is >> j;
        t.emplace_back(r, j, rd());
      }
      expect("rhs");
      b(r) = rd();
    }
    A.resize(m, n);
    A.setFromTriplets(t.begin(), t.end());
  };
  rows("eq", p.A_eq, p.b_eq);
  rows("in", p.A_in, p.b_in);
  expect("bounds");
  int nb;
  is >> nb;
  p.lb.resize(nb);
  p.ub.resize(nb);
  for (int j = 0; j < nb; ++j) {
    p.lb(j) = rd();
    p.ub(j) = rd();
  }
  expect("binaries");
  int nbin;
  is >> nbin;
  p.binary_idx.resize(nbin);
  for (int k = 0; k < nbin; ++k) is >> p.binary_idx[k];
  expect("sos1");
  int ns;
  is >> ns;
  p.sos1_groups.resize(ns);
  for (int g = 0; g < ns; ++g) {
    int cnt;
    is >> cnt;
    p.sos1_groups[g].resize(cnt);
    for (int k = 0; k < cnt; ++k) is >> p.sos1_groups[g][k];
  }
  if (!is) throw std::invalid_argument("parse_miqp: truncated input");
  p.validate();
  return p;
}

}  // namespace gnepmpc
