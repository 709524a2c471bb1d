#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "schurball/errors.hpp"

namespace schurball {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using Index = Eigen::Index;

inline constexpr double kRankTol = 1e-10;
inline constexpr double kResidualTol = 1e-9;

inline void check_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) throw non_finite(what + ": non-finite entry");
}

// Largest singular value; 0 for empty matrices.
inline double op_norm(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  return m.jacobiSvd().singularValues()(0);
}

// Scale factor for relative residual tests.
inline double res_scale(std::initializer_list<double> norms) {
  double s = 1.0;
  for (double v : norms) s = std::max(s, v);
  return s;
}

inline Matrix identity(Index n) { return Matrix::Identity(n, n); }

// Orthonormal-columns subspace of an ambient coordinate space.
struct Subspace {
  Index ambient_dim = 0;
  Matrix basis;  // ambient_dim x dim, orthonormal columns

  Index dim() const { return basis.cols(); }
  Matrix projector() const { return basis * basis.adjoint(); }
  bool contains(const Matrix& vecs, double tol = kResidualTol) const {
    if (vecs.cols() == 0) return true;
    Matrix rem = vecs - basis * (basis.adjoint() * vecs);
    return rem.norm() <= tol * res_scale({vecs.norm()});
  }
};

inline Subspace zero_subspace(Index ambient) {
  return Subspace{ambient, Matrix::Zero(ambient, 0)};
}

inline Subspace full_subspace(Index ambient) {
  return Subspace{ambient, Matrix::Identity(ambient, ambient)};
}

// Deterministic column phases: largest-magnitude entry made real positive.
inline Matrix fix_column_phases(Matrix u) {
  for (Index j = 0; j < u.cols(); ++j) {
    Index imax = 0;
    double best = -1.0;
    for (Index i = 0; i < u.rows(); ++i) {
      double a = std::abs(u(i, j));
      if (a > best + 1e-15) {
        best = a;
        imax = i;
      }
    }
    if (best <= 0.0) continue;
    Complex ph = u(imax, j) / std::abs(u(imax, j));
    u.col(j) *= std::conj(ph);
  }
  return u;
}

// Orthonormal basis of the column span; rank cut at tol * sigma_max.
inline Subspace orthonormal_range(const Matrix& m, double tol = kRankTol) {
  if (m.cols() == 0 || m.rows() == 0) return zero_subspace(m.rows());
  check_finite(m, "orthonormal_range");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  double smax = sv.size() ? sv(0) : 0.0;
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol * smax && sv(i) > 0) ++rank;
  if (smax == 0.0) rank = 0;
  Subspace out{m.rows(), fix_column_phases(svd.matrixU().leftCols(rank))};
  return out;
}

inline Subspace join(const Subspace& a, const Subspace& b,
                     double tol = kRankTol) {
  if (a.ambient_dim != b.ambient_dim)
    throw dimension_mismatch("join: ambient dims differ");
  Matrix stacked(a.ambient_dim, a.dim() + b.dim());
  stacked << a.basis, b.basis;
  return orthonormal_range(stacked, tol);
}

inline Subspace complement(const Subspace& s, double tol = kRankTol) {
  if (s.dim() == 0) return full_subspace(s.ambient_dim);
  if (s.dim() == s.ambient_dim) return zero_subspace(s.ambient_dim);
  Matrix p = identity(s.ambient_dim) - s.projector();
  return orthonormal_range(p, tol);
}

// Hermitian PSD square root; residual post-condition ||S*S - H|| <= 1e-10 * max(1, ||H||).
inline Matrix sqrtm_psd(const Matrix& h, double tol = kRankTol) {
  if (h.rows() != h.cols()) throw dimension_mismatch("sqrtm_psd: not square");
  if (h.rows() == 0) return h;
  check_finite(h, "sqrtm_psd");
  double scale = res_scale({h.norm()});
  if ((h - h.adjoint()).norm() > tol * scale)
    throw not_hermitian("sqrtm_psd: input not Hermitian within tolerance");
  Matrix hs = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(hs);
  Eigen::VectorXd ev = es.eigenvalues();
  double emax = std::max(ev.cwiseAbs().maxCoeff(), 0.0);
  for (Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol * std::max(1.0, emax))
      throw indefinite_beyond_tolerance(
          "sqrtm_psd: negative eigenvalue beyond tolerance");
    // Clamp roundoff-sized eigenvalues so rank(sqrt) matches rank(input);
    // otherwise an O(eps) eigenvalue becomes an O(sqrt(eps)) direction.
    if (ev(i) < tol * std::max(1.0, emax)) ev(i) = 0;
  }
  Matrix s = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
             es.eigenvectors().adjoint();
  return 0.5 * (s + s.adjoint());
}

// Smallest closed span containing seed and invariant under each op.
inline Subspace span_closure(const Subspace& seed,
                             const std::vector<Matrix>& ops,
                             double tol = kRankTol) {
  for (const auto& op : ops)
    if (op.rows() != seed.ambient_dim || op.cols() != seed.ambient_dim)
      throw dimension_mismatch("span_closure: op shape vs ambient");
  Subspace cur = orthonormal_range(seed.basis, tol);
  cur.ambient_dim = seed.ambient_dim;
  for (Index iter = 0; iter <= seed.ambient_dim; ++iter) {
    Matrix stacked(seed.ambient_dim,
                   cur.dim() * (static_cast<Index>(ops.size()) + 1));
    Index c = 0;
    stacked.middleCols(c, cur.dim()) = cur.basis;
    c += cur.dim();
    for (const auto& op : ops) {
      stacked.middleCols(c, cur.dim()) = op * cur.basis;
      c += cur.dim();
    }
    Subspace next = orthonormal_range(stacked, tol);
    next.ambient_dim = seed.ambient_dim;
    if (next.dim() == cur.dim()) return next;
    cur = next;
  }
  return cur;
}

// Unitary W minimizing ||A - W*B||_F over unitaries (orthogonal Procrustes).
inline Matrix procrustes(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw dimension_mismatch("procrustes: shapes differ");
  Index m = a.rows();
  if (m == 0) return Matrix(0, 0);
  check_finite(a, "procrustes");
  check_finite(b, "procrustes");
  Matrix cross = a * b.adjoint();
  Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

// Unitary polar factor (falls back to identity directions on rank deficiency).
inline Matrix polar_unitary(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return Matrix(m.rows(), m.cols());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

}  // namespace schurball
