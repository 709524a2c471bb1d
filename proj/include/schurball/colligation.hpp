#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "schurball/matcore.hpp"
#include "schurball/sampling.hpp"
#include "schurball/series.hpp"

namespace schurball {

// Structured operator block [A B; C D] from state (+) input to
// d-fold state (+) output; A is stored as d state-to-state blocks,
// B as d input-to-state blocks.
struct Colligation {
  int d = 1;
  Index n = 0, p = 0, q = 0;
  std::vector<Matrix> A;  // d blocks, n x n
  std::vector<Matrix> B;  // d blocks, n x p
  Matrix C;               // q x n
  Matrix D;               // q x p

  Matrix a_stack() const {
    Matrix m(d * n, n);
    for (int k = 0; k < d; ++k) m.middleRows(k * n, n) = A[k];
    return m;
  }
  Matrix b_stack() const {
    Matrix m(d * n, p);
    for (int k = 0; k < d; ++k) m.middleRows(k * n, n) = B[k];
    return m;
  }
  // Full block operator, (dn+q) x (n+p).
  Matrix u_matrix() const {
    Matrix m(d * n + q, n + p);
    m.topLeftCorner(d * n, n) = a_stack();
    m.topRightCorner(d * n, p) = b_stack();
    m.bottomLeftCorner(q, n) = C;
    m.bottomRightCorner(q, p) = D;
    return m;
  }
  Matrix za(const Point& z) const {  // sum z_k A_k
    Matrix m = Matrix::Zero(n, n);
    for (int k = 0; k < d; ++k) m += z[k] * A[k];
    return m;
  }
  Matrix zb(const Point& z) const {  // sum z_k B_k
    Matrix m = Matrix::Zero(n, p);
    for (int k = 0; k < d; ++k) m += z[k] * B[k];
    return m;
  }
};

inline Colligation make_colligation(int d, std::vector<Matrix> a,
                                    std::vector<Matrix> b, Matrix c,
                                    Matrix dd) {
  if (d < 1 || static_cast<int>(a.size()) != d ||
      static_cast<int>(b.size()) != d)
    throw dimension_mismatch("colligation: needs d state and input blocks");
  Index n = a[0].rows();
  Index p = b[0].cols();
  Index q = c.rows();
  for (const auto& m : a)
    if (m.rows() != n || m.cols() != n)
      throw dimension_mismatch("colligation: A blocks must be n x n");
  for (const auto& m : b)
    if (m.rows() != n || m.cols() != p)
      throw dimension_mismatch("colligation: B blocks must be n x p");
  if (c.cols() != n) throw dimension_mismatch("colligation: C must be q x n");
  if (dd.rows() != q || dd.cols() != p)
    throw dimension_mismatch("colligation: D must be q x p");
  for (const auto& m : a) check_finite(m, "colligation A");
  for (const auto& m : b) check_finite(m, "colligation B");
  check_finite(c, "colligation C");
  check_finite(dd, "colligation D");
  return Colligation{d, n, p, q, std::move(a), std::move(b), std::move(c),
                     std::move(dd)};
}

inline Colligation colligation_from_u(int d, Index n, Index p, Index q,
                                      const Matrix& u) {
  if (u.rows() != d * n + q || u.cols() != n + p)
    throw dimension_mismatch("colligation_from_u: block shape");
  std::vector<Matrix> a(d), b(d);
  for (int k = 0; k < d; ++k) {
    a[k] = u.block(k * n, 0, n, n);
    b[k] = u.block(k * n, n, n, p);
  }
  return Colligation{d,
                     n,
                     p,
                     q,
                     std::move(a),
                     std::move(b),
                     u.block(d * n, 0, q, n),
                     u.block(d * n, n, q, p)};
}

// S(z) = D + C (I - Z(z) A)^{-1} Z(z) B at a point of the open unit ball.
inline Matrix transfer_eval(const Colligation& u, const Point& z) {
  if (static_cast<int>(z.size()) != u.d)
    throw dimension_mismatch("transfer_eval: point dimension");
  if (ball_radius(z) >= 1.0)
    throw point_outside_ball("transfer_eval: ||z|| >= 1");
  Matrix m = identity(u.n) - u.za(z);
  Eigen::FullPivLU<Matrix> lu(m);
  if (u.n > 0 && !lu.isInvertible())
    throw singular_resolvent("transfer_eval: I - Z(z)A singular");
  return u.D + u.C * lu.solve(u.zb(z));
}

// Taylor coefficients of S up to total degree order.
inline CommSeries transfer_taylor(const Colligation& u, int order) {
  // theta_m: coefficients of C (I - Z A)^{-1}.
  std::vector<Matrix> astar;  // unused; right recursion on q x n rows
  std::map<MultiIndex, Matrix, GradedLex> theta;
  theta[mi_zero(u.d)] = u.C;
  for (int deg = 1; deg <= order; ++deg)
    for (const auto& m : multi_indices_of_degree(u.d, deg)) {
      Matrix acc = Matrix::Zero(u.q, u.n);
      for (int k = 0; k < u.d; ++k) {
        if (m[k] == 0) continue;
        acc += theta[mi_bump(m, k, -1)] * u.A[k];
      }
      theta[m] = acc;
    }
  CommSeries s;
  s.d = u.d;
  s.rows = u.q;
  s.cols = u.p;
  s.order = order;
  s.set(mi_zero(u.d), u.D);
  for (int deg = 1; deg <= order; ++deg)
    for (const auto& m : multi_indices_of_degree(u.d, deg)) {
      Matrix acc = Matrix::Zero(u.q, u.p);
      for (int j = 0; j < u.d; ++j) {
        if (m[j] == 0) continue;
        acc += theta[mi_bump(m, j, -1)] * u.B[j];
      }
      s.set(m, acc);
    }
  return s;
}

// Coefficients of C (I - Z A)^{-1} as a q x n series.
inline CommSeries output_resolvent_taylor(const Colligation& u, int order) {
  if (u.n == 0) {
    CommSeries s;
    s.d = u.d;
    s.rows = u.q;
    s.cols = 0;
    s.order = order;
    s.set(mi_zero(u.d), u.C);
    return s;
  }
  return resolvent_taylor_comm(u.A, order, Side::right, &u.C);
}

// Generating coefficients of the sampled weak-metric domains.
// dom_output: g_m = sum_j I_j w_{m-e_j}(A^*) C^*  (dn x q, degree >= 1).
// dom_input:  h_m = sum_j w_{m-e_j}(A) B_j        (n x p,  degree >= 1).
inline Matrix weak_domain_coeff_output(const Colligation& u,
                                       const CommSeries& wstar,
                                       const MultiIndex& m) {
  Matrix g = Matrix::Zero(u.d * u.n, u.q);
  for (int j = 0; j < u.d; ++j) {
    if (m[j] == 0) continue;
    g.middleRows(j * u.n, u.n) +=
        wstar.at(mi_bump(m, j, -1)) * u.C.adjoint();
  }
  return g;
}

inline Matrix weak_domain_coeff_input(const Colligation& u,
                                      const CommSeries& w,
                                      const MultiIndex& m) {
  Matrix h = Matrix::Zero(u.n, u.p);
  for (int j = 0; j < u.d; ++j) {
    if (m[j] == 0) continue;
    h += w.at(mi_bump(m, j, -1)) * u.B[j];
  }
  return h;
}

struct SampledSpan {
  Subspace space;
  bool stabilized = true;
  Index coeff_dim = 0;  // dimension from the coefficient generating set
};

namespace detail {

// Orthonormal span of per-point generator blocks with prefix stabilization
// and a coefficient-generator cross-check.
template <typename GenFn, typename CoeffFn>
SampledSpan sampled_span(Index ambient, int d, Index n, GenFn&& gen,
                         CoeffFn&& coeff_gen, double rank_tol) {
  int count = std::max<int>(8, 4 * static_cast<int>(n) * d);
  auto grid = sample_grid(d, count);
  std::vector<Matrix> blocks;
  Index total_cols = 0;
  for (const auto& z : grid) {
    blocks.push_back(gen(z));
    total_cols += blocks.back().cols();
  }
  Matrix stacked(ambient, total_cols);
  Index c = 0;
  for (const auto& b : blocks) {
    stacked.middleCols(c, b.cols()) = b;
    c += b.cols();
  }
  SampledSpan out;
  out.space = orthonormal_range(stacked, rank_tol);
  Index prefix_cols = (3 * total_cols) / 4;
  Subspace prefix = orthonormal_range(stacked.leftCols(prefix_cols), rank_tol);
  out.stabilized = (prefix.dim() == out.space.dim());
  out.coeff_dim = coeff_gen();
  if (out.coeff_dim != out.space.dim()) out.stabilized = false;
  return out;
}

}  // namespace detail

// Sampled span of Z(zeta)^* (I - A^* Z(zeta)^*)^{-1} C^* blocks in the
// d-fold state space, cross-checked against coefficient generators.
inline SampledSpan weak_domain_output(const Colligation& u,
                                      double rank_tol = kRankTol) {
  if (u.n == 0) return SampledSpan{zero_subspace(0), true, 0};
  auto gen = [&](const Point& zeta) {
    Matrix res = (identity(u.n) - u.za(zeta).adjoint())
                     .fullPivLu()
                     .solve(u.C.adjoint());
    // Z(zeta)^* applied to the n x q block.
    Matrix out(u.d * u.n, u.q);
    for (int k = 0; k < u.d; ++k)
      out.middleRows(k * u.n, u.n) = std::conj(zeta[k]) * res;
    return out;
  };
  auto coeff = [&]() -> Index {
    std::vector<Matrix> astar(u.d);
    for (int k = 0; k < u.d; ++k) astar[k] = u.A[k].adjoint();
    int cap = 2 * static_cast<int>(u.n) + u.d;
    CommSeries wstar = resolvent_taylor_comm(astar, cap);
    Matrix acc(u.d * u.n, 0);
    Index rank = 0;
    int flat = 0;
    for (int deg = 1; deg <= cap; ++deg) {
      for (const auto& m : multi_indices_of_degree(u.d, deg)) {
        Matrix g = weak_domain_coeff_output(u, wstar, m);
        Matrix next(acc.rows(), acc.cols() + g.cols());
        next << acc, g;
        acc = std::move(next);
      }
      Index r = orthonormal_range(acc, rank_tol).dim();
      flat = (r == rank) ? flat + 1 : 0;
      rank = r;
      if (flat >= u.d || rank == u.d * u.n) break;
    }
    return rank;
  };
  return detail::sampled_span(u.d * u.n, u.d, u.n, gen, coeff, rank_tol);
}

// Sampled span of Z(zeta) (I - A Z(zeta))^{-1} B blocks in the state space.
inline SampledSpan weak_domain_input(const Colligation& u,
                                     double rank_tol = kRankTol) {
  if (u.n == 0) return SampledSpan{zero_subspace(0), true, 0};
  auto gen = [&](const Point& zeta) {
    return Matrix(
        (identity(u.n) - u.za(zeta)).fullPivLu().solve(u.zb(zeta)));
  };
  auto coeff = [&]() -> Index {
    int cap = 2 * static_cast<int>(u.n) + u.d;
    CommSeries w = resolvent_taylor_comm(u.A, cap);
    Matrix acc(u.n, 0);
    Index rank = 0;
    int flat = 0;
    for (int deg = 1; deg <= cap; ++deg) {
      for (const auto& m : multi_indices_of_degree(u.d, deg)) {
        Matrix h = weak_domain_coeff_input(u, w, m);
        Matrix next(acc.rows(), acc.cols() + h.cols());
        next << acc, h;
        acc = std::move(next);
      }
      Index r = orthonormal_range(acc, rank_tol).dim();
      flat = (r == rank) ? flat + 1 : 0;
      rank = r;
      if (flat >= u.d || rank == u.n) break;
    }
    return rank;
  };
  return detail::sampled_span(u.n, u.d, u.n, gen, coeff, rank_tol);
}

struct ColligationFlags {
  bool contraction = false;
  bool isometry = false;
  bool coisometry = false;
  bool unitary = false;
  bool observable = false;
  bool controllable = false;
  bool closely_connected = false;
  bool weakly_isometric = false;
  bool weakly_coisometric = false;
  bool weakly_unitary = false;
  bool spans_stabilized = true;
  std::map<std::string, double> residuals;
};

inline Subspace observability_span(const Colligation& u,
                                   double rank_tol = kRankTol) {
  std::vector<Matrix> ops(u.d);
  for (int k = 0; k < u.d; ++k) ops[k] = u.A[k].adjoint();
  return span_closure(orthonormal_range(u.C.adjoint(), rank_tol), ops,
                      rank_tol);
}

inline Subspace controllability_span(const Colligation& u,
                                     double rank_tol = kRankTol) {
  Matrix bside(u.n, u.d * u.p);
  for (int k = 0; k < u.d; ++k) bside.middleCols(k * u.p, u.p) = u.B[k];
  return span_closure(orthonormal_range(bside, rank_tol), u.A, rank_tol);
}

inline ColligationFlags classify(const Colligation& u,
                                 double tol = kResidualTol,
                                 double rank_tol = kRankTol) {
  ColligationFlags f;
  Matrix um = u.u_matrix();
  Index rows = um.rows(), cols = um.cols();
  double smax = op_norm(um);
  f.residuals["contraction_excess"] = std::max(0.0, smax - 1.0);
  f.contraction = smax <= 1.0 + tol;
  double iso_res =
      cols == 0 ? 0.0 : op_norm(um.adjoint() * um - identity(cols));
  double coiso_res =
      rows == 0 ? 0.0 : op_norm(um * um.adjoint() - identity(rows));
  f.residuals["isometry_residual"] = iso_res;
  f.residuals["coisometry_residual"] = coiso_res;
  f.isometry = iso_res <= tol;
  f.coisometry = coiso_res <= tol;
  f.unitary = f.isometry && f.coisometry;

  Subspace obs = observability_span(u, rank_tol);
  Subspace ctr = controllability_span(u, rank_tol);
  f.observable = obs.dim() == u.n;
  f.controllable = ctr.dim() == u.n;
  f.closely_connected = join(obs, ctr, rank_tol).dim() == u.n;
  f.residuals["observability_dim"] = static_cast<double>(obs.dim());
  f.residuals["controllability_dim"] = static_cast<double>(ctr.dim());

  SampledSpan dom_out = weak_domain_output(u, rank_tol);
  SampledSpan dom_in = weak_domain_input(u, rank_tol);
  f.spans_stabilized = dom_out.stabilized && dom_in.stabilized;
  f.residuals["weak_output_dim"] = static_cast<double>(dom_out.space.dim());
  f.residuals["weak_input_dim"] = static_cast<double>(dom_in.space.dim());

  // Weakly coisometric: U^* isometric on (sampled domain) (+) output space.
  {
    Index r = dom_out.space.dim();
    Matrix qd = Matrix::Zero(u.d * u.n + u.q, r + u.q);
    qd.topLeftCorner(u.d * u.n, r) = dom_out.space.basis;
    qd.bottomRightCorner(u.q, u.q) = identity(u.q);
    Matrix gap = qd.adjoint() * (identity(rows) - um * um.adjoint()) * qd;
    double res = op_norm(gap);
    f.residuals["weakly_coisometric_residual"] = res;
    f.weakly_coisometric = res <= tol;
  }
  // Weakly isometric: U isometric on (sampled domain) (+) input space.
  {
    Index r = dom_in.space.dim();
    Matrix qd = Matrix::Zero(u.n + u.p, r + u.p);
    qd.topLeftCorner(u.n, r) = dom_in.space.basis;
    qd.bottomRightCorner(u.p, u.p) = identity(u.p);
    Matrix gap = qd.adjoint() * (identity(cols) - um.adjoint() * um) * qd;
    double res = op_norm(gap);
    f.residuals["weakly_isometric_residual"] = res;
    f.weakly_isometric = res <= tol;
  }
  f.weakly_unitary = f.weakly_isometric && f.weakly_coisometric;
  return f;
}

// State-space unitary change of coordinates.
inline Colligation apply_state_unitary(const Colligation& u, const Matrix& w) {
  if (w.rows() != u.n || w.cols() != u.n)
    throw dimension_mismatch("apply_state_unitary: W shape");
  std::vector<Matrix> a(u.d), b(u.d);
  for (int k = 0; k < u.d; ++k) {
    a[k] = w * u.A[k] * w.adjoint();
    b[k] = w * u.B[k];
  }
  return Colligation{u.d, u.n, u.p, u.q, std::move(a), std::move(b),
                     u.C * w.adjoint(), u.D};
}

inline double equiv_residual(const Colligation& u1, const Colligation& u2,
                             const Matrix& w) {
  double scale = res_scale({u1.u_matrix().norm(), u2.u_matrix().norm()});
  double r = (u1.D - u2.D).norm();
  for (int k = 0; k < u1.d; ++k) {
    r = std::max(r, (w * u1.A[k] - u2.A[k] * w).norm());
    r = std::max(r, (w * u1.B[k] - u2.B[k]).norm());
  }
  r = std::max(r, (u2.C * w - u1.C).norm());
  return r / scale;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Unitary state-space witness W with (+W)A1 = A2 W, (+W)B1 = B2, C1 = C2 W,
// D1 = D2, if one is found.  A returned witness is verified (sound yes);
// absence is heuristic unless dimensions or D already rule it out.
inline std::optional<Matrix> colligation_equiv(const Colligation& u1,
                                               const Colligation& u2,
                                               double tol = kResidualTol,
                                               int restarts = 8,
                                               std::uint64_t seed = 1234) {
  if (u1.d != u2.d) throw dimension_mismatch("colligation_equiv: d differs");
  if (u1.n != u2.n || u1.p != u2.p || u1.q != u2.q) return std::nullopt;
  Index n = u1.n;
  double scale = res_scale({u1.u_matrix().norm(), u2.u_matrix().norm()});
  if ((u1.D - u2.D).norm() > tol * scale) return std::nullopt;
  if (n == 0) return Matrix(0, 0);

  // Linear constraints on vec(W) (column-major).
  Index nn = n * n;
  Index rows = u1.d * nn + u1.d * n * u1.p + u1.q * n;
  Matrix m = Matrix::Zero(rows, nn);
  Vector rhs = Vector::Zero(rows);
  Matrix in = identity(n);
  Index r0 = 0;
  for (int k = 0; k < u1.d; ++k) {  // W A1_k - A2_k W = 0
    m.middleRows(r0, nn) =
        kron(u1.A[k].transpose(), in) - kron(in, u2.A[k]);
    r0 += nn;
  }
  for (int k = 0; k < u1.d; ++k) {  // W B1_k = B2_k
    if (u1.p == 0) continue;
    m.middleRows(r0, n * u1.p) = kron(u1.B[k].transpose(), in);
    Matrix b2 = u2.B[k];
    rhs.segment(r0, n * u1.p) = Eigen::Map<Vector>(b2.data(), n * u1.p);
    r0 += n * u1.p;
  }
  if (u1.q > 0) {  // C2 W = C1
    m.middleRows(r0, u1.q * n) = kron(in, u2.C);
    Matrix c1 = u1.C;
    rhs.segment(r0, u1.q * n) = Eigen::Map<Vector>(c1.data(), u1.q * n);
  }

  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector xp = svd.solve(rhs);
  if ((m * xp - rhs).norm() > std::max(tol, 1e-8) * res_scale({rhs.norm()}))
    return std::nullopt;  // affine system inconsistent: no exact witness
  // Nullspace basis.
  Eigen::BDCSVD<Matrix> svdn(m, Eigen::ComputeFullV);
  const auto& sv = svdn.singularValues();
  double smax = sv.size() ? sv(0) : 0.0;
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > kRankTol * std::max(1.0, smax)) ++rank;
  Matrix ns = svdn.matrixV().rightCols(nn - rank);

  Rng rng(seed);
  double best = std::numeric_limits<double>::infinity();
  std::optional<Matrix> witness;
  for (int attempt = 0; attempt < std::max(1, restarts); ++attempt) {
    Vector x = xp;
    if (attempt > 0 && ns.cols() > 0) {
      Vector c(ns.cols());
      for (Index i = 0; i < c.size(); ++i) c(i) = rng.cgauss();
      x = xp + ns * c;
    }
    for (int it = 0; it < 60; ++it) {
      Matrix w = Eigen::Map<Matrix>(x.data(), n, n);
      Matrix wu = polar_unitary(w);
      Vector y = Eigen::Map<Vector>(wu.data(), nn);
      x = xp + (ns.cols() > 0 ? Matrix(ns * (ns.adjoint() * (y - xp)))
                              : Matrix(Vector::Zero(nn)));
      double r = equiv_residual(u1, u2, wu);
      if (r < best) {
        best = r;
        if (r <= tol) {
          witness = wu;
          break;
        }
      }
    }
    if (witness) break;
  }
  return witness;
}

}  // namespace schurball
