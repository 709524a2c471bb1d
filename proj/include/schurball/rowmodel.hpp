#pragma once

#include <array>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "schurball/agler.hpp"
#include "schurball/colligation.hpp"
#include "schurball/series.hpp"

namespace schurball {

// ---------------------------------------------------------------------------
// Row contractions T = [T_1 ... T_d] : X^d -> X.
// ---------------------------------------------------------------------------

struct RowContraction {
  int d = 1;
  Index n = 0;
  std::vector<Matrix> t;

  Matrix row() const {
    Matrix m(n, d * n);
    for (int k = 0; k < d; ++k) m.middleCols(k * n, n) = t[k];
    return m;
  }
};

inline RowContraction make_row_contraction(int d, std::vector<Matrix> blocks,
                                           double tol = kResidualTol) {
  if (d < 1 || static_cast<int>(blocks.size()) != d)
    throw dimension_mismatch("row contraction: needs d blocks");
  Index n = blocks[0].rows();
  for (const auto& m : blocks) {
    if (m.rows() != n || m.cols() != n)
      throw dimension_mismatch("row contraction: blocks must be square");
    check_finite(m, "row contraction");
  }
  RowContraction rc{d, n, std::move(blocks)};
  if (op_norm(rc.row()) > 1.0 + tol)
    throw not_row_contraction("row contraction: row norm exceeds one");
  return rc;
}

struct DefectData {
  Matrix d_t;        // dn x dn
  Matrix d_tstar;    // n x n
  Subspace range_t;      // defect space inside X^d
  Subspace range_tstar;  // defect space inside X
};

inline DefectData defects(const RowContraction& t, double rank_tol = kRankTol) {
  Matrix row = t.row();
  Matrix gt = identity(t.d * t.n) - row.adjoint() * row;
  Matrix gts = identity(t.n) - row * row.adjoint();
  DefectData dd;
  dd.d_t = sqrtm_psd(gt, std::max(rank_tol, 1e-9));
  dd.d_tstar = sqrtm_psd(gts, std::max(rank_tol, 1e-9));
  dd.range_t = orthonormal_range(dd.d_t, rank_tol);
  dd.range_tstar = orthonormal_range(dd.d_tstar, rank_tol);
  return dd;
}

// Unitary dilation colligation in the defect bases.
inline Colligation halmos(const RowContraction& t,
                          double rank_tol = kRankTol) {
  DefectData dd = defects(t, rank_tol);
  Index p = dd.range_t.dim(), q = dd.range_tstar.dim();
  Matrix bstack = dd.d_t * dd.range_t.basis;             // dn x p
  Matrix c = dd.range_tstar.basis.adjoint() * dd.d_tstar;  // q x n
  Matrix dmat =
      -dd.range_tstar.basis.adjoint() * t.row() * dd.range_t.basis;  // q x p
  std::vector<Matrix> a(t.d), b(t.d);
  for (int k = 0; k < t.d; ++k) {
    a[k] = t.t[k].adjoint();
    b[k] = bstack.middleRows(k * t.n, t.n);
  }
  return Colligation{t.d, t.n, p, q, std::move(a), std::move(b), std::move(c),
                     std::move(dmat)};
}

inline Matrix char_eval(const RowContraction& t, const Point& z) {
  return transfer_eval(halmos(t), z);
}

inline CommSeries char_series(const RowContraction& t, int order) {
  return transfer_taylor(halmos(t), order);
}

// True iff every singular value is below 1 - tol (vacuously true when the
// value space is zero-dimensional).
inline bool purity_check(const Matrix& s0, double tol = kResidualTol) {
  if (s0.rows() == 0 || s0.cols() == 0) return true;
  return op_norm(s0) < 1.0 - tol;
}

// ---------------------------------------------------------------------------
// Noncommutative moments of the characteristic function.
// ---------------------------------------------------------------------------

namespace detail {

// String-ordered products T^w and T^{* w}.
inline Matrix word_product(const std::vector<Matrix>& blocks, const Word& w) {
  Index n = blocks.empty() ? 0 : blocks[0].rows();
  Matrix m = identity(n);
  for (int l : w.letters) m *= blocks[l - 1];
  return m;
}

inline Matrix word_product_star(const std::vector<Matrix>& blocks,
                                const Word& w) {
  Index n = blocks.empty() ? 0 : blocks[0].rows();
  Matrix m = identity(n);
  for (int l : w.letters) m *= blocks[l - 1].adjoint();
  return m;
}

inline Eigen::VectorXd singular_values(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return Eigen::VectorXd(0);
  return m.jacobiSvd().singularValues();
}

inline double vec_gap(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  if (a.size() == 0) return 0.0;
  return (a - b).norm();
}

}  // namespace detail

// Word coefficients of the characteristic function in the defect bases.
// For a word w with last letter j and prefix v, the coefficient is the
// compression of D_{T*} T^{* v} I_j^* D_T; the empty word gives the
// compression of -T.
inline NcSeries nc_char_moments(const RowContraction& t, int max_len,
                                double rank_tol = kRankTol) {
  DefectData dd = defects(t, rank_tol);
  Index p = dd.range_t.dim(), q = dd.range_tstar.dim();
  Matrix cb = dd.range_tstar.basis.adjoint() * dd.d_tstar;  // q x n
  Matrix bstack = dd.d_t * dd.range_t.basis;                // dn x p

  NcSeries out;
  out.d = t.d;
  out.rows = q;
  out.cols = p;
  out.order = max_len;
  out.set(Word{}, -dd.range_tstar.basis.adjoint() * t.row() * dd.range_t.basis);

  // Star products grow by one letter on the right as the prefix extends.
  std::map<Word, Matrix, LengthLex> star;
  star[Word{}] = identity(t.n);
  for (int len = 1; len <= max_len; ++len)
    for (const auto& w : words_of_length(t.d, len))
      star[w] = star[w.drop_last()] * t.t[w.last() - 1].adjoint();

  for (int len = 1; len <= max_len; ++len)
    for (const auto& w : words_of_length(t.d, len)) {
      int j = w.last();
      Matrix bj = bstack.middleRows((j - 1) * t.n, t.n);  // n x p
      out.set(w, cb * star[w.drop_last()] * bj);
    }
  return out;
}

struct ExpandedKey {
  Word v, vp;
  int k = 1, j = 1;
  bool operator<(const ExpandedKey& o) const {
    LengthLex ll;
    if (!(v == o.v)) return ll(v, o.v);
    if (!(vp == o.vp)) return ll(vp, o.vp);
    if (k != o.k) return k < o.k;
    return j < o.j;
  }
};

struct MomentKey {
  Word vp;
  int j = 1;
  bool operator<(const MomentKey& o) const {
    LengthLex ll;
    if (!(vp == o.vp)) return ll(vp, o.vp);
    return j < o.j;
  }
};

struct MomentTable {
  int order = 0;
  Matrix constant;  // q x p compression of -T
  std::map<MomentKey, Matrix> nc;         // (prefix, last letter) -> q x p
  std::map<ExpandedKey, Matrix> expanded;  // (v, v', k, j) -> p x p
  double crosscheck_residual = 0.0;
  double hermitian_residual = 0.0;
};

// Expanded moment family: compressions of D_T I_k T^v T^{* v'} I_j^* D_T,
// enumerated for |v| + |v'| <= order, cross-checked against the word
// coefficients of the structured-kernel blocks of the dilation.
inline MomentTable expanded_moments(const RowContraction& t, int order,
                                    double rank_tol = kRankTol) {
  MomentTable table;
  table.order = order;
  DefectData dd = defects(t, rank_tol);
  Index p = dd.range_t.dim();
  Matrix bstack = dd.d_t * dd.range_t.basis;  // dn x p
  table.constant =
      -dd.range_tstar.basis.adjoint() * t.row() * dd.range_t.basis;

  NcSeries moments = nc_char_moments(t, order, rank_tol);
  for (const auto& [w, c] : moments.coeffs) {
    if (w.empty()) continue;
    table.nc[MomentKey{w.drop_last(), w.last()}] = c;
  }

  // Forward and star word products.
  std::map<Word, Matrix, LengthLex> fwd, star;
  for (const auto& w : words_up_to(t.d, order)) {
    fwd[w] = detail::word_product(t.t, w);
    star[w] = detail::word_product_star(t.t, w);
  }
  auto bj = [&](int j) { return bstack.middleRows((j - 1) * t.n, t.n); };

  for (int lv = 0; lv <= order; ++lv)
    for (int lvp = 0; lv + lvp <= order; ++lvp)
      for (const auto& v : words_of_length(t.d, lv))
        for (const auto& vp : words_of_length(t.d, lvp))
          for (int k = 1; k <= t.d; ++k)
            for (int j = 1; j <= t.d; ++j)
              table.expanded[ExpandedKey{v, vp, k, j}] =
                  bj(k).adjoint() * fwd[v] * star[vp] * bj(j);

  // Hermitian symmetry: adjoint swaps and transposes the key.
  for (const auto& [key, mat] : table.expanded) {
    ExpandedKey swapped{key.vp.transpose(), key.v.transpose(), key.j, key.k};
    auto it = table.expanded.find(swapped);
    if (it != table.expanded.end())
      table.hermitian_residual = std::max(
          table.hermitian_residual, (mat.adjoint() - it->second).norm());
  }

  // Cross-check: kernel-block word coefficients of the dilation colligation,
  // Phi_ij[alpha, beta] = H_{alpha^T}^* I_i I_j^* H_beta, must match the
  // mapped expanded moments.
  Colligation hl = halmos(t, rank_tol);
  Matrix astack = hl.a_stack();
  std::map<Word, Matrix, LengthLex> h;  // dn x p coefficients of (I-AZ)^{-1}B
  h[Word{}] = hl.b_stack();
  for (int len = 1; len <= order; ++len)
    for (const auto& w : words_of_length(t.d, len))
      h[w] = astack *
             h[w.drop_first()].middleRows((w.first() - 1) * t.n, t.n);
  auto map_alpha = [&](const Word& alpha, int i) {
    // (first letter, remaining word with i appended)
    if (alpha.empty()) return std::pair<int, Word>{i, Word{}};
    return std::pair<int, Word>{alpha.first(), alpha.drop_first().append(i)};
  };
  auto map_beta = [&](const Word& beta, int j) {
    if (beta.empty()) return std::pair<int, Word>{j, Word{}};
    return std::pair<int, Word>{beta.last(), beta.drop_last().prepend(j)};
  };
  for (int la = 0; la <= order; ++la)
    for (int lb = 0; la + lb <= order; ++lb)
      for (const auto& alpha : words_of_length(t.d, la))
        for (const auto& beta : words_of_length(t.d, lb))
          for (int i = 1; i <= t.d; ++i)
            for (int j = 1; j <= t.d; ++j) {
              Matrix phi =
                  h[alpha.transpose()]
                      .middleRows((i - 1) * t.n, t.n)
                      .adjoint() *
                  h[beta].middleRows((j - 1) * t.n, t.n);
              auto [khat, v] = map_alpha(alpha, i);
              auto [jhat, vp] = map_beta(beta, j);
              const Matrix& exp_m =
                  table.expanded.at(ExpandedKey{v, vp, khat, jhat});
              table.crosscheck_residual = std::max(
                  table.crosscheck_residual, (phi - exp_m).norm());
            }
  (void)p;
  return table;
}

// ---------------------------------------------------------------------------
// Classification of row contractions.
// ---------------------------------------------------------------------------

struct RowClassification {
  bool pure = false;
  bool cnc = false;
  bool strongly_cc = false;
  bool cc = false;
  bool commutative = false;
  bool stabilized = true;
  bool routes_agree = true;
  Index m1_dim = 0;
  Index m2_dim = 0;
  double max_commutator = 0.0;
};

namespace detail {

struct GrowingRank {
  Matrix basis;  // orthonormal columns spanning everything added so far
  Index rank = 0;
  void add(const Matrix& cols, double rank_tol) {
    Matrix cat(cols.rows(), basis.cols() + cols.cols());
    if (basis.cols() > 0)
      cat << basis, cols;
    else
      cat = cols;
    basis = orthonormal_range(cat, rank_tol).basis;
    rank = basis.cols();
  }
};

}  // namespace detail

inline RowClassification classify_row(const RowContraction& t,
                                      double tol = kResidualTol,
                                      double rank_tol = kRankTol) {
  RowClassification cls;
  for (int i = 0; i < t.d; ++i)
    for (int j = i + 1; j < t.d; ++j)
      cls.max_commutator = std::max(
          cls.max_commutator, (t.t[i] * t.t[j] - t.t[j] * t.t[i]).norm());
  cls.commutative = cls.max_commutator <= tol;

  DefectData dd = defects(t, rank_tol);
  Colligation hl = halmos(t, rank_tol);
  cls.pure = purity_check(hl.D, tol);

  if (t.n == 0) {
    cls.cnc = cls.strongly_cc = cls.cc = true;
    return cls;
  }

  cls.cnc = span_closure(dd.range_tstar, t.t, rank_tol).dim() == t.n;

  int cap = 2 * static_cast<int>(t.n) + t.d;
  std::vector<Matrix> tstar(t.d);
  for (int k = 0; k < t.d; ++k) tstar[k] = t.t[k].adjoint();
  CommSeries wstar = resolvent_taylor_comm(tstar, cap);
  CommSeries xn = xn_coefficients(t.t, cap);
  // Ordered commutative powers T_1^{m_1} ... T_d^{m_d}.
  std::map<MultiIndex, Matrix, GradedLex> tpow;
  tpow[mi_zero(t.d)] = identity(t.n);
  for (int deg = 1; deg <= cap; ++deg)
    for (const auto& m : multi_indices_of_degree(t.d, deg))
      for (int k = 0; k < t.d; ++k)
        if (m[k] > 0) {
          tpow[m] = t.t[k] * tpow[mi_bump(m, k, -1)];
          break;
        }

  // Kernel routes accumulate adjoints of coefficient operators (the rank of
  // the stack is the codimension of the joint kernel); span routes
  // accumulate the dual generator columns.
  detail::GrowingRank m1_kernel, m1_span;
  detail::GrowingRank m2_kernel, m2_span;
  bool all_flat = false;
  int flat_degrees = 0;
  int reached = 0;
  for (int deg = 0; deg <= cap && !all_flat; ++deg) {
    reached = deg;
    std::array<Index, 4> before{m1_kernel.rank, m1_span.rank, m2_kernel.rank,
                                m2_span.rank};
    for (const auto& m : multi_indices_of_degree(t.d, deg)) {
      Matrix obs_row = dd.d_tstar * wstar.at(m);  // n x n
      Matrix pow_span = tpow.at(m) * dd.d_tstar;  // n x n
      m1_kernel.add(obs_row.adjoint(), rank_tol);
      m1_span.add(pow_span, rank_tol);
      m2_kernel.add(obs_row.adjoint(), rank_tol);
      m2_span.add(pow_span, rank_tol);
      // First-kind rows D_T X_m^* I_i, span generators I_i^* X_m D_T.
      Matrix xm = xn.at(m);
      for (int i = 0; i < t.d; ++i) {
        Matrix row1 = dd.d_t * xm.adjoint().middleCols(i * t.n, t.n);
        m1_kernel.add(row1.adjoint(), rank_tol);
        m1_span.add(xm.middleRows(i * t.n, t.n) * dd.d_t, rank_tol);
      }
      // Second-kind rows D_T sum_k X_{m-e_k}^* I_k for degree >= 1.
      if (deg >= 1) {
        Matrix acc = Matrix::Zero(t.d * t.n, t.n);
        Matrix accspan = Matrix::Zero(t.n, t.d * t.n);
        for (int k = 0; k < t.d; ++k) {
          if (m[k] == 0) continue;
          Matrix xprev = xn.at(mi_bump(m, k, -1));
          acc += xprev.adjoint().middleCols(k * t.n, t.n);
          accspan += xprev.middleRows(k * t.n, t.n);
        }
        m2_kernel.add((dd.d_t * acc).adjoint(), rank_tol);
        m2_span.add(accspan * dd.d_t, rank_tol);
      }
    }
    std::array<Index, 4> after{m1_kernel.rank, m1_span.rank, m2_kernel.rank,
                               m2_span.rank};
    flat_degrees = (deg > 0 && before == after) ? flat_degrees + 1 : 0;
    all_flat = flat_degrees >= t.d;
  }
  // Never silent: if the degree cap is hit without d consecutive flat
  // degrees, stabilization is reported only when the last degree was flat.
  cls.stabilized = all_flat || (reached == cap && flat_degrees >= 1);

  cls.m1_dim = t.n - m1_kernel.rank;
  cls.m2_dim = t.n - m2_kernel.rank;
  cls.cc = cls.m1_dim == 0;
  cls.strongly_cc = cls.m2_dim == 0;
  cls.routes_agree = (m1_span.rank == m1_kernel.rank) &&
                     (m2_span.rank == m2_kernel.rank);
  return cls;
}

// ---------------------------------------------------------------------------
// Equivalence of tuples, coincidence of characteristic data.
// ---------------------------------------------------------------------------

// Unitary W with W T_i = R_i W for all i (so W T_i W^* = R_i).  A returned
// witness is verified; absence is heuristic.
inline std::optional<Matrix> equiv_intertwiner(const RowContraction& t,
                                               const RowContraction& r,
                                               double tol = kResidualTol,
                                               int restarts = 8,
                                               std::uint64_t seed = 4321) {
  if (t.d != r.d) throw dimension_mismatch("equiv_intertwiner: d differs");
  if (t.n != r.n) return std::nullopt;
  Index n = t.n;
  if (n == 0) return Matrix(0, 0);
  Index nn = n * n;
  Matrix m(2 * t.d * nn, nn);
  Matrix in = identity(n);
  for (int k = 0; k < t.d; ++k) {
    m.middleRows(2 * k * nn, nn) =
        kron(t.t[k].transpose(), in) - kron(in, r.t[k]);
    // A unitary solution also intertwines the adjoints; the extra rows
    // prune non-unitary directions from the nullspace.
    m.middleRows((2 * k + 1) * nn, nn) =
        kron(t.t[k].conjugate(), in) - kron(in, r.t[k].adjoint());
  }
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  double smax = sv.size() ? sv(0) : 0.0;
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > kRankTol * std::max(1.0, smax)) ++rank;
  if (rank == nn) return std::nullopt;  // only the zero solution
  Matrix ns = svd.matrixV().rightCols(nn - rank);

  double scale = res_scale({t.row().norm(), r.row().norm()});
  Rng rng(seed);
  for (int attempt = 0; attempt < std::max(1, restarts); ++attempt) {
    Vector c(ns.cols());
    if (attempt == 0)
      c.setOnes();
    else
      for (Index i = 0; i < c.size(); ++i) c(i) = rng.cgauss();
    Vector x = ns * c;
    for (int it = 0; it < 100; ++it) {
      Matrix w = Eigen::Map<Matrix>(x.data(), n, n);
      Matrix wu = polar_unitary(w);
      double res = 0.0;
      for (int k = 0; k < t.d; ++k)
        res = std::max(res, (wu * t.t[k] - r.t[k] * wu).norm() / scale);
      if (res <= tol) return wu;
      Vector y = Eigen::Map<Vector>(wu.data(), nn);
      x = ns * (ns.adjoint() * y);
      if (x.norm() < 1e-14) break;
    }
  }
  return std::nullopt;
}

struct CoincidenceWitness {
  Matrix alpha;  // output-side unitary
  Matrix beta;   // input-side unitary
  double residual = 0.0;
};

// Unitaries alpha, beta with SA_i = alpha SB_i beta^* across all samples.
// Optional paired square kernel samples (KA_i = Gamma KB_i Gamma^* with
// Gamma = diag(alpha, I_d (x) beta)) join the same alternation.
inline std::optional<CoincidenceWitness> coincidence(
    const std::vector<Matrix>& sa, const std::vector<Matrix>& sb,
    double tol = kResidualTol, int restarts = 8, int max_iter = 200,
    const std::vector<Matrix>* ka = nullptr,
    const std::vector<Matrix>* kb = nullptr, int d_for_kernel = 0,
    std::uint64_t seed = 777, double* best_residual_out = nullptr) {
  if (sa.size() != sb.size() || sa.empty())
    throw dimension_mismatch("coincidence: sample lists must align");
  Index q = sa[0].rows(), p = sa[0].cols();
  if (sb[0].rows() != q || sb[0].cols() != p) return std::nullopt;
  if (ka && (!kb || ka->size() != kb->size()))
    throw dimension_mismatch("coincidence: kernel samples must align");

  double scale = 1.0;
  for (const auto& s : sa) scale = std::max(scale, s.norm());
  for (const auto& s : sb) scale = std::max(scale, s.norm());
  // Sound invariant screen: singular values are preserved exactly.
  for (size_t i = 0; i < sa.size(); ++i) {
    if (detail::vec_gap(detail::singular_values(sa[i]),
                        detail::singular_values(sb[i])) > 1e-6 * scale)
      return std::nullopt;
  }
  if (ka)
    for (size_t i = 0; i < ka->size(); ++i) {
      Eigen::SelfAdjointEigenSolver<Matrix> ea(
          0.5 * ((*ka)[i] + (*ka)[i].adjoint()));
      Eigen::SelfAdjointEigenSolver<Matrix> eb(
          0.5 * ((*kb)[i] + (*kb)[i].adjoint()));
      if ((ea.eigenvalues() - eb.eigenvalues()).norm() >
          1e-6 * res_scale({(*ka)[i].norm(), (*kb)[i].norm()}))
        return std::nullopt;
    }
  if (q == 0 || p == 0) {
    CoincidenceWitness w{identity(q), identity(p), 0.0};
    return w;
  }

  int d = d_for_kernel;
  auto gamma = [&](const Matrix& alpha, const Matrix& beta) {
    Matrix g = Matrix::Zero(q + d * p, q + d * p);
    g.topLeftCorner(q, q) = alpha;
    for (int k = 0; k < d; ++k)
      g.block(q + k * p, q + k * p, p, p) = beta;
    return g;
  };
  auto residual_of = [&](const Matrix& alpha, const Matrix& beta) {
    double res = 0.0;
    for (size_t i = 0; i < sa.size(); ++i)
      res = std::max(res,
                     (sa[i] - alpha * sb[i] * beta.adjoint()).norm() / scale);
    if (ka) {
      Matrix g = gamma(alpha, beta);
      for (size_t i = 0; i < ka->size(); ++i)
        res = std::max(
            res, ((*ka)[i] - g * (*kb)[i] * g.adjoint()).norm() /
                     res_scale({(*ka)[i].norm(), (*kb)[i].norm()}));
    }
    return res;
  };

  Rng rng(seed);
  // Warm starts: alpha SB_i = SA_i beta is linear in (alpha, beta), and for
  // unitary Gamma the kernel relation KA Gamma = Gamma KB is linear too, so
  // near-null vectors of the stacked system give candidate betas.
  std::vector<Matrix> warm;
  {
    Index rows_theta = static_cast<Index>(sa.size()) * q * p;
    Index gdim = q + d * p;
    Index rows_kernel = ka ? static_cast<Index>(ka->size()) * gdim * gdim : 0;
    Matrix sys = Matrix::Zero(rows_theta + rows_kernel, q * q + p * p);
    for (size_t i = 0; i < sa.size(); ++i) {
      sys.block(static_cast<Index>(i) * q * p, 0, q * p, q * q) =
          kron(sb[i].transpose(), identity(q));
      sys.block(static_cast<Index>(i) * q * p, q * q, q * p, p * p) =
          -kron(identity(p), sa[i]);
    }
    if (ka) {
      Matrix embed = Matrix::Zero(gdim * gdim, q * q + p * p);
      for (Index r = 0; r < q; ++r)
        for (Index c = 0; c < q; ++c)
          embed(r + gdim * c, r + q * c) = 1.0;
      for (int k = 0; k < d; ++k)
        for (Index i = 0; i < p; ++i)
          for (Index j = 0; j < p; ++j)
            embed(q + k * p + i + gdim * (q + k * p + j),
                  q * q + i + p * j) = 1.0;
      for (size_t s = 0; s < ka->size(); ++s) {
        Matrix sylv = kron(identity(gdim), (*ka)[s]) -
                      kron((*kb)[s].transpose(), identity(gdim));
        sys.middleRows(rows_theta + static_cast<Index>(s) * gdim * gdim,
                       gdim * gdim) = sylv * embed;
      }
    }
    Eigen::BDCSVD<Matrix> svd(sys, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    double smax = sv.size() ? sv(0) : 0.0;
    Index rank = 0;
    for (Index i = 0; i < sv.size(); ++i)
      if (sv(i) > kRankTol * std::max(1.0, smax)) ++rank;
    Index nulldim = q * q + p * p - rank;
    Matrix ns = svd.matrixV().rightCols(std::max<Index>(nulldim, 1));
    std::vector<Vector> seeds;
    for (Index c = 0; c < std::min<Index>(ns.cols(), 3); ++c)
      seeds.push_back(ns.col(ns.cols() - 1 - c));
    for (int extra = 0; nulldim > 1 && extra < 3; ++extra) {
      Vector coeff(ns.cols());
      for (Index i = 0; i < coeff.size(); ++i) coeff(i) = rng.cgauss();
      seeds.push_back(ns * coeff);
    }
    // Alternate between the unitary manifold and the nullspace: any unitary
    // pair inside the nullspace is a genuine witness.
    for (Vector x : seeds) {
      for (int it = 0; it < 60; ++it) {
        Matrix a0 = Eigen::Map<Matrix>(x.data(), q, q);
        Matrix b0 = Eigen::Map<Matrix>(x.data() + q * q, p, p);
        if (a0.norm() < 1e-12 || b0.norm() < 1e-12) break;
        Matrix au = polar_unitary(a0), bu = polar_unitary(b0);
        double res = residual_of(au, bu);
        if (res <= tol) {
          if (best_residual_out) *best_residual_out = res;
          return CoincidenceWitness{au, bu, res};
        }
        if (it == 59) {
          warm.push_back(bu);
          break;
        }
        Vector y(q * q + p * p);
        Eigen::Map<Matrix>(y.data(), q, q) = au;
        Eigen::Map<Matrix>(y.data() + q * q, p, p) = bu;
        x = ns * (ns.adjoint() * y);
      }
    }
  }
  std::optional<CoincidenceWitness> bestw;
  double best = std::numeric_limits<double>::infinity();
  int total = std::max(1, restarts) + static_cast<int>(warm.size());
  for (int attempt = 0; attempt < total; ++attempt) {
    Matrix beta;
    if (attempt < static_cast<int>(warm.size()))
      beta = warm[attempt];
    else if (attempt == static_cast<int>(warm.size()))
      beta = identity(p);
    else
      beta = rng.unitary(p);
    Matrix alpha = identity(q);
    for (int it = 0; it < max_iter; ++it) {
      // Alpha step: all one-sided pairs (LHS * beta-ish, RHS).
      std::vector<std::pair<Matrix, Matrix>> apairs;
      for (size_t i = 0; i < sa.size(); ++i)
        apairs.push_back({sa[i] * beta, sb[i]});
      if (ka)
        for (size_t i = 0; i < ka->size(); ++i) {
          const Matrix& kka = (*ka)[i];
          const Matrix& kkb = (*kb)[i];
          // Cross blocks only; the diagonal blocks are certified by the
          // residual check rather than linearized around a stale iterate.
          for (int k = 0; k < d; ++k)
            apairs.push_back({kka.block(0, q + k * p, q, p) * beta,
                              kkb.block(0, q + k * p, q, p)});
        }
      Index cols = 0;
      for (const auto& pr : apairs) cols += pr.first.cols();
      Matrix la(q, cols), ra(q, cols);
      Index at = 0;
      for (const auto& pr : apairs) {
        la.middleCols(at, pr.first.cols()) = pr.first;
        ra.middleCols(at, pr.first.cols()) = pr.second;
        at += pr.first.cols();
      }
      alpha = procrustes(la, ra);

      // Beta step.
      std::vector<std::pair<Matrix, Matrix>> bpairs;
      for (size_t i = 0; i < sa.size(); ++i)
        bpairs.push_back({sa[i].adjoint() * alpha, sb[i].adjoint()});
      if (ka)
        for (size_t i = 0; i < ka->size(); ++i) {
          const Matrix& kka = (*ka)[i];
          const Matrix& kkb = (*kb)[i];
          for (int k = 0; k < d; ++k)
            bpairs.push_back(
                {kka.block(0, q + k * p, q, p).adjoint() * alpha,
                 kkb.block(0, q + k * p, q, p).adjoint()});
          for (int i2 = 0; i2 < d; ++i2)
            for (int j2 = 0; j2 < d; ++j2)
              bpairs.push_back(
                  {kka.block(q + i2 * p, q + j2 * p, p, p) * beta,
                   kkb.block(q + i2 * p, q + j2 * p, p, p)});
        }
      cols = 0;
      for (const auto& pr : bpairs) cols += pr.first.cols();
      Matrix lb(p, cols), rb(p, cols);
      at = 0;
      for (const auto& pr : bpairs) {
        lb.middleCols(at, pr.first.cols()) = pr.first;
        rb.middleCols(at, pr.first.cols()) = pr.second;
        at += pr.first.cols();
      }
      beta = procrustes(lb, rb);

      double res = residual_of(alpha, beta);
      if (res < best) {
        best = res;
        bestw = CoincidenceWitness{alpha, beta, res};
      }
      if (res <= tol) {
        if (best_residual_out) *best_residual_out = res;
        return bestw;
      }
    }
  }
  if (best_residual_out) *best_residual_out = best;
  if (bestw && bestw->residual <= tol) return bestw;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Characteristic triple and its equivalence.
// ---------------------------------------------------------------------------

struct CharTriple {
  RowContraction t;
  Colligation theta;        // dilation colligation in defect bases
  ModelGeometry geometry;   // model subspaces and the corner X
  RowClassification cls;
};

inline CharTriple characteristic_triple(const RowContraction& t,
                                        double tol = kResidualTol,
                                        double rank_tol = kRankTol) {
  CharTriple tri;
  tri.t = t;
  tri.cls = classify_row(t, tol, rank_tol);
  if (!tri.cls.cc)
    throw not_closely_connected(
        "characteristic_triple: tuple is not closely connected");
  tri.theta = halmos(t, rank_tol);
  tri.geometry = model_subspaces(tri.theta, tol, rank_tol);
  return tri;
}

struct TripleEquivReport {
  bool equivalent = false;
  bool sound_negative = false;  // an exact invariant differs
  double witness_residual = std::numeric_limits<double>::infinity();
  Matrix alpha, beta, w_state;
  std::map<std::string, double> residuals;
};

inline TripleEquivReport triple_equiv(const RowContraction& t,
                                      const RowContraction& r,
                                      double tol = kResidualTol,
                                      int restarts = 8,
                                      double rank_tol = kRankTol) {
  if (t.d != r.d) throw dimension_mismatch("triple_equiv: d differs");
  TripleEquivReport rep;
  CharTriple ta = characteristic_triple(t, std::max(tol, 1e-9), rank_tol);
  CharTriple tb = characteristic_triple(r, std::max(tol, 1e-9), rank_tol);
  if (t.n != r.n || ta.theta.p != tb.theta.p || ta.theta.q != tb.theta.q ||
      ta.geometry.d_perp.dim() != tb.geometry.d_perp.dim() ||
      ta.geometry.r_perp.dim() != tb.geometry.r_perp.dim()) {
    rep.sound_negative = true;
    return rep;
  }

  // Joint coincidence of the characteristic function and kernel samples.
  auto grid = sample_grid(t.d, 20);
  auto pair_grid = sample_pair_grid(t.d, 8);
  std::vector<Matrix> sa, sb, kka, kkb;
  BigKernelFactor bka{ta.theta}, bkb{tb.theta};
  for (const auto& z : grid) {
    sa.push_back(transfer_eval(ta.theta, z));
    sb.push_back(transfer_eval(tb.theta, z));
  }
  for (const auto& [z, w] : pair_grid) {
    kka.push_back(bka.k(z, w));
    kkb.push_back(bkb.k(z, w));
    kka.push_back(bka.k(z, z));
    kkb.push_back(bkb.k(z, z));
  }
  double coin_best = std::numeric_limits<double>::infinity();
  auto coin = coincidence(sa, sb, std::max(tol, 1e-8), restarts, 200, &kka,
                          &kkb, t.d, 777, &coin_best);
  rep.residuals["coincidence_best"] = coin_best;
  if (!coin) {
    // Exact-invariant mismatch inside coincidence gives a sound negative;
    // rerun the screen to distinguish it from a failed search.
    for (size_t i = 0; i < sa.size() && !rep.sound_negative; ++i) {
      if (detail::vec_gap(detail::singular_values(sa[i]),
                          detail::singular_values(sb[i])) >
          1e-6 * res_scale({sa[i].norm(), sb[i].norm()}))
        rep.sound_negative = true;
    }
    for (size_t i = 0; i < kka.size() && !rep.sound_negative; ++i) {
      Eigen::SelfAdjointEigenSolver<Matrix> ea(
          0.5 * (kka[i] + kka[i].adjoint()));
      Eigen::SelfAdjointEigenSolver<Matrix> eb(
          0.5 * (kkb[i] + kkb[i].adjoint()));
      if ((ea.eigenvalues() - eb.eigenvalues()).norm() >
          1e-6 * res_scale({kka[i].norm(), kkb[i].norm()}))
        rep.sound_negative = true;
    }
    return rep;
  }
  rep.alpha = coin->alpha;
  rep.beta = coin->beta;
  rep.residuals["coincidence"] = coin->residual;

  // State correspondence from kernel-factor alignment.
  Index n = t.n;
  Matrix gam = Matrix::Zero(ta.theta.q + t.d * ta.theta.p,
                            ta.theta.q + t.d * ta.theta.p);
  gam.topLeftCorner(ta.theta.q, ta.theta.q) = coin->alpha;
  for (int k = 0; k < t.d; ++k)
    gam.block(ta.theta.q + k * ta.theta.p, ta.theta.q + k * ta.theta.p,
              ta.theta.p, ta.theta.p) = coin->beta;
  Index rows_per = ta.theta.q + t.d * ta.theta.p;
  Matrix lhs(static_cast<Index>(grid.size()) * rows_per, n);
  Matrix rhs(static_cast<Index>(grid.size()) * rows_per, n);
  Index at = 0;
  for (const auto& z : grid) {
    lhs.middleRows(at, rows_per) = bka.g(z);
    rhs.middleRows(at, rows_per) = gam * bkb.g(z);
    at += rows_per;
  }
  Matrix w = n > 0 ? Matrix(lhs.bdcSvd(Eigen::ComputeThinU |
                                       Eigen::ComputeThinV)
                                .solve(rhs))
                   : Matrix(0, 0);
  Matrix wu = n > 0 ? polar_unitary(w) : Matrix(0, 0);
  rep.w_state = wu;
  rep.residuals["kernel_alignment"] =
      n > 0 ? (lhs * wu - rhs).norm() / res_scale({rhs.norm()}) : 0.0;

  // Compatibility of the free corners through the lifted state unitary.
  Matrix wlift = Matrix::Zero(t.d * n, t.d * n);
  for (int k = 0; k < t.d; ++k)
    wlift.block(k * n, k * n, n, n) = wu;
  const auto& ga = ta.geometry;
  const auto& gb = tb.geometry;
  double sub_res = 0.0;
  if (gb.d_sub.dim() > 0)
    sub_res = std::max(
        sub_res, ((identity(t.d * n) - ga.d_sub.projector()) * wlift *
                  gb.d_sub.basis)
                     .norm());
  if (gb.r_sub.dim() > 0 && n > 0)
    sub_res = std::max(
        sub_res,
        ((identity(n) - ga.r_sub.projector()) * wu * gb.r_sub.basis).norm());
  rep.residuals["subspace_alignment"] = sub_res;
  Matrix ud = ga.d_perp.basis.adjoint() * wlift * gb.d_perp.basis;
  Matrix ur = ga.r_perp.basis.adjoint() * wu * gb.r_perp.basis;
  rep.residuals["x_compat"] = (ga.x * ud - ur * gb.x).norm();
  double ud_unit =
      ud.cols() > 0 ? (ud.adjoint() * ud - identity(ud.cols())).norm() : 0.0;
  double ur_unit =
      ur.cols() > 0 ? (ur.adjoint() * ur - identity(ur.cols())).norm() : 0.0;
  rep.residuals["defect_rotation_unitarity"] = std::max(ud_unit, ur_unit);

  // Final certificate: the state unitary must intertwine the tuples.
  double cert = 0.0;
  double scale = res_scale({t.row().norm(), r.row().norm()});
  for (int k = 0; k < t.d; ++k)
    cert = std::max(cert, (t.t[k] * wu - wu * r.t[k]).norm() / scale);
  rep.residuals["intertwining"] = cert;
  rep.witness_residual = std::max(
      {cert, rep.residuals["kernel_alignment"], sub_res,
       rep.residuals["x_compat"], rep.residuals["defect_rotation_unitarity"]});
  if (rep.witness_residual <= std::max(tol, 1e-8)) {
    rep.equivalent = true;
    return rep;
  }
  // Fallback: direct search for an intertwiner.
  auto direct = equiv_intertwiner(r, t, std::max(tol, 1e-8), restarts);
  if (direct) {
    rep.equivalent = true;
    rep.w_state = *direct;
    double c2 = 0.0;
    for (int k = 0; k < t.d; ++k)
      c2 = std::max(c2,
                    ((*direct) * r.t[k] - t.t[k] * (*direct)).norm() / scale);
    rep.witness_residual = c2;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// The coisometric pair on the unit sphere.
// ---------------------------------------------------------------------------

struct SphericalExample {
  RowContraction t;
  Colligation theta;
  Complex l1, l2;
  RowClassification cls;

  Complex denom(const Point& z) const {
    return 1.0 - std::conj(z[0]) * l1 - std::conj(z[1]) * l2;
  }
  Matrix numerator(const Point& z) const {
    Matrix g(2, 1);
    g(0, 0) = std::conj(z[1]) - std::conj(l2);
    g(1, 0) = -(std::conj(z[0]) - std::conj(l1));
    return g;
  }
  Matrix kernel_closed(const Point& z, const Point& zeta) const {
    Matrix gz = numerator(z) / denom(z);
    Matrix gw = numerator(zeta) / denom(zeta);
    return gz * gw.adjoint();
  }
  // Residual of the polynomial factorization of den(z) conj(den(zeta))
  // into the six bilinear terms.
  double identity_residual(const Point& z, const Point& zeta) const {
    Complex z1 = std::conj(z[0]), z2 = std::conj(z[1]);
    Complex w1 = zeta[0], w2 = zeta[1];
    Complex a2 = z2 - std::conj(l2), b2 = w2 - l2;
    Complex a1 = z1 - std::conj(l1), b1 = w1 - l1;
    Complex rhs = a2 * b2 + a1 * b1 - z1 * w1 * a2 * b2 + z1 * w2 * a2 * b1 +
                  z2 * w1 * a1 * b2 - z2 * w2 * a1 * b1;
    Complex lhs = denom(z) * std::conj(denom(zeta));
    return std::abs(lhs - rhs);
  }
};

inline SphericalExample spherical_example(Complex l1, Complex l2,
                                          double tol = kResidualTol) {
  if (std::abs(std::norm(l1) + std::norm(l2) - 1.0) > tol)
    throw not_on_sphere("spherical_example: |l1|^2 + |l2|^2 must equal 1");
  SphericalExample ex;
  ex.l1 = l1;
  ex.l2 = l2;
  Matrix t1(1, 1), t2(1, 1);
  t1(0, 0) = l1;
  t2(0, 0) = l2;
  ex.t = make_row_contraction(2, {t1, t2}, tol);
  ex.theta = halmos(ex.t);
  ex.cls = classify_row(ex.t, tol);
  double gap = 0.0;
  for (const auto& [z, w] : sample_pair_grid(2, 50)) {
    gap = std::max(gap, (big_kernel_eval(ex.theta, z, w) -
                         ex.kernel_closed(z, w))
                            .cwiseAbs()
                            .maxCoeff());
  }
  if (gap >= 1e-10)
    throw error(
        "spherical_example: closed-form kernel disagrees with the "
        "colligation kernel");
  return ex;
}

}  // namespace schurball
