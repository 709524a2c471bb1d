#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "schurball/colligation.hpp"

namespace schurball {

// ---------------------------------------------------------------------------
// Structured kernel K(z,zeta) = G(z) G(zeta)^* with
//   G(z) = [ C (I - Z(z)A)^{-1} ; rows_i B^* (I - Z(z)^* A^*)^{-1} I_i ],
// a (q + d p) x n factor.  Blocks: K_S (q x q), Psi_k (q x p),
// Phi_ij (p x p).
// ---------------------------------------------------------------------------

struct BigKernelFactor {
  Colligation src;

  Matrix g(const Point& z) const {
    const auto& u = src;
    Matrix out(u.q + u.d * u.p, u.n);
    Matrix res = (identity(u.n) - u.za(z)).fullPivLu().solve(identity(u.n));
    out.topRows(u.q) = u.C * res;
    // rows_i = (I_i^* R(z) B)^* with R(z) = (I - A Z(z))^{-1}
    //        = I + A (I - Z A)^{-1} Z.
    Matrix rb = u.b_stack() + u.a_stack() * res * u.zb(z);  // R(z) B
    for (int i = 0; i < u.d; ++i)
      out.middleRows(u.q + i * u.p, u.p) =
          rb.middleRows(i * u.n, u.n).adjoint();
    return out;
  }

  Matrix k(const Point& z, const Point& zeta) const {
    return g(z) * g(zeta).adjoint();
  }

  Matrix zrow(const Point& z) const {
    Matrix m(src.n, src.d * src.n);
    for (int k = 0; k < src.d; ++k)
      m.middleCols(k * src.n, src.n) = z[k] * identity(src.n);
    return m;
  }

  Matrix k_schur(const Matrix& kk) const {
    return kk.topLeftCorner(src.q, src.q);
  }
  Matrix psi(const Matrix& kk, int k1) const {  // k1 is 1-based
    return kk.block(0, src.q + (k1 - 1) * src.p, src.q, src.p);
  }
  Matrix phi(const Matrix& kk, int i, int j) const {  // 1-based
    return kk.block(src.q + (i - 1) * src.p, src.q + (j - 1) * src.p, src.p,
                    src.p);
  }
};

inline Matrix big_kernel_eval(const Colligation& u, const Point& z,
                              const Point& zeta) {
  return BigKernelFactor{u}.k(z, zeta);
}

// ---------------------------------------------------------------------------
// Structured-kernel decomposition check.
// ---------------------------------------------------------------------------

struct AglerReport {
  double max_total = 0.0;       // full 2x2 block identity
  double max_kernel = 0.0;      // (1 - <z,zeta>) K_S = I - S(z) S(zeta)^*
  double max_difference = 0.0;  // S(z) - S(zeta) = sum (z_j - zeta_j) Psi_j
  double max_gram = 0.0;        // I - S(z)^* S(zeta) via Phi blocks
  int pairs = 0;
  bool pass = false;
};

inline AglerReport agler_verify(
    const Colligation& u, const std::vector<std::pair<Point, Point>>& pairs,
    double tol = kResidualTol) {
  BigKernelFactor bk{u};
  AglerReport rep;
  rep.pairs = static_cast<int>(pairs.size());
  for (const auto& [z, zeta] : pairs) {
    Matrix sz = transfer_eval(u, z);
    Matrix szeta = transfer_eval(u, zeta);
    Matrix kk = bk.k(z, zeta);

    Matrix lhs(u.q + u.p, u.q + u.p);
    lhs.topLeftCorner(u.q, u.q) = identity(u.q) - sz * szeta.adjoint();
    lhs.topRightCorner(u.q, u.p) = szeta - sz;
    lhs.bottomLeftCorner(u.p, u.q) = sz.adjoint() - szeta.adjoint();
    lhs.bottomRightCorner(u.p, u.p) = sz.adjoint() * szeta - identity(u.p);

    auto mmat = [&](const Point& w) {
      Matrix m = Matrix::Zero(u.q + u.d * u.p, u.q + u.p);
      m.topLeftCorner(u.q, u.q) = identity(u.q);
      for (int k = 0; k < u.d; ++k)
        m.block(u.q + k * u.p, u.q, u.p, u.p) = w[k] * identity(u.p);
      return m;
    };
    auto nmat = [&](const Point& w, int j) {
      Matrix m = Matrix::Zero(u.q + u.d * u.p, u.q + u.p);
      m.topLeftCorner(u.q, u.q) = std::conj(w[j]) * identity(u.q);
      m.block(u.q + j * u.p, u.q, u.p, u.p) = identity(u.p);
      return m;
    };
    Matrix rhs = mmat(z).adjoint() * kk * mmat(zeta);
    for (int j = 0; j < u.d; ++j)
      rhs -= nmat(z, j).adjoint() * kk * nmat(zeta, j);
    rep.max_total = std::max(rep.max_total, (lhs - rhs).norm());

    Complex ip = 0.0;
    for (int j = 0; j < u.d; ++j) ip += z[j] * std::conj(zeta[j]);
    Matrix ks = bk.k_schur(kk);
    rep.max_kernel = std::max(
        rep.max_kernel,
        ((1.0 - ip) * ks - (identity(u.q) - sz * szeta.adjoint())).norm());

    Matrix diff = Matrix::Zero(u.q, u.p);
    for (int j = 0; j < u.d; ++j)
      diff += (z[j] - zeta[j]) * bk.psi(kk, j + 1);
    rep.max_difference = std::max(rep.max_difference, (sz - szeta - diff).norm());

    Matrix gram = Matrix::Zero(u.p, u.p);
    for (int j = 0; j < u.d; ++j) gram += bk.phi(kk, j + 1, j + 1);
    for (int i = 0; i < u.d; ++i)
      for (int l = 0; l < u.d; ++l)
        gram -= std::conj(z[i]) * zeta[l] * bk.phi(kk, i + 1, l + 1);
    rep.max_gram = std::max(
        rep.max_gram, (identity(u.p) - sz.adjoint() * szeta - gram).norm());
  }
  double worst = std::max({rep.max_total, rep.max_kernel, rep.max_difference,
                           rep.max_gram});
  rep.pass = worst <= tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Gram check for the kernel-level isometry V.
// ---------------------------------------------------------------------------

struct VGenerator {
  Point zeta;
  Vector y;  // output-space coefficient
  Vector u;  // input-space coefficient
};

struct VReport {
  double gram_residual = 0.0;
  int generators = 0;
  bool pass = false;
};

// kernel(z, zeta): (q + d p) square block kernel; s(z): q x p values.
inline VReport v_isometry_check(
    const std::function<Matrix(const Point&, const Point&)>& kernel,
    const std::function<Matrix(const Point&)>& s, int d, Index q, Index p,
    const std::vector<VGenerator>& gens, double tol = kResidualTol) {
  VReport rep;
  rep.generators = static_cast<int>(gens.size());
  Index m = static_cast<Index>(gens.size());
  if (m == 0) {
    rep.pass = true;
    return rep;
  }
  std::vector<Matrix> kk(m * m);
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b)
      kk[a * m + b] = kernel(gens[a].zeta, gens[b].zeta);
  std::vector<Matrix> sval(m);
  for (Index a = 0; a < m; ++a) sval[a] = s(gens[a].zeta);

  auto dom_vec = [&](Index a, int i) {
    Vector v = Vector::Zero(q + d * p);
    v.head(q) = std::conj(gens[a].zeta[i]) * gens[a].y;
    v.segment(q + i * p, p) = gens[a].u;
    return v;
  };
  auto ran_vec = [&](Index a) {
    Vector v = Vector::Zero(q + d * p);
    v.head(q) = gens[a].y;
    for (int j = 0; j < d; ++j)
      v.segment(q + j * p, p) = gens[a].zeta[j] * gens[a].u;
    return v;
  };

  Matrix gdom(m, m), gran(m, m);
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b < m; ++b) {
      Complex acc = 0.0;
      for (int i = 0; i < d; ++i)
        acc += (dom_vec(a, i).adjoint() * kk[a * m + b] * dom_vec(b, i))(0);
      Vector ya = gens[a].y + sval[a] * gens[a].u;
      Vector yb = gens[b].y + sval[b] * gens[b].u;
      acc += (ya.adjoint() * yb)(0);
      gdom(a, b) = acc;

      Complex racc =
          (ran_vec(a).adjoint() * kk[a * m + b] * ran_vec(b))(0);
      Vector ua = sval[a].adjoint() * gens[a].y + gens[a].u;
      Vector ub = sval[b].adjoint() * gens[b].y + gens[b].u;
      racc += (ua.adjoint() * ub)(0);
      gran(a, b) = racc;
    }
  double scale = res_scale({gdom.norm(), gran.norm()});
  rep.gram_residual = (gdom - gran).norm() / scale;
  rep.pass = rep.gram_residual <= tol;
  return rep;
}

inline std::vector<VGenerator> default_v_generators(const Colligation& u,
                                                    int points) {
  std::vector<VGenerator> gens;
  auto grid = sample_grid(u.d, points);
  for (const auto& zeta : grid) {
    for (Index i = 0; i < u.q; ++i) {
      VGenerator g{zeta, Vector::Zero(u.q), Vector::Zero(u.p)};
      g.y(i) = 1.0;
      gens.push_back(std::move(g));
    }
    for (Index j = 0; j < u.p; ++j) {
      VGenerator g{zeta, Vector::Zero(u.q), Vector::Zero(u.p)};
      g.u(j) = 1.0;
      gens.push_back(std::move(g));
    }
  }
  return gens;
}

inline VReport v_isometry_check(const Colligation& u, int points = 12,
                                double tol = kResidualTol) {
  BigKernelFactor bk{u};
  return v_isometry_check(
      [&](const Point& z, const Point& zeta) { return bk.k(z, zeta); },
      [&](const Point& z) { return transfer_eval(u, z); }, u.d, u.q, u.p,
      default_v_generators(u, points), tol);
}

// ---------------------------------------------------------------------------
// Model-subspace geometry and the free contractive corner X.
// ---------------------------------------------------------------------------

struct ModelGeometry {
  Subspace d_sub;   // inside the d-fold state space
  Subspace r_sub;   // inside the state space
  Subspace d_perp;
  Subspace r_perp;
  Matrix x;         // r_perp.dim() x d_perp.dim() corner of A^*
  bool canonical = false;  // source unitary + closely connected
  std::map<std::string, double> residuals;
};

inline ModelGeometry model_subspaces(const Colligation& u,
                                     double tol = kResidualTol,
                                     double rank_tol = kRankTol) {
  ModelGeometry geo;
  Index n = u.n, dn = u.d * u.n;
  int count = std::max<int>(8, 4 * static_cast<int>(n) * u.d);
  auto grid = sample_grid(u.d, count);

  Matrix dstack(dn, static_cast<Index>(grid.size()) * (u.q + u.p));
  Matrix rstack(n, static_cast<Index>(grid.size()) * (u.q + u.p));
  Index c = 0;
  for (const auto& zeta : grid) {
    Matrix res = (identity(n) - u.za(zeta)).fullPivLu().solve(identity(n));
    Matrix res_star =
        (identity(n) - u.za(zeta).adjoint()).fullPivLu().solve(u.C.adjoint());
    Matrix rb = u.b_stack() + u.a_stack() * res * u.zb(zeta);  // (I-AZ)^{-1}B
    // D-part generators.
    for (int k = 0; k < u.d; ++k)
      dstack.block(k * n, c, n, u.q) = std::conj(zeta[k]) * res_star;
    dstack.middleCols(c + u.q, u.p) = rb;
    // R-part generators.
    rstack.middleCols(c, u.q) = res_star;
    rstack.middleCols(c + u.q, u.p) = res * u.zb(zeta);
    c += u.q + u.p;
  }
  geo.d_sub = orthonormal_range(dstack, rank_tol);
  geo.r_sub = orthonormal_range(rstack, rank_tol);
  Index prefix = (3 * dstack.cols()) / 4;
  bool stable =
      orthonormal_range(dstack.leftCols(prefix), rank_tol).dim() ==
          geo.d_sub.dim() &&
      orthonormal_range(rstack.leftCols(prefix), rank_tol).dim() ==
          geo.r_sub.dim();
  if (!stable)
    throw not_stabilized("model_subspaces: sampled rank did not stabilize");
  geo.d_perp = complement(geo.d_sub, rank_tol);
  geo.r_perp = complement(geo.r_sub, rank_tol);

  Matrix astar = u.a_stack().adjoint();  // n x dn
  geo.x = geo.r_perp.basis.adjoint() * astar * geo.d_perp.basis;

  double scale = res_scale({u.u_matrix().norm()});
  geo.residuals["input_off_d_perp"] =
      (u.b_stack().adjoint() * geo.d_perp.basis).norm() / scale;
  geo.residuals["state_d_perp_to_r"] =
      (geo.r_sub.basis.adjoint() * astar * geo.d_perp.basis).norm() / scale;
  geo.residuals["state_d_to_r_perp"] =
      (geo.r_perp.basis.adjoint() * astar * geo.d_sub.basis).norm() / scale;
  geo.residuals["output_off_r_perp"] =
      (geo.r_perp.basis.adjoint() * u.C.adjoint()).norm() / scale;

  Matrix um = u.u_matrix();
  bool unitary =
      op_norm(um.adjoint() * um - identity(um.cols())) <= tol &&
      op_norm(um * um.adjoint() - identity(um.rows())) <= tol;
  bool cc = join(observability_span(u, rank_tol),
                 controllability_span(u, rank_tol), rank_tol)
                .dim() == n;
  double offdiag = std::max({geo.residuals["input_off_d_perp"],
                             geo.residuals["state_d_perp_to_r"],
                             geo.residuals["state_d_to_r_perp"],
                             geo.residuals["output_off_r_perp"]});
  geo.canonical = unitary && cc && offdiag <= tol;
  if (geo.canonical && geo.x.rows() > 0 && geo.x.cols() > 0) {
    geo.residuals["x_isometry"] =
        (geo.x.adjoint() * geo.x - identity(geo.x.cols())).norm();
    geo.residuals["x_coisometry"] =
        (geo.x * geo.x.adjoint() - identity(geo.x.rows())).norm();
  }
  return geo;
}

// Rebuild a colligation from the model geometry with a chosen contractive
// corner: the action on the model subspace is kept, the corner from
// d_perp to r_perp is replaced by xhat.
inline Colligation tcfm_from_x(const Colligation& u, const ModelGeometry& geo,
                               const Matrix& xhat, double tol = kResidualTol) {
  if (xhat.rows() != geo.r_perp.dim() || xhat.cols() != geo.d_perp.dim())
    throw dimension_mismatch("tcfm_from_x: corner shape");
  if (op_norm(xhat) > 1.0 + tol)
    throw not_a_contraction("tcfm_from_x: corner norm exceeds one");
  Index n = u.n, dn = u.d * u.n;
  Matrix pd = geo.d_sub.projector();  // dn x dn
  Matrix astar_new = u.a_stack().adjoint() * pd +
                     geo.r_perp.basis * xhat * geo.d_perp.basis.adjoint();
  Matrix bstar_new = u.b_stack().adjoint() * pd;
  Matrix anew = astar_new.adjoint();  // dn x n
  Matrix bnew = bstar_new.adjoint();  // dn x p
  std::vector<Matrix> a(u.d), b(u.d);
  for (int k = 0; k < u.d; ++k) {
    a[k] = anew.middleRows(k * n, n);
    b[k] = bnew.middleRows(k * n, n);
  }
  (void)dn;
  return Colligation{u.d, u.n, u.p, u.q, std::move(a), std::move(b), u.C,
                     u.D};
}

// ---------------------------------------------------------------------------
// Functional-model verification.
// ---------------------------------------------------------------------------

enum class ModelKind { cfm, dcfm, tcfm };

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::cfm: return "cfm";
    case ModelKind::dcfm: return "dcfm";
    default: return "tcfm";
  }
}

struct FunctionalModelReport {
  ModelKind kind = ModelKind::cfm;
  bool pass = false;
  bool identities_ok = false;
  Index xcirc_dim = 0;
  ColligationFlags flags;
  std::map<std::string, double> residuals;
};

// Coefficients of (I - A Z(z))^{-1}, a dn x dn series.
inline CommSeries state_resolvent_big(const Colligation& u, int order) {
  CommSeries s;
  s.d = u.d;
  s.rows = s.cols = u.d * u.n;
  s.order = order;
  s.set(mi_zero(u.d), identity(u.d * u.n));
  Matrix astack = u.a_stack();
  for (int deg = 1; deg <= order; ++deg)
    for (const auto& m : multi_indices_of_degree(u.d, deg)) {
      Matrix acc = Matrix::Zero(u.d * u.n, u.d * u.n);
      for (int k = 0; k < u.d; ++k) {
        if (m[k] == 0) continue;
        acc += astack * s.at(mi_bump(m, k, -1)).middleRows(k * u.n, u.n);
      }
      s.set(m, acc);
    }
  return s;
}

// Compress to the closely-connected part; second member is the removed
// dimension.
inline std::pair<Colligation, Index> reduce_closely_connected(
    const Colligation& u, double rank_tol = kRankTol) {
  Subspace cc = join(observability_span(u, rank_tol),
                     controllability_span(u, rank_tol), rank_tol);
  Index removed = u.n - cc.dim();
  const Matrix& pb = cc.basis;  // n x r
  std::vector<Matrix> a(u.d), b(u.d);
  for (int k = 0; k < u.d; ++k) {
    a[k] = pb.adjoint() * u.A[k] * pb;
    b[k] = pb.adjoint() * u.B[k];
  }
  return {Colligation{u.d, cc.dim(), u.p, u.q, std::move(a), std::move(b),
                      u.C * pb, u.D},
          removed};
}

inline FunctionalModelReport functional_model_verify(
    const Colligation& u, ModelKind kind, int order = -1,
    double tol = kResidualTol) {
  FunctionalModelReport rep;
  rep.kind = kind;
  if (order < 0) order = std::max<int>(4, 2 * static_cast<int>(u.n));
  rep.flags = classify(u, tol);

  double scale = res_scale({u.u_matrix().norm()});
  auto& res = rep.residuals;

  // Output-side resolvent coefficients two ways.
  CommSeries theta_right = output_resolvent_taylor(u, order);
  CommSeries big = state_resolvent_big(u, order);
  CommSeries s_taylor = transfer_taylor(u, order);
  std::vector<Matrix> astar_blocks(u.d);
  for (int k = 0; k < u.d; ++k) astar_blocks[k] = u.A[k].adjoint();
  CommSeries wstar =
      u.n > 0 ? resolvent_taylor_comm(astar_blocks, order)
              : CommSeries{u.d, 0, 0, order, {}};
  CommSeries w = u.n > 0 ? resolvent_taylor_comm(u.A, order)
                         : CommSeries{u.d, 0, 0, order, {}};

  double gleason_primal = 0.0, gleason_dual = 0.0, gleason_transfer = 0.0;
  double act_state_out = 0.0, act_state_in = 0.0;
  double act_boundary_out = 0.0, act_boundary_in = 0.0, act_feedthrough = 0.0;
  Matrix bstack = u.b_stack();
  Matrix astack = u.a_stack();

  // Coefficient stack for the joint kernel (uncontrolled, unobserved part).
  std::vector<Matrix> kernel_rows;
  for (const auto& m : multi_indices_up_to(u.d, order)) {
    int deg = mi_degree(m);
    // Left route: theta_m = C w_m(A) with w from the n x n resolvent.
    Matrix theta_left = u.n > 0 ? Matrix(u.C * w.at(m)) : Matrix(u.C);
    kernel_rows.push_back(theta_left);
    for (int i = 0; i < u.d; ++i) {
      // Rows of the conjugate-analytic part: B^* big_m^* I_i.
      Matrix row = bstack.adjoint() *
                   big.at(m).adjoint().middleCols(i * u.n, u.n);
      kernel_rows.push_back(row);
    }
    if (deg >= 1) {
      gleason_primal = std::max(
          gleason_primal, (theta_left - theta_right.at(m)).norm() / scale);
      // Dual: B^* big_m^* = sum_k B^* big_{m-e_k}^* I_k A^*.
      Matrix lhs_dual = bstack.adjoint() * big.at(m).adjoint();
      Matrix rhs_dual = Matrix::Zero(u.p, u.d * u.n);
      for (int k = 0; k < u.d; ++k) {
        if (m[k] == 0) continue;
        rhs_dual += bstack.adjoint() *
                    big.at(mi_bump(m, k, -1)).adjoint().middleCols(k * u.n,
                                                                   u.n) *
                    astack.adjoint();
      }
      gleason_dual =
          std::max(gleason_dual, (lhs_dual - rhs_dual).norm() / scale);
      // Transfer coefficients from the left route vs transfer_taylor.
      Matrix s_left = Matrix::Zero(u.q, u.p);
      for (int j = 0; j < u.d; ++j) {
        if (m[j] == 0) continue;
        s_left += (u.n > 0 ? Matrix(u.C * w.at(mi_bump(m, j, -1)))
                           : Matrix(u.C)) *
                  u.B[j];
      }
      gleason_transfer = std::max(
          gleason_transfer, (s_left - s_taylor.at(m)).norm() / scale);

      Matrix gm = weak_domain_coeff_output(u, wstar, m);
      Matrix hm = weak_domain_coeff_input(u, w, m);
      Matrix hm_big = big.at(m) * bstack;  // dn x p
      act_state_out = std::max(
          act_state_out,
          (astack.adjoint() * gm - wstar.at(m) * u.C.adjoint()).norm() /
              scale);
      act_state_in =
          std::max(act_state_in, (astack * hm - hm_big).norm() / scale);
      act_boundary_out = std::max(
          act_boundary_out, (u.C * hm - s_taylor.at(m)).norm() / scale);
      act_boundary_in = std::max(
          act_boundary_in,
          (bstack.adjoint() * gm - s_taylor.at(m).adjoint()).norm() / scale);
    }
    // Feedthrough action: B^* H_m = delta_{m,0} I - S_0^* S_m.
    Matrix lhs_ft = bstack.adjoint() * (big.at(m) * bstack);
    Matrix rhs_ft = -u.D.adjoint() * s_taylor.at(m);
    if (deg == 0) rhs_ft += identity(u.p);
    act_feedthrough =
        std::max(act_feedthrough, (lhs_ft - rhs_ft).norm() / scale);
  }
  res["gleason_primal"] = gleason_primal;
  res["gleason_dual"] = gleason_dual;
  res["gleason_transfer"] = gleason_transfer;
  res["action_state_out"] = act_state_out;
  res["action_state_in"] = act_state_in;
  res["action_boundary_out"] = act_boundary_out;
  res["action_boundary_in"] = act_boundary_in;
  res["action_feedthrough"] = act_feedthrough;
  res["necessary_output"] =
      (u.C * u.C.adjoint() + u.D * u.D.adjoint() - identity(u.q)).norm() /
      scale;
  res["necessary_input"] =
      (bstack.adjoint() * bstack + u.D.adjoint() * u.D - identity(u.p))
          .norm() /
      scale;

  // Joint kernel of all model coefficients.
  if (u.n > 0) {
    Index rows = 0;
    for (const auto& r : kernel_rows) rows += r.rows();
    Matrix stacked(rows, u.n);
    Index at = 0;
    for (const auto& r : kernel_rows) {
      stacked.middleRows(at, r.rows()) = r;
      at += r.rows();
    }
    rep.xcirc_dim = u.n - orthonormal_range(stacked.adjoint()).dim();
  }
  res["xcirc_dim"] = static_cast<double>(rep.xcirc_dim);

  double machinery = std::max({gleason_primal, gleason_dual, gleason_transfer,
                               act_state_out, act_state_in, act_boundary_out,
                               act_boundary_in});
  rep.identities_ok = machinery <= std::max(tol, 1e-8);

  switch (kind) {
    case ModelKind::cfm:
      rep.pass = rep.flags.observable && rep.flags.weakly_coisometric;
      break;
    case ModelKind::dcfm:
      rep.pass = rep.flags.controllable && rep.flags.weakly_isometric;
      break;
    case ModelKind::tcfm:
      rep.pass = rep.flags.closely_connected && rep.flags.weakly_unitary;
      break;
  }
  rep.pass = rep.pass && rep.identities_ok;
  return rep;
}

// ---------------------------------------------------------------------------
// Commutative-case diagnostics.
// ---------------------------------------------------------------------------

struct CommutativeModelReport {
  bool commutative = false;
  bool gleason_contractive = false;
  bool shift_invariant = false;
  double max_commutator = 0.0;
  double min_eig = 0.0;
  double shift_residual = 0.0;
  int shift_order = 0;
};

inline CommutativeModelReport commutative_model_check(const Colligation& u,
                                                      double tol =
                                                          kResidualTol,
                                                      int order = -1) {
  CommutativeModelReport rep;
  if (order < 0) order = std::max<int>(4, 2 * static_cast<int>(u.n) + 2);
  rep.shift_order = order;
  for (int i = 0; i < u.d; ++i)
    for (int j = i + 1; j < u.d; ++j)
      rep.max_commutator = std::max(
          rep.max_commutator, (u.A[i] * u.A[j] - u.A[j] * u.A[i]).norm());
  rep.commutative = rep.max_commutator <= tol;

  if (u.n > 0) {
    Matrix gap = identity(u.n) - u.a_stack().adjoint() * u.a_stack() -
                 u.C.adjoint() * u.C;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gap + gap.adjoint()));
    rep.min_eig = es.eigenvalues().minCoeff();
  }
  rep.gleason_contractive = rep.min_eig >= -tol;

  // Backward-shift invariance of the span of model columns, up to the
  // truncation order: each shifted coefficient family must factor through
  // the original one.
  if (u.n > 0 && u.q > 0) {
    CommSeries theta = output_resolvent_taylor(u, order);
    double worst = 0.0;
    for (int j = 1; j <= u.d; ++j) {
      CommSeries shifted = da_backward_shift(theta, j);
      auto idx = multi_indices_up_to(u.d, order - 1);
      Matrix lhs(static_cast<Index>(idx.size()) * u.q, u.n);
      Matrix rhs(static_cast<Index>(idx.size()) * u.q, u.n);
      Index at = 0;
      for (const auto& m : idx) {
        lhs.middleRows(at, u.q) = theta.at(m);
        rhs.middleRows(at, u.q) = shifted.at(m);
        at += u.q;
      }
      Matrix pj = lhs.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV)
                      .solve(rhs);
      worst = std::max(worst,
                       (lhs * pj - rhs).norm() / res_scale({rhs.norm()}));
    }
    rep.shift_residual = worst;
  }
  rep.shift_invariant = rep.shift_residual <= std::max(tol, 1e-8);
  return rep;
}

}  // namespace schurball
