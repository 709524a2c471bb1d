#include <catch2/catch_amalgamated.hpp>

#include "schurball/rowmodel.hpp"
#include "schurball/sampling.hpp"

using namespace schurball;

namespace {

RowContraction scalar_row(double t) {
  Matrix m(1, 1);
  m(0, 0) = t;
  return make_row_contraction(1, {m});
}

RowContraction zero_pair() {
  Matrix z = Matrix::Zero(1, 1);
  return make_row_contraction(2, {z, z});
}

// Commuting tuple: polynomials in one matrix, scaled to a row contraction.
RowContraction commuting_poly(Rng& rng, int d, Index n, double target) {
  Matrix m = rng.matrix(n, n);
  std::vector<Matrix> blocks;
  for (int k = 0; k < d; ++k)
    blocks.push_back(rng.cgauss() * identity(n) + rng.cgauss() * m +
                     rng.cgauss() * m * m);
  Matrix row(n, d * n);
  for (int k = 0; k < d; ++k) row.middleCols(k * n, n) = blocks[k];
  double s = target / std::max(op_norm(row), 1e-12);
  for (auto& b : blocks) b *= s;
  return make_row_contraction(d, blocks);
}

// Commuting tuple: simultaneously diagonal in a random orthonormal frame.
RowContraction commuting_normal(Rng& rng, int d, Index n, double target) {
  Matrix u = rng.unitary(n);
  std::vector<Matrix> blocks;
  Matrix row(n, d * n);
  for (int k = 0; k < d; ++k) {
    Vector diag(n);
    for (Index i = 0; i < n; ++i) diag(i) = rng.cgauss();
    blocks.push_back(u * diag.asDiagonal() * u.adjoint());
    row.middleCols(k * n, n) = blocks[k];
  }
  double s = target / std::max(op_norm(row), 1e-12);
  for (auto& b : blocks) b *= s;
  return make_row_contraction(d, blocks);
}

RowContraction random_row(Rng& rng, int d, Index n, double target) {
  Matrix row = rng.contraction(n, d * n, target);
  std::vector<Matrix> blocks;
  for (int k = 0; k < d; ++k) blocks.push_back(row.middleCols(k * n, n));
  return make_row_contraction(d, blocks);
}

RowContraction conjugated(const RowContraction& t, const Matrix& q) {
  std::vector<Matrix> blocks;
  for (const auto& b : t.t) blocks.push_back(q * b * q.adjoint());
  return make_row_contraction(t.d, blocks);
}

}  // namespace

TEST_CASE("row contraction validation") {
  Matrix m(1, 1);
  m(0, 0) = 0.5;
  CHECK_THROWS_AS(make_row_contraction(2, {m}), dimension_mismatch);
  Matrix big(1, 1);
  big(0, 0) = 1.5;
  CHECK_THROWS_AS(make_row_contraction(1, {big}), not_row_contraction);
  Matrix rect(2, 1);
  CHECK_THROWS_AS(make_row_contraction(1, {rect}), dimension_mismatch);
}

TEST_CASE("defect operators") {
  auto rc = scalar_row(0.6);
  auto dd = defects(rc);
  CHECK(std::abs(dd.d_t(0, 0) - 0.8) < 1e-12);
  CHECK(std::abs(dd.d_tstar(0, 0) - 0.8) < 1e-12);
  CHECK(dd.range_t.dim() == 1);

  auto z2 = zero_pair();
  auto dz = defects(z2);
  CHECK((dz.d_t - identity(2)).norm() < 1e-12);
  CHECK((dz.d_tstar - identity(1)).norm() < 1e-12);
  CHECK(dz.range_t.dim() == 2);
  CHECK(dz.range_tstar.dim() == 1);
}

TEST_CASE("dilation colligation of a scalar contraction") {
  auto hl = halmos(scalar_row(0.6));
  REQUIRE(hl.n == 1);
  REQUIRE(hl.p == 1);
  REQUIRE(hl.q == 1);
  CHECK(std::abs(hl.A[0](0, 0) - 0.6) < 1e-12);
  CHECK(std::abs(hl.B[0](0, 0) - 0.8) < 1e-12);
  CHECK(std::abs(hl.C(0, 0) - 0.8) < 1e-12);
  CHECK(std::abs(hl.D(0, 0) - (-0.6)) < 1e-12);
  auto flags = classify(hl);
  CHECK(flags.unitary);
  CHECK(flags.closely_connected);
}

TEST_CASE("dilation colligation is unitary for random tuples") {
  Rng rng(91);
  for (int trial = 0; trial < 6; ++trial) {
    int d = 1 + trial % 3;
    Index n = 1 + (trial / 2) % 3 + 1;
    auto rc = random_row(rng, d, n, trial % 2 ? 1.0 : 0.85);
    auto flags = classify(halmos(rc));
    CHECK(flags.unitary);
  }
}

TEST_CASE("characteristic function of a scalar contraction") {
  auto rc = scalar_row(0.6);
  Point z{Complex(0.5, 0.0)};
  CHECK(std::abs(char_eval(rc, z)(0, 0) - Complex(-1.0 / 7.0)) < 1e-12);

  auto series = char_series(rc, 3);
  double expect[4] = {-0.6, 0.64, 0.384, 0.2304};
  for (int k = 0; k <= 3; ++k)
    CHECK(std::abs(series.at({k})(0, 0) - expect[k]) < 1e-12);
}

TEST_CASE("characteristic function matches the Moebius map for d = 1") {
  Rng rng(17);
  for (double t : {0.1, 0.35, 0.6, 0.92}) {
    auto rc = scalar_row(t);
    for (int i = 0; i < 10; ++i) {
      Complex z = 0.9 * rng.cgauss() / 2.0;
      if (std::abs(z) >= 0.95) continue;
      Complex got = char_eval(rc, {z})(0, 0);
      Complex want = (z - t) / (1.0 - t * z);
      CHECK(std::abs(got - want) < 1e-12);
    }
  }
}

TEST_CASE("purity of the zero-point value") {
  Matrix half = 0.5 * identity(2);
  CHECK(purity_check(half));
  CHECK_FALSE(purity_check(identity(2)));
  CHECK(purity_check(Matrix(0, 3)));
  CHECK(purity_check(Matrix(2, 0)));
}

TEST_CASE("moments of the zero pair are coordinate projections") {
  auto z2 = zero_pair();
  auto mom = nc_char_moments(z2, 3);
  REQUIRE(mom.rows == 1);
  REQUIRE(mom.cols == 2);
  CHECK(mom.at(Word{}).norm() < 1e-14);
  for (int j = 1; j <= 2; ++j) {
    Matrix c = mom.at(Word{{j}});
    CHECK(std::abs(c(0, j - 1) - 1.0) < 1e-12);
    CHECK(std::abs(c(0, 2 - j)) < 1e-14);
  }
  for (const auto& w : words_of_length(2, 2)) CHECK(mom.at(w).norm() < 1e-14);
}

TEST_CASE("moments against direct series expansion") {
  Rng rng(2024);
  for (int trial = 0; trial < 8; ++trial) {
    int d = 1 + trial % 3;
    Index n = 2 + trial % 3;
    auto rc = trial % 2 ? random_row(rng, d, n, 0.95)
                        : commuting_poly(rng, d, n, 0.9);
    auto dd = defects(rc);
    Matrix cb = dd.range_tstar.basis.adjoint() * dd.d_tstar;
    Matrix bstack = dd.d_t * dd.range_t.basis;
    auto mom = nc_char_moments(rc, 4);
    CHECK((mom.at(Word{}) -
           (-dd.range_tstar.basis.adjoint() * rc.row() * dd.range_t.basis))
              .norm() < 1e-12);
    // Independent expansion: theta = -T| + D_{T*} sum_v z^v T^{*v} Z D_T|.
    for (const auto& w : words_up_to(d, 4)) {
      if (w.empty()) continue;
      Matrix prod = identity(n);
      for (size_t i = 0; i + 1 < w.letters.size(); ++i)
        prod *= rc.t[w.letters[i] - 1].adjoint();
      Matrix want =
          cb * prod * bstack.middleRows((w.last() - 1) * n, n);
      CHECK((mom.at(w) - want).norm() < 1e-11);
    }
    // Abelianization agrees with the commutative Taylor series.
    auto comm = char_series(rc, 4);
    auto ab = abelianize(mom);
    for (const auto& m : multi_indices_up_to(d, 4))
      CHECK((ab.at(m) - comm.at(m)).norm() < 1e-10);
  }
}

TEST_CASE("expanded moments of a scalar contraction") {
  auto rc = scalar_row(0.6);
  auto table = expanded_moments(rc, 3);
  for (const auto& [key, mat] : table.expanded) {
    double want = 0.64 * std::pow(0.6, key.v.length() + key.vp.length());
    CHECK(std::abs(mat(0, 0) - want) < 1e-12);
  }
  CHECK(table.crosscheck_residual < 1e-12);
  CHECK(table.hermitian_residual < 1e-12);
}

TEST_CASE("expanded moments of the zero pair") {
  auto table = expanded_moments(zero_pair(), 2);
  for (const auto& [key, mat] : table.expanded) {
    if (key.v.empty() && key.vp.empty()) {
      Matrix want = Matrix::Zero(2, 2);
      want(key.k - 1, key.j - 1) = 1.0;
      CHECK((mat - want).norm() < 1e-12);
    } else {
      CHECK(mat.norm() < 1e-14);
    }
  }
  CHECK(table.crosscheck_residual < 1e-13);
}

TEST_CASE("expanded moments cross-check on random tuples") {
  Rng rng(555);
  for (int trial = 0; trial < 6; ++trial) {
    int d = 1 + trial % 3;
    Index n = 2 + trial % 2;
    auto rc = random_row(rng, d, n, trial % 2 ? 1.0 : 0.9);
    auto table = expanded_moments(rc, 3);
    CHECK(table.crosscheck_residual < 1e-10);
    CHECK(table.hermitian_residual < 1e-11);
    // Hermitian symmetry spot check straight from the definition.
    for (const auto& [key, mat] : table.expanded) {
      ExpandedKey sw{key.vp.transpose(), key.v.transpose(), key.j, key.k};
      CHECK((mat.adjoint() - table.expanded.at(sw)).norm() < 1e-11);
    }
  }
}

TEST_CASE("classification of pinned examples") {
  auto cls06 = classify_row(scalar_row(0.6));
  CHECK(cls06.cnc);
  CHECK(cls06.strongly_cc);
  CHECK(cls06.cc);
  CHECK(cls06.pure);
  CHECK(cls06.commutative);
  CHECK(cls06.routes_agree);
  CHECK(cls06.stabilized);

  auto clsz = classify_row(zero_pair());
  CHECK(clsz.cnc);
  CHECK(clsz.strongly_cc);
  CHECK(clsz.cc);

  auto sphere = spherical_example(Complex(1.0, 0.0), Complex(0.0, 0.0));
  CHECK_FALSE(sphere.cls.cnc);
  CHECK(sphere.cls.strongly_cc);
  CHECK(sphere.cls.cc);
  CHECK(sphere.cls.routes_agree);

  auto unit = classify_row(scalar_row(1.0));
  CHECK_FALSE(unit.cnc);
  CHECK_FALSE(unit.cc);
  CHECK_FALSE(unit.strongly_cc);
  CHECK(unit.m1_dim == 1);
}

TEST_CASE("classification chain on commuting tuples") {
  Rng rng(31337);
  for (int trial = 0; trial < 40; ++trial) {
    int d = 1 + trial % 3;
    Index n = 1 + trial % 4;
    double target = (trial % 5 == 0) ? 1.0 : 0.6 + 0.08 * (trial % 5);
    auto rc = trial % 2 ? commuting_poly(rng, d, n, target)
                        : commuting_normal(rng, d, n, target);
    auto cls = classify_row(rc);
    CHECK(cls.commutative);
    CHECK(cls.stabilized);
    CHECK(cls.routes_agree);
    if (cls.cnc) CHECK(cls.strongly_cc);
    if (cls.strongly_cc) CHECK(cls.cc);
  }
}

TEST_CASE("classification flags a noncommuting pair") {
  Rng rng(7);
  auto rc = random_row(rng, 2, 3, 0.9);
  auto cls = classify_row(rc);
  CHECK_FALSE(cls.commutative);
  CHECK(cls.max_commutator > 1e-6);
}

TEST_CASE("classification respects unitary mixing of a direct sum") {
  // Unitary summand blocks closeness of connection even after conjugation.
  Rng rng(99);
  Matrix t(2, 2);
  t << Complex(1.0), Complex(0.0), Complex(0.0), Complex(0.4);
  Matrix q = rng.unitary(2);
  auto rc = make_row_contraction(1, {q * t * q.adjoint()});
  auto cls = classify_row(rc);
  CHECK_FALSE(cls.cc);
  CHECK(cls.m1_dim == 1);
}

TEST_CASE("intertwiner search on planted pairs") {
  Rng rng(404);
  for (int trial = 0; trial < 6; ++trial) {
    int d = 1 + trial % 3;
    Index n = 2 + trial % 3;
    auto t = random_row(rng, d, n, 0.9);
    Matrix q = rng.unitary(n);
    auto r = conjugated(t, q);
    auto w = equiv_intertwiner(t, r);
    REQUIRE(w.has_value());
    double res = 0.0;
    for (int k = 0; k < d; ++k)
      res = std::max(res, ((*w) * t.t[k] - r.t[k] * (*w)).norm());
    CHECK(res < 1e-8);
    CHECK(((*w) * w->adjoint() - identity(n)).norm() < 1e-10);
  }
}

TEST_CASE("intertwiner search rejects distinct scalars") {
  CHECK_FALSE(equiv_intertwiner(scalar_row(0.6), scalar_row(0.7)).has_value());
  CHECK(equiv_intertwiner(scalar_row(0.6), scalar_row(0.6)).has_value());
  Matrix one(1, 1);
  one(0, 0) = 0.5;
  auto a = make_row_contraction(1, {one});
  auto b = make_row_contraction(2, {one, one * 0.5});
  CHECK_THROWS_AS(equiv_intertwiner(a, b), dimension_mismatch);
}

TEST_CASE("coincidence on planted rotations") {
  Rng rng(808);
  Index q = 3, p = 2;
  Matrix alpha = rng.unitary(q), beta = rng.unitary(p);
  std::vector<Matrix> sb, sa;
  for (int i = 0; i < 6; ++i) {
    sb.push_back(rng.matrix(q, p));
    sa.push_back(alpha * sb.back() * beta.adjoint());
  }
  auto w = coincidence(sa, sb, 1e-9);
  REQUIRE(w.has_value());
  for (size_t i = 0; i < sa.size(); ++i)
    CHECK((sa[i] - w->alpha * sb[i] * w->beta.adjoint()).norm() < 1e-7);
}

TEST_CASE("coincidence rejects mismatched singular values") {
  std::vector<Matrix> sa{0.6 * identity(2)}, sb{0.7 * identity(2)};
  CHECK_FALSE(coincidence(sa, sb).has_value());
}

TEST_CASE("joint coincidence with kernel samples") {
  Rng rng(909);
  Index q = 2, p = 2;
  int d = 2;
  Matrix alpha = rng.unitary(q), beta = rng.unitary(p);
  Matrix gamma = Matrix::Zero(q + d * p, q + d * p);
  gamma.topLeftCorner(q, q) = alpha;
  for (int k = 0; k < d; ++k)
    gamma.block(q + k * p, q + k * p, p, p) = beta;
  std::vector<Matrix> sa, sb, ka, kb;
  for (int i = 0; i < 5; ++i) {
    sb.push_back(rng.matrix(q, p));
    sa.push_back(alpha * sb.back() * beta.adjoint());
    Matrix g = rng.matrix(q + d * p, 3);
    kb.push_back(g * g.adjoint());
    ka.push_back(gamma * kb.back() * gamma.adjoint());
  }
  auto w = coincidence(sa, sb, 1e-8, 8, 300, &ka, &kb, d);
  REQUIRE(w.has_value());
  CHECK(w->residual < 1e-8);
}

TEST_CASE("characteristic triple requires close connection") {
  CHECK_THROWS_AS(characteristic_triple(scalar_row(1.0)),
                  not_closely_connected);
  auto tri = characteristic_triple(scalar_row(0.6));
  CHECK(tri.geometry.x.rows() == 0);
  CHECK(tri.geometry.x.cols() == 0);
  CHECK(tri.geometry.canonical);

  auto sphere = spherical_example(Complex(0.6, 0.0), Complex(0.0, 0.8));
  auto tris = characteristic_triple(sphere.t);
  CHECK(tris.geometry.x.rows() == 0);
  CHECK(tris.cls.strongly_cc);
}

TEST_CASE("triple equivalence on planted pairs") {
  Rng rng(1212);
  for (int trial = 0; trial < 4; ++trial) {
    int d = 1 + trial % 2;
    Index n = 2 + trial % 2;
    auto t = commuting_poly(rng, d, n, 0.85);
    if (!classify_row(t).cc) continue;
    Matrix q = rng.unitary(n);
    auto rep = triple_equiv(t, conjugated(t, q));
    CHECK(rep.equivalent);
    CHECK(rep.witness_residual < 1e-8);
  }
}

TEST_CASE("triple equivalence separates scalar contractions") {
  auto rep = triple_equiv(scalar_row(0.6), scalar_row(0.7));
  CHECK_FALSE(rep.equivalent);
  CHECK(rep.sound_negative);
}

TEST_CASE("triple equivalence separates sphere points") {
  auto a = spherical_example(Complex(1.0, 0.0), Complex(0.0, 0.0));
  auto b = spherical_example(Complex(0.0, 0.0), Complex(1.0, 0.0));
  auto rep = triple_equiv(a.t, b.t);
  CHECK_FALSE(rep.equivalent);
  CHECK(rep.sound_negative);

  auto self = triple_equiv(a.t, a.t);
  CHECK(self.equivalent);
}

TEST_CASE("sphere example validation and origin kernel") {
  CHECK_THROWS_AS(spherical_example(Complex(1.0, 0.0), Complex(0.5, 0.0)),
                  not_on_sphere);
  auto ex = spherical_example(Complex(1.0, 0.0), Complex(0.0, 0.0));
  Point origin{Complex(0, 0), Complex(0, 0)};
  Matrix k0 = big_kernel_eval(ex.theta, origin, origin);
  Matrix want(2, 2);
  want << Complex(0), Complex(0), Complex(0), Complex(1);
  CHECK((k0 - want).norm() < 1e-12);
  CHECK((ex.kernel_closed(origin, origin) - want).norm() < 1e-12);
  CHECK(ex.theta.q == 0);
  CHECK(ex.theta.p == 1);
}

TEST_CASE("sphere kernel matches the closed form") {
  Rng rng(606);
  for (int trial = 0; trial < 5; ++trial) {
    Complex l1 = rng.cgauss(), l2 = rng.cgauss();
    double s = std::sqrt(std::norm(l1) + std::norm(l2));
    l1 /= s;
    l2 /= s;
    auto ex = spherical_example(l1, l2);
    auto pairs = sample_pair_grid(2, 10);
    for (const auto& [z, w] : pairs) {
      Matrix lhs = big_kernel_eval(ex.theta, z, w);
      Matrix rhs = ex.kernel_closed(z, w);
      CHECK((lhs - rhs).norm() < 1e-10);
      CHECK(ex.identity_residual(z, w) < 1e-12);
    }
    CHECK_FALSE(ex.cls.cnc);
    CHECK(ex.cls.strongly_cc);
    CHECK(ex.cls.cc);
  }
}
