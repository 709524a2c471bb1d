#pragma once

#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "schurball/matcore.hpp"
#include "schurball/sampling.hpp"

namespace schurball {

// ---------------------------------------------------------------------------
// Multi-indices (commutative exponents), graded lexicographic order.
// ---------------------------------------------------------------------------

using MultiIndex = std::vector<int>;

inline int mi_degree(const MultiIndex& n) {
  return std::accumulate(n.begin(), n.end(), 0);
}

struct GradedLex {
  bool operator()(const MultiIndex& a, const MultiIndex& b) const {
    int da = mi_degree(a), db = mi_degree(b);
    if (da != db) return da < db;
    return a < b;
  }
};

inline MultiIndex mi_zero(int d) { return MultiIndex(d, 0); }

inline MultiIndex mi_bump(MultiIndex n, int j, int by = 1) {
  n[j] += by;
  return n;
}

// All multi-indices of the exact degree, lexicographic within the degree.
inline std::vector<MultiIndex> multi_indices_of_degree(int d, int deg) {
  std::vector<MultiIndex> out;
  MultiIndex cur(d, 0);
  auto rec = [&](auto&& self, int pos, int rem) -> void {
    if (pos == d - 1) {
      cur[pos] = rem;
      out.push_back(cur);
      return;
    }
    for (int k = 0; k <= rem; ++k) {
      cur[pos] = k;
      self(self, pos + 1, rem - k);
    }
  };
  if (d == 0) {
    if (deg == 0) out.push_back({});
    return out;
  }
  rec(rec, 0, deg);
  return out;
}

inline std::vector<MultiIndex> multi_indices_up_to(int d, int max_deg) {
  std::vector<MultiIndex> out;
  for (int deg = 0; deg <= max_deg; ++deg) {
    auto level = multi_indices_of_degree(d, deg);
    out.insert(out.end(), level.begin(), level.end());
  }
  return out;
}

// n! / |n|! as a double.
inline double mi_weight(const MultiIndex& n) {
  double lg = -std::lgamma(static_cast<double>(mi_degree(n)) + 1.0);
  for (int k : n) lg += std::lgamma(static_cast<double>(k) + 1.0);
  return std::exp(lg);
}

inline Complex mi_power(const Point& z, const MultiIndex& n) {
  Complex v = 1.0;
  for (size_t j = 0; j < n.size(); ++j)
    for (int k = 0; k < n[j]; ++k) v *= z[j];
  return v;
}

inline std::string mi_key(const MultiIndex& n) {
  std::string s;
  for (size_t j = 0; j < n.size(); ++j) {
    if (j) s += ',';
    s += std::to_string(n[j]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Words (noncommutative monomials), letters 1..d in string order
// (letters.front() is the leftmost factor), length-lex order.
// ---------------------------------------------------------------------------

struct Word {
  std::vector<int> letters;  // 1-based

  int length() const { return static_cast<int>(letters.size()); }
  bool empty() const { return letters.empty(); }
  Word transpose() const {
    Word w = *this;
    std::reverse(w.letters.begin(), w.letters.end());
    return w;
  }
  int first() const { return letters.front(); }
  int last() const { return letters.back(); }
  Word drop_first() const {
    return Word{{letters.begin() + 1, letters.end()}};
  }
  Word drop_last() const {
    return Word{{letters.begin(), letters.end() - 1}};
  }
  Word prepend(int j) const {
    Word w;
    w.letters.reserve(letters.size() + 1);
    w.letters.push_back(j);
    w.letters.insert(w.letters.end(), letters.begin(), letters.end());
    return w;
  }
  Word append(int j) const {
    Word w = *this;
    w.letters.push_back(j);
    return w;
  }
  MultiIndex abelianize(int d) const {
    MultiIndex n(d, 0);
    for (int l : letters) n[l - 1] += 1;
    return n;
  }
  bool operator==(const Word& o) const { return letters == o.letters; }
};

struct LengthLex {
  bool operator()(const Word& a, const Word& b) const {
    if (a.letters.size() != b.letters.size())
      return a.letters.size() < b.letters.size();
    return a.letters < b.letters;
  }
};

inline std::vector<Word> words_of_length(int d, int len) {
  std::vector<Word> out;
  Word cur;
  cur.letters.assign(len, 1);
  if (len == 0) {
    out.push_back(Word{});
    return out;
  }
  if (d == 0) return out;
  auto rec = [&](auto&& self, int pos) -> void {
    if (pos == len) {
      out.push_back(cur);
      return;
    }
    for (int l = 1; l <= d; ++l) {
      cur.letters[pos] = l;
      self(self, pos + 1);
    }
  };
  rec(rec, 0);
  return out;
}

inline std::vector<Word> words_up_to(int d, int max_len) {
  std::vector<Word> out;
  for (int len = 0; len <= max_len; ++len) {
    auto level = words_of_length(d, len);
    out.insert(out.end(), level.begin(), level.end());
  }
  return out;
}

inline std::string word_key(const Word& w) {
  std::string s;
  for (size_t j = 0; j < w.letters.size(); ++j) {
    if (j) s += '.';
    s += std::to_string(w.letters[j]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Truncated series with matrix coefficients.
// ---------------------------------------------------------------------------

struct CommSeries {
  int d = 0;
  Index rows = 0, cols = 0;
  int order = 0;
  std::map<MultiIndex, Matrix, GradedLex> coeffs;

  Matrix at(const MultiIndex& n) const {
    auto it = coeffs.find(n);
    if (it != coeffs.end()) return it->second;
    return Matrix::Zero(rows, cols);
  }

  void set(const MultiIndex& n, Matrix m) { coeffs[n] = std::move(m); }

  // Truncated evaluation.
  Matrix eval(const Point& z) const {
    Matrix acc = Matrix::Zero(rows, cols);
    for (const auto& [n, c] : coeffs) acc += mi_power(z, n) * c;
    return acc;
  }
};

struct NcSeries {
  int d = 0;
  Index rows = 0, cols = 0;
  int order = 0;
  std::map<Word, Matrix, LengthLex> coeffs;

  Matrix at(const Word& w) const {
    auto it = coeffs.find(w);
    if (it != coeffs.end()) return it->second;
    return Matrix::Zero(rows, cols);
  }

  void set(const Word& w, Matrix m) { coeffs[w] = std::move(m); }
};

// Sum word coefficients over each abelianization class.
inline CommSeries abelianize(const NcSeries& f) {
  CommSeries g;
  g.d = f.d;
  g.rows = f.rows;
  g.cols = f.cols;
  g.order = f.order;
  for (const auto& [w, c] : f.coeffs) {
    MultiIndex n = w.abelianize(f.d);
    auto it = g.coeffs.find(n);
    if (it == g.coeffs.end())
      g.coeffs.emplace(n, c);
    else
      it->second += c;
  }
  return g;
}

// Hilbert-space pairing of truncated coefficient families:
// sum_n (n!/|n|!) tr(g_n^* f_n).
inline Complex da_inner(const CommSeries& f, const CommSeries& g) {
  if (f.d != g.d || f.rows != g.rows || f.cols != g.cols)
    throw dimension_mismatch("da_inner: shapes differ");
  Complex acc = 0.0;
  for (const auto& [n, c] : f.coeffs) {
    Matrix gc = g.at(n);
    acc += mi_weight(n) * (gc.adjoint() * c).trace();
  }
  return acc;
}

enum class Side { left, right };

// Taylor coefficients of pre * (I - sum_j z_j M_j)^{-1} * post up to the
// given total degree.  The degree-n coefficient is the sum of all products
// M_{i_k} ... M_{i_1} over words with abelianization n.  side picks the
// recursion direction (identical results up to roundoff).
inline CommSeries resolvent_taylor_comm(const std::vector<Matrix>& blocks,
                                        int order, Side side = Side::left,
                                        const Matrix* pre = nullptr,
                                        const Matrix* post = nullptr) {
  int d = static_cast<int>(blocks.size());
  if (d == 0) throw dimension_mismatch("resolvent_taylor_comm: no blocks");
  Index n = blocks[0].rows();
  for (const auto& m : blocks) {
    if (m.rows() != n || m.cols() != n)
      throw dimension_mismatch("resolvent_taylor_comm: blocks not square/equal");
    check_finite(m, "resolvent_taylor_comm");
  }
  if (order < 0) throw dimension_mismatch("resolvent_taylor_comm: order < 0");
  if (pre && pre->cols() != n)
    throw dimension_mismatch("resolvent_taylor_comm: pre cols");
  if (post && post->rows() != n)
    throw dimension_mismatch("resolvent_taylor_comm: post rows");

  std::map<MultiIndex, Matrix, GradedLex> raw;
  raw[mi_zero(d)] = identity(n);
  for (int deg = 1; deg <= order; ++deg) {
    for (const auto& m : multi_indices_of_degree(d, deg)) {
      Matrix acc = Matrix::Zero(n, n);
      for (int j = 0; j < d; ++j) {
        if (m[j] == 0) continue;
        const Matrix& prev = raw[mi_bump(m, j, -1)];
        if (side == Side::left)
          acc += blocks[j] * prev;
        else
          acc += prev * blocks[j];
      }
      raw[m] = acc;
    }
  }

  CommSeries out;
  out.d = d;
  out.order = order;
  out.rows = pre ? pre->rows() : n;
  out.cols = post ? post->cols() : n;
  for (auto& [m, c] : raw) {
    Matrix v = c;
    if (pre) v = (*pre) * v;
    if (post) v = v * (*post);
    out.coeffs.emplace(m, std::move(v));
  }
  return out;
}

// Word coefficients of pre * (I - sum_j z_j M_j)^{-1} * post: the
// coefficient of the word v is the string-ordered product M^v.
inline NcSeries nc_resolvent_series(const std::vector<Matrix>& blocks,
                                    int max_len, const Matrix* pre = nullptr,
                                    const Matrix* post = nullptr) {
  int d = static_cast<int>(blocks.size());
  if (d == 0) throw dimension_mismatch("nc_resolvent_series: no blocks");
  Index n = blocks[0].rows();
  for (const auto& m : blocks)
    if (m.rows() != n || m.cols() != n)
      throw dimension_mismatch("nc_resolvent_series: blocks not square/equal");
  if (pre && pre->cols() != n)
    throw dimension_mismatch("nc_resolvent_series: pre cols");
  if (post && post->rows() != n)
    throw dimension_mismatch("nc_resolvent_series: post rows");

  std::map<Word, Matrix, LengthLex> raw;
  raw[Word{}] = identity(n);
  for (int len = 1; len <= max_len; ++len) {
    for (const auto& w : words_of_length(d, len)) {
      raw[w] = blocks[w.first() - 1] * raw[w.drop_first()];
    }
  }

  NcSeries out;
  out.d = d;
  out.order = max_len;
  out.rows = pre ? pre->rows() : n;
  out.cols = post ? post->cols() : n;
  for (auto& [w, c] : raw) {
    Matrix v = c;
    if (pre) v = (*pre) * v;
    if (post) v = v * (*post);
    out.coeffs.emplace(w, std::move(v));
  }
  return out;
}

// Coefficients X_n of (I - T^* Z(z))^{-1} for a d-tuple of n x n blocks
// T = [T_1 ... T_d]; each X_n is dn x dn.
inline CommSeries xn_coefficients(const std::vector<Matrix>& t, int order) {
  int d = static_cast<int>(t.size());
  if (d == 0) throw dimension_mismatch("xn_coefficients: no blocks");
  Index n = t[0].rows();
  for (const auto& m : t)
    if (m.rows() != n || m.cols() != n)
      throw dimension_mismatch("xn_coefficients: blocks not square/equal");
  Matrix tcol(d * n, n);  // column of adjoints, the operator T^*
  for (int k = 0; k < d; ++k) tcol.middleRows(k * n, n) = t[k].adjoint();

  CommSeries out;
  out.d = d;
  out.rows = d * n;
  out.cols = d * n;
  out.order = order;
  out.set(mi_zero(d), identity(d * n));
  for (int deg = 1; deg <= order; ++deg) {
    for (const auto& m : multi_indices_of_degree(d, deg)) {
      Matrix acc = Matrix::Zero(d * n, d * n);
      for (int j = 0; j < d; ++j) {
        if (m[j] == 0) continue;
        acc += tcol * out.at(mi_bump(m, j, -1)).middleRows(j * n, n);
      }
      out.set(m, acc);
    }
  }
  return out;
}

// Adjoint of multiplication by z_j on the weighted coefficient space:
// (g)_n = ((n_j + 1)/(|n| + 1)) f_{n + e_j}.
inline CommSeries da_backward_shift(const CommSeries& f, int j) {
  if (j < 1 || j > f.d) throw dimension_mismatch("da_backward_shift: bad j");
  if (f.order == 0)
    throw order_zero("da_backward_shift: series truncated at order zero");
  CommSeries g;
  g.d = f.d;
  g.rows = f.rows;
  g.cols = f.cols;
  g.order = f.order - 1;
  for (const auto& m : multi_indices_up_to(f.d, g.order)) {
    double w = (m[j - 1] + 1.0) / (mi_degree(m) + 1.0);
    Matrix c = f.at(mi_bump(m, j - 1, +1));
    if (c.norm() > 0) g.set(m, w * c);
  }
  return g;
}

}  // namespace schurball
