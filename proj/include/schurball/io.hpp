#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "schurball/colligation.hpp"
#include "schurball/rowmodel.hpp"

namespace schurball {

// Reports use insertion-ordered keys so identical inputs dump identical bytes.
using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// JSON <-> matrix / colligation / row contraction, with location-bearing
// parse errors ("file.json:$.A[2].data[5]: ...").
// ---------------------------------------------------------------------------

inline Json matrix_to_json(const Matrix& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  Json data = Json::array();
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c)
      data.push_back(Json::array({m(r, c).real(), m(r, c).imag()}));
  j["data"] = std::move(data);
  return j;
}

namespace detail {

inline const Json& json_member(const Json& j, const char* key,
                               const std::string& where) {
  if (!j.is_object()) throw parse_error(where + ": expected an object");
  auto it = j.find(key);
  if (it == j.end())
    throw parse_error(where + ": missing field '" + std::string(key) + "'");
  return *it;
}

inline Index json_dim(const Json& j, const char* key,
                      const std::string& where) {
  const Json& v = json_member(j, key, where);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw parse_error(where + "." + key + ": expected a nonnegative integer");
  return static_cast<Index>(v.get<long long>());
}

}  // namespace detail

inline Matrix matrix_from_json(const Json& j, const std::string& where) {
  Index rows = detail::json_dim(j, "rows", where);
  Index cols = detail::json_dim(j, "cols", where);
  const Json& data = detail::json_member(j, "data", where);
  if (!data.is_array())
    throw parse_error(where + ".data: expected an array");
  if (static_cast<Index>(data.size()) != rows * cols)
    throw parse_error(where + ".data: expected " +
                      std::to_string(rows * cols) + " entries, got " +
                      std::to_string(data.size()));
  Matrix m(rows, cols);
  for (Index k = 0; k < rows * cols; ++k) {
    const Json& e = data[static_cast<size_t>(k)];
    std::string at = where + ".data[" + std::to_string(k) + "]";
    if (!e.is_array() || e.size() != 2 || !e[0].is_number() ||
        !e[1].is_number())
      throw parse_error(at + ": expected an [re, im] pair");
    double re = e[0].get<double>(), im = e[1].get<double>();
    if (!std::isfinite(re) || !std::isfinite(im))
      throw parse_error(at + ": non-finite entry");
    m(k / cols, k % cols) = Complex(re, im);
  }
  return m;
}

inline Json colligation_to_json(const Colligation& u) {
  Json j;
  j["d"] = u.d;
  j["n"] = u.n;
  j["p"] = u.p;
  j["q"] = u.q;
  Json a = Json::array(), b = Json::array();
  for (int k = 0; k < u.d; ++k) {
    a.push_back(matrix_to_json(u.A[k]));
    b.push_back(matrix_to_json(u.B[k]));
  }
  j["A"] = std::move(a);
  j["B"] = std::move(b);
  j["C"] = matrix_to_json(u.C);
  j["D"] = matrix_to_json(u.D);
  return j;
}

inline Colligation colligation_from_json(const Json& j,
                                         const std::string& where) {
  Index d = detail::json_dim(j, "d", where);
  Index n = detail::json_dim(j, "n", where);
  Index p = detail::json_dim(j, "p", where);
  Index q = detail::json_dim(j, "q", where);
  if (d < 1) throw parse_error(where + ".d: must be at least 1");
  auto blocks = [&](const char* key, Index rows,
                    Index cols) -> std::vector<Matrix> {
    const Json& arr = detail::json_member(j, key, where);
    if (!arr.is_array() || static_cast<Index>(arr.size()) != d)
      throw parse_error(where + "." + key + ": expected an array of " +
                        std::to_string(d) + " matrices");
    std::vector<Matrix> out;
    for (Index k = 0; k < d; ++k) {
      std::string at =
          where + "." + key + "[" + std::to_string(k) + "]";
      Matrix m = matrix_from_json(arr[static_cast<size_t>(k)], at);
      if (m.rows() != rows || m.cols() != cols)
        throw parse_error(at + ": expected shape " + std::to_string(rows) +
                          "x" + std::to_string(cols));
      out.push_back(std::move(m));
    }
    return out;
  };
  std::vector<Matrix> a = blocks("A", n, n);
  std::vector<Matrix> b = blocks("B", n, p);
  Matrix c = matrix_from_json(detail::json_member(j, "C", where), where + ".C");
  Matrix dd =
      matrix_from_json(detail::json_member(j, "D", where), where + ".D");
  if (c.rows() != q || c.cols() != n)
    throw parse_error(where + ".C: expected shape " + std::to_string(q) +
                      "x" + std::to_string(n));
  if (dd.rows() != q || dd.cols() != p)
    throw parse_error(where + ".D: expected shape " + std::to_string(q) +
                      "x" + std::to_string(p));
  return make_colligation(static_cast<int>(d), std::move(a), std::move(b),
                          std::move(c), std::move(dd));
}

inline Json row_contraction_to_json(const RowContraction& t) {
  Json j;
  j["d"] = t.d;
  j["n"] = t.n;
  Json blocks = Json::array();
  for (const auto& m : t.t) blocks.push_back(matrix_to_json(m));
  j["T"] = std::move(blocks);
  return j;
}

inline RowContraction row_contraction_from_json(const Json& j,
                                                const std::string& where) {
  Index d = detail::json_dim(j, "d", where);
  Index n = detail::json_dim(j, "n", where);
  if (d < 1) throw parse_error(where + ".d: must be at least 1");
  const Json& arr = detail::json_member(j, "T", where);
  if (!arr.is_array() || static_cast<Index>(arr.size()) != d)
    throw parse_error(where + ".T: expected an array of " + std::to_string(d) +
                      " matrices");
  std::vector<Matrix> blocks;
  for (Index k = 0; k < d; ++k) {
    std::string at = where + ".T[" + std::to_string(k) + "]";
    Matrix m = matrix_from_json(arr[static_cast<size_t>(k)], at);
    if (m.rows() != n || m.cols() != n)
      throw parse_error(at + ": expected shape " + std::to_string(n) + "x" +
                        std::to_string(n));
    blocks.push_back(std::move(m));
  }
  return make_row_contraction(static_cast<int>(d), std::move(blocks));
}

inline Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error(path + ": cannot open file");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw parse_error(path + ": " + e.what());
  }
}

inline Matrix load_matrix(const std::string& path) {
  return matrix_from_json(load_json_file(path), path + ":$");
}

inline Colligation load_colligation(const std::string& path) {
  return colligation_from_json(load_json_file(path), path + ":$");
}

inline RowContraction load_row_contraction(const std::string& path) {
  return row_contraction_from_json(load_json_file(path), path + ":$");
}

// ---------------------------------------------------------------------------
// Point parsing: inline "re+imi" component lists, or a JSON file holding an
// array of points, each an array of [re, im] pairs.
// ---------------------------------------------------------------------------

inline Complex parse_complex(std::string s) {
  std::string raw = s;
  s.erase(std::remove_if(s.begin(), s.end(),
                         [](unsigned char c) { return std::isspace(c); }),
          s.end());
  if (s.empty()) throw parse_error("empty complex literal");
  auto number = [&](const std::string& t) -> double {
    size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &pos);
    } catch (...) {
      throw parse_error("bad complex literal '" + raw + "'");
    }
    if (pos != t.size())
      throw parse_error("bad complex literal '" + raw + "'");
    return v;
  };
  auto imag_coeff = [&](std::string t) -> double {
    t.pop_back();  // trailing 'i'
    if (t.empty() || t == "+") return 1.0;
    if (t == "-") return -1.0;
    return number(t);
  };
  // Split at the last sign that is not leading and not an exponent sign.
  size_t split = std::string::npos;
  for (size_t k = s.size(); k-- > 1;) {
    char c = s[k];
    if ((c == '+' || c == '-') && s[k - 1] != 'e' && s[k - 1] != 'E') {
      split = k;
      break;
    }
  }
  if (s.back() == 'i' || s.back() == 'I') {
    if (split == std::string::npos) return Complex(0.0, imag_coeff(s));
    return Complex(number(s.substr(0, split)), imag_coeff(s.substr(split)));
  }
  if (split != std::string::npos)
    throw parse_error("complex literal missing 'i': '" + raw + "'");
  return Complex(number(s), 0.0);
}

namespace detail {

inline std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

}  // namespace detail

inline Point parse_point(const std::string& s, int d) {
  auto comps = detail::split_on(s, ',');
  if (static_cast<int>(comps.size()) != d)
    throw parse_error("point '" + s + "': expected " + std::to_string(d) +
                      " components, got " + std::to_string(comps.size()));
  Point z;
  for (const auto& c : comps) z.push_back(parse_complex(c));
  return z;
}

// Semicolon-separated list of points, components comma-separated.
inline std::vector<Point> parse_points_inline(const std::string& s, int d) {
  std::vector<Point> pts;
  for (const auto& part : detail::split_on(s, ';')) {
    if (part.find_first_not_of(" \t") == std::string::npos) continue;
    pts.push_back(parse_point(part, d));
  }
  if (pts.empty()) throw parse_error("no points in '" + s + "'");
  return pts;
}

inline std::vector<Point> points_from_json(const Json& j, int d,
                                           const std::string& where) {
  if (!j.is_array() || j.empty())
    throw parse_error(where + ": expected a nonempty array of points");
  std::vector<Point> pts;
  for (size_t i = 0; i < j.size(); ++i) {
    const Json& pj = j[i];
    std::string at = where + "[" + std::to_string(i) + "]";
    if (!pj.is_array() || static_cast<int>(pj.size()) != d)
      throw parse_error(at + ": expected an array of " + std::to_string(d) +
                        " [re, im] pairs");
    Point z;
    for (size_t k = 0; k < pj.size(); ++k) {
      const Json& e = pj[k];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() ||
          !e[1].is_number())
        throw parse_error(at + "[" + std::to_string(k) +
                          "]: expected an [re, im] pair");
      z.emplace_back(e[0].get<double>(), e[1].get<double>());
    }
    pts.push_back(std::move(z));
  }
  return pts;
}

// A --points argument: a path to a JSON point file if one exists, else the
// inline syntax.
inline std::vector<Point> parse_points_arg(const std::string& arg, int d) {
  if (std::ifstream probe(arg); probe)
    return points_from_json(load_json_file(arg), d, arg + ":$");
  return parse_points_inline(arg, d);
}

inline Json point_to_json(const Point& z) {
  Json j = Json::array();
  for (const auto& c : z) j.push_back(Json::array({c.real(), c.imag()}));
  return j;
}

inline Json complex_to_json(const Complex& c) {
  return Json::array({c.real(), c.imag()});
}

}  // namespace schurball
