#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "schurball/matcore.hpp"

namespace schurball {

using Point = std::vector<Complex>;

inline double ball_radius(const Point& z) {
  double s = 0.0;
  for (const auto& c : z) s += std::norm(c);
  return std::sqrt(s);
}

// Deterministic sampling helper; all randomness in the library flows
// through an explicit seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return unif_(gen_); }
  double gauss() { return normal_(gen_); }
  Complex cgauss() { return Complex(normal_(gen_), normal_(gen_)); }

  Matrix matrix(Index r, Index c) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = cgauss();
    return m;
  }

  Matrix unitary(Index n) {
    if (n == 0) return Matrix(0, 0);
    Eigen::JacobiSVD<Matrix> svd(matrix(n, n),
                                 Eigen::ComputeFullU | Eigen::ComputeFullV);
    return svd.matrixU() * svd.matrixV().adjoint();
  }

  // Random matrix scaled so its operator norm is at most cap.
  Matrix contraction(Index r, Index c, double cap) {
    Matrix m = matrix(r, c);
    double nrm = op_norm(m);
    if (nrm > 0) m *= (cap * uniform()) / nrm;
    return m;
  }

  Point ball_point(int d, double radius) {
    Point z(d);
    double s = 0.0;
    for (auto& c : z) {
      c = cgauss();
      s += std::norm(c);
    }
    double r = radius * std::pow(uniform(), 1.0 / std::max(1, 2 * d));
    double scale = s > 0 ? r / std::sqrt(s) : 0.0;
    for (auto& c : z) c *= scale;
    return z;
  }

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Fixed quasi-random evaluation grid, independent of user seeds;
// count points in the ball of the given radius.
inline std::vector<Point> sample_grid(int d, int count, double radius = 0.9) {
  Rng rng(0xC0FFEEULL + 1315423911ULL * static_cast<std::uint64_t>(d));
  std::vector<Point> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(rng.ball_point(d, radius));
  return out;
}

inline std::vector<std::pair<Point, Point>> sample_pair_grid(
    int d, int count, double radius = 0.9, std::uint64_t seed = 0xA9E12ULL) {
  Rng rng(seed + 2654435761ULL * static_cast<std::uint64_t>(d));
  std::vector<std::pair<Point, Point>> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i)
    out.emplace_back(rng.ball_point(d, radius), rng.ball_point(d, radius));
  return out;
}

}  // namespace schurball
