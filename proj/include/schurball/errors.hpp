#pragma once

#include <stdexcept>
#include <string>

namespace schurball {

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct dimension_mismatch : error {
  using error::error;
};

struct non_finite : error {
  using error::error;
};

struct not_hermitian : error {
  using error::error;
};

struct indefinite_beyond_tolerance : error {
  using error::error;
};

struct point_outside_ball : error {
  using error::error;
};

struct singular_resolvent : error {
  using error::error;
};

struct order_zero : error {
  using error::error;
};

struct not_a_contraction : error {
  using error::error;
};

struct not_row_contraction : error {
  using error::error;
};

struct not_closely_connected : error {
  using error::error;
};

struct not_stabilized : error {
  using error::error;
};

struct not_on_sphere : error {
  using error::error;
};

struct parse_error : error {
  using error::error;
};

}  // namespace schurball
