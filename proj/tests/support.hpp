#pragma once

#include <algorithm>
#include <cmath>

#include "rrwkv/numerics.hpp"

namespace rrwkv::test {

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
  return m;
}

inline double max_abs_diff(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline Matrix rows_of(std::initializer_list<std::initializer_list<double>> rows) { return Matrix(rows); }

}  // namespace rrwkv::test
