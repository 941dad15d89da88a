#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "rrwkv/errors.hpp"

namespace rrwkv {

using Vector = std::vector<double>;

// Dense row-major matrix. Sequences of vectors are stored as one row per
// time step, so a T x d matrix is a stream of T vectors of width d.
template <typename Scalar>
class BasicMatrix {
 public:
  using value_type = Scalar;

  BasicMatrix() = default;
  BasicMatrix(std::size_t rows, std::size_t cols, Scalar fill = Scalar{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicMatrix(std::size_t rows, std::size_t cols, std::vector<Scalar> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "matrix data length != rows * cols");
  }
  BasicMatrix(std::initializer_list<std::initializer_list<Scalar>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      require(row.size() == cols_, "ragged matrix initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = Scalar{1};
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Scalar& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const Scalar& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<Scalar> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Scalar> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<Scalar> flat() { return data_; }
  std::span<const Scalar> flat() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const BasicMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Scalar> data_;
};

using Matrix = BasicMatrix<double>;
using MatrixF = BasicMatrix<float>;

// Stack vectors as rows.
Matrix stack_rows(const std::vector<Vector>& rows);
std::vector<Vector> unstack_rows(const Matrix& m);

// ---------------------------------------------------------------------------
// Scalar helpers

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline float sigmoid(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

bool all_finite(std::span<const double> xs);

// ---------------------------------------------------------------------------
// Vector operations

// y = W x. Accumulates in 64 bits.
Vector matvec(const Matrix& W, const Vector& x);
void matvec(const Matrix& W, std::span<const double> x, std::span<double> y);
// y += W^T x
void matvec_transposed_acc(const Matrix& W, std::span<const double> x, std::span<double> y);
// W += a b^T
void outer_acc(Matrix& W, std::span<const double> a, std::span<const double> b);

enum class ElementwiseOp { add, sub, mul, div, exp, sigmoid, relu, square, max };

bool is_binary(ElementwiseOp op);
std::string to_string(ElementwiseOp op);

Vector elementwise(ElementwiseOp op, const Vector& a);
Vector elementwise(ElementwiseOp op, const Vector& a, const Vector& b);

double dot(std::span<const double> a, std::span<const double> b);

// Per-channel arithmetic mean over a nonempty window of equal-length vectors.
Vector mean_pool(const std::vector<Vector>& window);
Vector mean_pool(const Matrix& rows, std::size_t begin, std::size_t end);

// ---------------------------------------------------------------------------
// Sequence projections: Y[t] = W X[t] for every row t.
// project() splits rows across OpenMP threads; project_serial() is the
// single-threaded reference kept for testing.

Matrix project(const Matrix& X, const Matrix& W);
Matrix project_serial(const Matrix& X, const Matrix& W);
// dX[t] += W^T dY[t]
void project_backward_input(const Matrix& dY, const Matrix& W, Matrix& dX);
// dW += sum_t dY[t] X[t]^T
void project_backward_weight(const Matrix& dY, const Matrix& X, Matrix& dW);

// ---------------------------------------------------------------------------
// Pseudo-random numbers.
//
// SplitMix64 (Steele, Lea, Flood 2014): state += 0x9E3779B97F4A7C15 then the
// Stafford "Mix13" finalizer. Seed 0 yields 0xE220A8397B1DCDAF,
// 0x6E789E6AA1B965F4, 0x06C45D188009454F, ... on every platform.
// Uniform doubles take the top 53 bits; normals use Box-Muller with no cached
// second variate, so the stream depends only on the seed and call order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  // [0, n)
  std::uint64_t below(std::uint64_t n);

  Vector uniform_vector(std::size_t n, double lo, double hi);
  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev);
  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi);

 private:
  std::uint64_t state_;
};

}  // namespace rrwkv
