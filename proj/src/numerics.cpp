#include "rrwkv/numerics.hpp"

#include <algorithm>
#include <numbers>

namespace rrwkv {

Matrix stack_rows(const std::vector<Vector>& rows) {
  if (rows.empty()) return {};
  const std::size_t d = rows.front().size();
  Matrix m(rows.size(), d);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    require(rows[t].size() == d, "stack_rows: unequal vector lengths");
    std::copy(rows[t].begin(), rows[t].end(), m.row(t).begin());
  }
  return m;
}

std::vector<Vector> unstack_rows(const Matrix& m) {
  std::vector<Vector> out;
  out.reserve(m.rows());
  for (std::size_t t = 0; t < m.rows(); ++t) out.emplace_back(m.row(t).begin(), m.row(t).end());
  return out;
}

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

Vector matvec(const Matrix& W, const Vector& x) {
  Vector y(W.rows());
  matvec(W, x, y);
  return y;
}

void matvec(const Matrix& W, std::span<const double> x, std::span<double> y) {
  require(W.cols() == x.size(), "matvec: W.cols != x.len");
  require(W.rows() == y.size(), "matvec: W.rows != y.len");
  const std::size_t n = W.cols();
  for (std::size_t i = 0; i < W.rows(); ++i) {
    const double* w = W.data() + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += w[j] * x[j];
    y[i] = acc;
  }
}

void matvec_transposed_acc(const Matrix& W, std::span<const double> x, std::span<double> y) {
  require(W.rows() == x.size() && W.cols() == y.size(), "matvec_transposed_acc: shape mismatch");
  const std::size_t n = W.cols();
  for (std::size_t i = 0; i < W.rows(); ++i) {
    const double* w = W.data() + i * n;
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) y[j] += w[j] * xi;
  }
}

void outer_acc(Matrix& W, std::span<const double> a, std::span<const double> b) {
  require(W.rows() == a.size() && W.cols() == b.size(), "outer_acc: shape mismatch");
  const std::size_t n = W.cols();
  for (std::size_t i = 0; i < W.rows(); ++i) {
    double* w = W.data() + i * n;
    const double ai = a[i];
    if (ai == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) w[j] += ai * b[j];
  }
}

bool is_binary(ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::add:
    case ElementwiseOp::sub:
    case ElementwiseOp::mul:
    case ElementwiseOp::div:
    case ElementwiseOp::max:
      return true;
    default:
      return false;
  }
}

std::string to_string(ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::add: return "add";
    case ElementwiseOp::sub: return "sub";
    case ElementwiseOp::mul: return "mul";
    case ElementwiseOp::div: return "div";
    case ElementwiseOp::exp: return "exp";
    case ElementwiseOp::sigmoid: return "sigmoid";
    case ElementwiseOp::relu: return "relu";
    case ElementwiseOp::square: return "square";
    case ElementwiseOp::max: return "max";
  }
  return "?";
}

Vector elementwise(ElementwiseOp op, const Vector& a) {
  require(!is_binary(op), "elementwise: " + to_string(op) + " needs two operands");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    switch (op) {
      case ElementwiseOp::exp: out[i] = std::exp(x); break;
      case ElementwiseOp::sigmoid: out[i] = sigmoid(x); break;
      case ElementwiseOp::relu: out[i] = x > 0.0 ? x : 0.0; break;
      case ElementwiseOp::square: out[i] = x * x; break;
      default: break;
    }
  }
  return out;
}

Vector elementwise(ElementwiseOp op, const Vector& a, const Vector& b) {
  require(is_binary(op), "elementwise: " + to_string(op) + " is unary");
  require(a.size() == b.size(), "elementwise: operand lengths differ");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    switch (op) {
      case ElementwiseOp::add: out[i] = a[i] + b[i]; break;
      case ElementwiseOp::sub: out[i] = a[i] - b[i]; break;
      case ElementwiseOp::mul: out[i] = a[i] * b[i]; break;
      case ElementwiseOp::div:
        if (b[i] == 0.0) throw DomainError("elementwise div: zero divisor", i);
        out[i] = a[i] / b[i];
        break;
      case ElementwiseOp::max: out[i] = std::max(a[i], b[i]); break;
      default: break;
    }
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// Running mean m += (x - m) / k: a constant window reproduces its value
// exactly, which a sum followed by a division does not guarantee.
Vector mean_pool(const std::vector<Vector>& window) {
  require(!window.empty(), "mean_pool: empty window");
  const std::size_t d = window.front().size();
  Vector mean(d, 0.0);
  for (std::size_t k = 0; k < window.size(); ++k) {
    require(window[k].size() == d, "mean_pool: unequal vector lengths");
    const double inv = 1.0 / static_cast<double>(k + 1);
    for (std::size_t c = 0; c < d; ++c) mean[c] += (window[k][c] - mean[c]) * inv;
  }
  return mean;
}

Vector mean_pool(const Matrix& rows, std::size_t begin, std::size_t end) {
  require(begin < end && end <= rows.rows(), "mean_pool: empty or out-of-range window");
  Vector mean(rows.cols(), 0.0);
  for (std::size_t t = begin; t < end; ++t) {
    const double inv = 1.0 / static_cast<double>(t - begin + 1);
    for (std::size_t c = 0; c < rows.cols(); ++c) mean[c] += (rows(t, c) - mean[c]) * inv;
  }
  return mean;
}

Matrix project(const Matrix& X, const Matrix& W) {
  require(X.cols() == W.cols(), "project: X.cols != W.cols");
  Matrix Y(X.rows(), W.rows());
  const auto rows = static_cast<std::ptrdiff_t>(X.rows());
#pragma omp parallel for schedule(static) if (rows >= 64)
  for (std::ptrdiff_t t = 0; t < rows; ++t) matvec(W, X.row(t), Y.row(t));
  return Y;
}

Matrix project_serial(const Matrix& X, const Matrix& W) {
  require(X.cols() == W.cols(), "project: X.cols != W.cols");
  Matrix Y(X.rows(), W.rows());
  for (std::size_t t = 0; t < X.rows(); ++t) {
    for (std::size_t i = 0; i < W.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < W.cols(); ++j) acc += W(i, j) * X(t, j);
      Y(t, i) = acc;
    }
  }
  return Y;
}

void project_backward_input(const Matrix& dY, const Matrix& W, Matrix& dX) {
  require(dY.rows() == dX.rows() && dY.cols() == W.rows() && dX.cols() == W.cols(),
          "project_backward_input: shape mismatch");
  for (std::size_t t = 0; t < dY.rows(); ++t) matvec_transposed_acc(W, dY.row(t), dX.row(t));
}

void project_backward_weight(const Matrix& dY, const Matrix& X, Matrix& dW) {
  require(dY.rows() == X.rows() && dW.rows() == dY.cols() && dW.cols() == X.cols(),
          "project_backward_weight: shape mismatch");
  for (std::size_t t = 0; t < dY.rows(); ++t) outer_acc(dW, dY.row(t), X.row(t));
}

std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double stddev) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  require(n > 0, "Rng::below: n must be positive");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

Vector Rng::uniform_vector(std::size_t n, double lo, double hi) {
  Vector v(n);
  for (auto& x : v) x = uniform(lo, hi);
  return v;
}

Matrix Rng::normal_matrix(std::size_t rows, std::size_t cols, double stddev) {
  Matrix m(rows, cols);
  for (auto& x : m.flat()) x = normal(0.0, stddev);
  return m;
}

Matrix Rng::uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (auto& x : m.flat()) x = uniform(lo, hi);
  return m;
}

}  // namespace rrwkv
