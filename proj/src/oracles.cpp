#include "rrwkv/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rrwkv/kernels.hpp"

namespace rrwkv::oracle {

void AttentionInput::validate() const {
  require(Q.rows() >= 1, "attention: T must be >= 1");
  require(K.rows() == Q.rows() && V.rows() == Q.rows(), "attention: unequal sequence lengths");
  require(K.cols() == Q.cols() && V.cols() == Q.cols(), "attention: unequal channel dims");
  if (bias) require(bias->rows() == Q.rows() && bias->cols() == Q.rows(), "attention: bias must be T x T");
}

Matrix dot_product_attention(const AttentionInput& input) {
  input.validate();
  require(!input.bias.has_value(), "dot_product_attention takes no position bias");
  return kernels::dot_attention_serial(input.Q, input.K, input.V);
}

Matrix tensor_product_average(const AttentionInput& input) {
  input.validate();
  const std::size_t T = input.length();
  const std::size_t d = input.Q.cols();
  const auto bias = [&](std::size_t t, std::size_t i) { return input.bias ? (*input.bias)(t, i) : 0.0; };

  Matrix out(T, d);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i <= t; ++i) best = std::max(best, input.K(i, c) + bias(t, i));
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i <= t; ++i) {
        const double w = std::exp(input.K(i, c) + bias(t, i) - best);
        num += w * input.V(i, c);
        den += w;
      }
      out(t, c) = num / den;
    }
  }
  return out;
}

Matrix tensor_product_attention(const AttentionInput& input) {
  Matrix out = tensor_product_average(input);
  for (std::size_t t = 0; t < out.rows(); ++t)
    for (std::size_t c = 0; c < out.cols(); ++c) out(t, c) *= sigmoid(input.Q(t, c));
  return out;
}

Matrix naive_wkv(const Matrix& K, const Matrix& V) {
  require(K.rows() == V.rows() && K.cols() == V.cols(), "naive_wkv: shape mismatch");
  for (std::size_t i = 0; i < K.size(); ++i) {
    if (!(std::abs(K.flat()[i]) <= kNaiveKeyLimit))
      throw DomainError("naive_wkv: |k| exceeds the overflow guard", i);
  }
  Matrix H(K.rows(), K.cols());
  for (std::size_t c = 0; c < K.cols(); ++c) {
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < K.rows(); ++t) {
      const double w = std::exp(K(t, c));
      num += w * V(t, c);
      den += w;
      H(t, c) = num / den;
    }
  }
  return H;
}

}  // namespace rrwkv::oracle
