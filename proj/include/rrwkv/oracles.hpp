#pragma once

// Quadratic-time reference attention used as ground truth for the recurrent
// kernels. Sequences are T x d matrices, one row per position.

#include <optional>

#include "rrwkv/numerics.hpp"

namespace rrwkv::oracle {

struct AttentionInput {
  Matrix Q;
  Matrix K;
  Matrix V;
  // T x T position biases w_{t,i}; only the lower triangle (i <= t) is read.
  std::optional<Matrix> bias;

  std::size_t length() const { return Q.rows(); }
  void validate() const;
};

// Causal softmax(q_t . k_i) attention without the 1/sqrt(d) scale.
Matrix dot_product_attention(const AttentionInput& input);

// sigmoid(q_t) * sum_{i<=t} exp(k_i + w_{t,i}) v_i / sum_{i<=t} exp(k_i + w_{t,i}),
// channel-wise, with a per-channel max subtracted from the exponents.
Matrix tensor_product_attention(const AttentionInput& input);

// Same weighted average without the sigmoid(q) gate.
Matrix tensor_product_average(const AttentionInput& input);

// Largest |k| accepted by naive_wkv; exp(30) * T stays far from overflow.
inline constexpr double kNaiveKeyLimit = 30.0;

// h_t = sum_{i<=t} exp(k_i) v_i / sum_{i<=t} exp(k_i) by direct summation.
// Throws DomainError when any |k| exceeds kNaiveKeyLimit.
Matrix naive_wkv(const Matrix& K, const Matrix& V);

}  // namespace rrwkv::oracle
