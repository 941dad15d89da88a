#pragma once

// RWKV time-mix and channel-mix blocks.
//
// Streams are T x d matrices (row t = token t). The predecessor of the first
// row is the zero vector. Projections use the column convention y = W x.

#include <string>

#include "rrwkv/numerics.hpp"

namespace rrwkv {

struct TimeMixParams {
  Vector mu_q, mu_k, mu_v;  // per-channel shift weights in [0, 1]
  Matrix w_q, w_k, w_v, w_o;

  static TimeMixParams zeros(std::size_t d);
  static TimeMixParams random(std::size_t d, Rng& rng);
  std::size_t dim() const { return mu_q.size(); }
  void validate() const;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("mu_q", self.mu_q);
    f("mu_k", self.mu_k);
    f("mu_v", self.mu_v);
    f("w_q", self.w_q);
    f("w_k", self.w_k);
    f("w_v", self.w_v);
    f("w_o", self.w_o);
  }
};

// Shared by the plain and the medium-excited channel mix; in the excited form
// mu_r / mu_z play the role of the nu weights.
struct ChannelMixParams {
  Vector mu_r, mu_z;
  Matrix w_r, w_z;
  Matrix w_p;  // value projection applied after the squared ReLU

  static ChannelMixParams zeros(std::size_t d);
  static ChannelMixParams random(std::size_t d, Rng& rng);
  std::size_t dim() const { return mu_r.size(); }
  void validate() const;

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("mu_r", self.mu_r);
    f("mu_z", self.mu_z);
    f("w_r", self.w_r);
    f("w_z", self.w_z);
    f("w_p", self.w_p);
  }
};

// ---------------------------------------------------------------------------
// WKV recurrence

struct WkvState {
  Vector a;  // stabilized numerator
  Vector b;  // stabilized denominator
  Vector p;  // running exponent offset

  static WkvState zeros(std::size_t d) { return {Vector(d, 0.0), Vector(d, 0.0), Vector(d, 0.0)}; }
};

struct WkvStepResult {
  Vector h;
  WkvState state;
};

// One step of the stabilized recurrence. Every exponent argument is <= 0.
// Throws ContractViolation on non-finite k or v.
WkvStepResult wkv_step(const WkvState& state, const Vector& k, const Vector& v);

// Folds wkv_step over the rows of K and V; the serial reference.
Matrix wkv_fold(const Matrix& K, const Matrix& V);

// Whole-sequence WKV; channels are independent and run in parallel.
Matrix wkv_scan(const Matrix& K, const Matrix& V);

// Per-step exponent offsets and denominators, kept for the backward pass.
struct WkvTrace {
  Matrix h, p, b;
};
WkvTrace wkv_scan_traced(const Matrix& K, const Matrix& V);

// ---------------------------------------------------------------------------
// Token shift

// (mu * x_t + (1 - mu) * x_prev) projected by W.
Vector token_shift(const Vector& x_t, const Vector& x_prev, const Vector& mu, const Matrix& W);

// Row t of the result is row t-1 of X; row 0 is zero.
Matrix shift_down(const Matrix& X);

// Y[t] = W (mu * X[t] + (1 - mu) * Prev[t])
Matrix shift_project(const Matrix& X, const Matrix& Prev, const Vector& mu, const Matrix& W);

// ---------------------------------------------------------------------------
// Blocks

struct TimeMixTape {
  Matrix x;  // block input
  Matrix q, k, v;
  WkvTrace wkv;
};

// o_t = W_o (sigmoid(q_t) * h_t) with q, k, v token-shifted projections of X.
Matrix time_mix_forward(const Matrix& X, const TimeMixParams& params, TimeMixTape* tape = nullptr);

// sigmoid(q_t) * h_t, the part of the time mix before W_o.
Matrix time_mix_core(const Matrix& X, const TimeMixParams& params);

struct ChannelMixTape {
  Matrix x, prev;  // block input and the row each token interpolates with
  Matrix r, z;
  Matrix u;        // W_p relu(z)^2
};

// x~_t = sigmoid(r_t) * W_p relu(z_t)^2, interpolating each row with Prev.
Matrix channel_mix_with_prev(const Matrix& X, const Matrix& Prev, const ChannelMixParams& params,
                             ChannelMixTape* tape = nullptr);

// Plain channel mix: Prev = shift_down(O).
Matrix channel_mix_forward(const Matrix& O, const ChannelMixParams& params, ChannelMixTape* tape = nullptr);

}  // namespace rrwkv
