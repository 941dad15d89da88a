#pragma once

// Scalar-generic inner kernels shared by the 64-bit model code and the 32-bit
// benchmark. Every kernel takes a counter policy; MaddCounter tallies scalar
// multiply-adds as they execute, NoCount compiles away.
//
// Each kernel has a serial form (the reference) and an OpenMP form that splits
// independent work (query rows for attention, channels for WKV). The two must
// agree exactly: per-row / per-channel arithmetic is identical and nothing is
// reduced across threads.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "rrwkv/numerics.hpp"

namespace rrwkv::kernels {

struct NoCount {
  void operator()(std::uint64_t) const noexcept {}
};

struct MaddCounter {
  std::uint64_t madds = 0;
  void operator()(std::uint64_t n) noexcept { madds += n; }
};

// ---------------------------------------------------------------------------
// Causal dot-product attention, one query row.
// out_t = sum_{i<=t} softmax_i(q_t . k_i) v_i, unscaled, max-subtracted.
// Madds: t*d for the scores plus t*d for the weighted sum (1-based t).
template <typename S, typename Count>
void dot_attention_row(const BasicMatrix<S>& Q, const BasicMatrix<S>& K, const BasicMatrix<S>& V,
                       std::size_t t, std::vector<S>& scores, BasicMatrix<S>& out, Count& count) {
  const std::size_t d = Q.cols();
  const std::size_t dv = V.cols();
  scores.resize(t + 1);
  S best = -std::numeric_limits<S>::infinity();
  for (std::size_t i = 0; i <= t; ++i) {
    S acc = S{0};
    for (std::size_t c = 0; c < d; ++c) acc += Q(t, c) * K(i, c);
    scores[i] = acc;
    best = std::max(best, acc);
  }
  count(static_cast<std::uint64_t>(t + 1) * d);
  S denom = S{0};
  for (std::size_t i = 0; i <= t; ++i) {
    scores[i] = std::exp(scores[i] - best);
    denom += scores[i];
  }
  auto o = out.row(t);
  std::fill(o.begin(), o.end(), S{0});
  for (std::size_t i = 0; i <= t; ++i) {
    const S w = scores[i] / denom;
    for (std::size_t c = 0; c < dv; ++c) o[c] += w * V(i, c);
  }
  count(static_cast<std::uint64_t>(t + 1) * dv);
}

template <typename S, typename Count = NoCount>
BasicMatrix<S> dot_attention_serial(const BasicMatrix<S>& Q, const BasicMatrix<S>& K,
                                    const BasicMatrix<S>& V, Count&& count = {}) {
  BasicMatrix<S> out(Q.rows(), V.cols());
  std::vector<S> scores;
  for (std::size_t t = 0; t < Q.rows(); ++t) dot_attention_row(Q, K, V, t, scores, out, count);
  return out;
}

template <typename S>
BasicMatrix<S> dot_attention_omp(const BasicMatrix<S>& Q, const BasicMatrix<S>& K,
                                 const BasicMatrix<S>& V) {
  BasicMatrix<S> out(Q.rows(), V.cols());
  const auto rows = static_cast<std::ptrdiff_t>(Q.rows());
#pragma omp parallel
  {
    std::vector<S> scores;
    NoCount none;
    // Row cost grows with t; dynamic chunks keep threads balanced.
#pragma omp for schedule(dynamic, 16)
    for (std::ptrdiff_t t = 0; t < rows; ++t)
      dot_attention_row(Q, K, V, static_cast<std::size_t>(t), scores, out, none);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stabilized WKV recurrence on one channel of a T x d stream.
//   p_t = max(p_{t-1}, k_t)
//   a_t = e^{p_{t-1}-p_t} a_{t-1} + e^{k_t-p_t} v_t
//   b_t = e^{p_{t-1}-p_t} b_{t-1} + e^{k_t-p_t}
//   h_t = a_t / b_t
// starting from a = b = p = 0. Madds: 3 per channel per step.
// P and B (optional) receive p_t and b_t for the backward pass.
template <typename S, typename Count>
void wkv_channel(const BasicMatrix<S>& K, const BasicMatrix<S>& V, std::size_t c, BasicMatrix<S>& H,
                 BasicMatrix<S>* P, BasicMatrix<S>* B, Count& count) {
  S a = S{0}, b = S{0}, p = S{0};
  for (std::size_t t = 0; t < K.rows(); ++t) {
    const S k = K(t, c);
    const S p_new = std::max(p, k);
    const S decay = std::exp(p - p_new);
    const S fresh = std::exp(k - p_new);
    a = decay * a + fresh * V(t, c);
    b = decay * b + fresh;
    p = p_new;
    H(t, c) = a / b;
    if (P) (*P)(t, c) = p;
    if (B) (*B)(t, c) = b;
  }
  count(static_cast<std::uint64_t>(K.rows()) * 3);
}

template <typename S, typename Count = NoCount>
BasicMatrix<S> wkv_serial(const BasicMatrix<S>& K, const BasicMatrix<S>& V, Count&& count = {},
                          BasicMatrix<S>* P = nullptr, BasicMatrix<S>* B = nullptr) {
  BasicMatrix<S> H(K.rows(), K.cols());
  for (std::size_t c = 0; c < K.cols(); ++c) wkv_channel(K, V, c, H, P, B, count);
  return H;
}

template <typename S>
BasicMatrix<S> wkv_omp(const BasicMatrix<S>& K, const BasicMatrix<S>& V,
                       BasicMatrix<S>* P = nullptr, BasicMatrix<S>* B = nullptr) {
  BasicMatrix<S> H(K.rows(), K.cols());
  const auto channels = static_cast<std::ptrdiff_t>(K.cols());
#pragma omp parallel for schedule(static) if (K.rows() * K.cols() >= 4096)
  for (std::ptrdiff_t c = 0; c < channels; ++c) {
    NoCount none;
    wkv_channel(K, V, static_cast<std::size_t>(c), H, P, B, none);
  }
  return H;
}

// ---------------------------------------------------------------------------
// Medium squeeze + gate: for medium j >= 1 (0 is the zero sentry)
//   raw_j  = mean of the window tokens
//   U_j    = W_m[:, 0..j] . [raw_0 .. raw_j]^T          (C x d)
//   gate_j = sigmoid(W_s . relu(U_j))                   (d)
// Madds: |window| * d for pooling, C*(j+1)*d for U, C*d for the gate.
template <typename S, typename Count = NoCount>
void medium_gates(const BasicMatrix<S>& X, std::size_t s, std::size_t c, const BasicMatrix<S>& Wm,
                  const BasicMatrix<S>& Ws, BasicMatrix<S>& raw, BasicMatrix<S>& gate,
                  Count&& count = {}) {
  const std::size_t d = X.cols();
  const std::size_t C = Wm.rows();
  raw = BasicMatrix<S>(c, d);
  gate = BasicMatrix<S>(c, d);
  std::vector<S> u(C * d);
  for (std::size_t j = 1; j < c; ++j) {
    const std::size_t begin = (j - 1) * s, end = j * s;
    const S inv = S{1} / static_cast<S>(end - begin);
    for (std::size_t t = begin; t < end; ++t)
      for (std::size_t ch = 0; ch < d; ++ch) raw(j, ch) += inv * X(t, ch);
    count(static_cast<std::uint64_t>(end - begin) * d);

    std::fill(u.begin(), u.end(), S{0});
    for (std::size_t k = 0; k < C; ++k)
      for (std::size_t i = 0; i <= j; ++i) {
        const S w = Wm(k, i);
        for (std::size_t ch = 0; ch < d; ++ch) u[k * d + ch] += w * raw(i, ch);
      }
    count(static_cast<std::uint64_t>(C) * (j + 1) * d);

    for (std::size_t ch = 0; ch < d; ++ch) {
      S acc = S{0};
      for (std::size_t k = 0; k < C; ++k) acc += Ws(0, k) * std::max(u[k * d + ch], S{0});
      gate(j, ch) = sigmoid(acc);
    }
    count(static_cast<std::uint64_t>(C) * d);
  }
}

}  // namespace rrwkv::kernels
