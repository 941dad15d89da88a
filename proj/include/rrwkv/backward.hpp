#pragma once

// Reverse-mode passes for every forward block. Each takes the tape its
// forward recorded, the gradient of the block output, and accumulates into
// a zero-initialized parameter structure of the same shape; input gradients
// are returned.

#include <cstdint>
#include <span>

#include "rrwkv/rrwkv.hpp"
#include "rrwkv/tape.hpp"

namespace rrwkv {

// Gradients of h = WKV(K, V). The stabilizer cancels in h, so the result is
//   dV_i = sum_{t>=i} dH_t e^{k_i} / B_t
//   dK_i = sum_{t>=i} dH_t e^{k_i} (v_i - h_t) / B_t
// with B_t = b_t e^{p_t}, accumulated right-to-left with factors
// e^{p_i - p_{i+1}} <= 1 so no exponent is positive.
void wkv_backward(const Matrix& K, const Matrix& V, const WkvTrace& trace, const Matrix& dH, Matrix& dK,
                  Matrix& dV);

// Y = W (mu * X + (1 - mu) * Prev); accumulates into dX, dPrev, dmu, dW.
void shift_project_backward(const Matrix& X, const Matrix& Prev, const Vector& mu, const Matrix& W,
                            const Matrix& dY, Matrix& dX, Matrix& dPrev, Vector& dmu, Matrix& dW);

Matrix time_mix_backward(const TimeMixTape& tape, const TimeMixParams& params, const Matrix& dOut,
                         TimeMixParams& grads);

struct ChannelMixInputGrads {
  Matrix dx;     // w.r.t. the block input rows
  Matrix dprev;  // w.r.t. the interpolation partner of each row
};

ChannelMixInputGrads channel_mix_backward(const ChannelMixTape& tape, const ChannelMixParams& params,
                                          const Matrix& dOut, ChannelMixParams& grads);

Matrix layer_norm_backward(const LayerNormTape& tape, const LayerNormParams& params, const Matrix& dY,
                           LayerNormParams& grads);

// Routes dFinal (c x d, gradient w.r.t. the recalibrated mediums) through the
// gate and pooling into dX (accumulated) and the squeeze weights.
void medium_bank_backward(const InsertionPlan& plan, const SqueezeParams& params, const MediumConfig& cfg,
                          const MediumBank& bank, const MediumTape& tape, const Matrix& dFinal, Matrix& dX,
                          SqueezeParams& grads);

Matrix layer_backward(const LayerTape& tape, const LayerParams& params, const ModelConfig& cfg,
                      const Matrix& dY, LayerParams& grads);

struct ModelGrads {
  Model params;  // same layout as the model
  Matrix d_x0;   // w.r.t. the embedded inputs
};

// Throws ContractViolation when the tape is incomplete.
ModelGrads backward(const Model& model, const GradTape& tape, const Matrix& dlogits);

// Mean cross-entropy over positions with mask != 0. When dlogits is given it
// receives scale * d(loss)/d(logits). Returns 0 for an empty mask.
double masked_cross_entropy(const Matrix& logits, std::span<const int> targets, std::span<const std::uint8_t> mask,
                            Matrix* dlogits = nullptr, double scale = 1.0);

}  // namespace rrwkv
