#pragma once

// Medium scheduling, squeeze/recalibration, excitation and model assembly.
//
// Indexing is 0-based throughout: medium 0 is the zero sentry placed before
// the first token, medium j >= 1 follows token j*s - 1 and summarizes tokens
// [(j-1)*s, j*s).

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rrwkv/numerics.hpp"
#include "rrwkv/rwkv.hpp"

namespace rrwkv {

enum class MappingMode { causal, paper_literal };
enum class MediumMode { gate_literal, gated_pool };
enum class Pooling { mean, sum, last };
enum class Variant { rwkv, rrwkv };

std::string to_string(MappingMode m);
std::string to_string(MediumMode m);
std::string to_string(Pooling p);
std::string to_string(Variant v);
MappingMode parse_mapping_mode(const std::string& s);
MediumMode parse_medium_mode(const std::string& s);
Pooling parse_pooling(const std::string& s);
Variant parse_variant(const std::string& s);

struct MediumConfig {
  std::size_t s = 8;       // tokens between mediums
  std::size_t C = 4;       // squeeze bottleneck width
  std::size_t c_max = 64;  // capacity of the per-index squeeze weights
  MappingMode mapping = MappingMode::causal;
  MediumMode medium = MediumMode::gate_literal;
  Pooling pooling = Pooling::mean;

  void validate() const;
  bool operator==(const MediumConfig&) const = default;
};

struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
};

struct InsertionPlan {
  std::size_t n = 0;  // tokens
  std::size_t s = 1;
  std::size_t c = 1;  // mediums, including the sentry
  std::vector<std::size_t> medium_slot;  // stream position of each medium
  std::vector<std::size_t> token_slot;   // stream position of each token

  std::size_t stream_length() const { return n + c; }
  // Tokens pooled into medium j; empty for the sentry.
  TokenRange window(std::size_t j) const;
  // Medium whose value replaces the predecessor of token t in the excited
  // channel mix. causal: latest medium at or before the token.
  // paper_literal: the medium that summarizes the token's own window, or the
  // last medium when that window has none.
  std::size_t medium_for_token(std::size_t t, MappingMode mode) const;
};

// c = max(1, floor(n / s)).
InsertionPlan schedule_mediums(std::size_t n, const MediumConfig& cfg);

// Mean of a nonempty window.
Vector squeeze_raw_medium(const std::vector<Vector>& window);
Vector pool_window(const Matrix& X, TokenRange window, Pooling pooling);

struct SqueezeParams {
  Matrix w_m;  // C x c_max; column j weights raw medium j
  Matrix w_s;  // 1 x C

  static SqueezeParams zeros(const MediumConfig& cfg);
  static SqueezeParams random(const MediumConfig& cfg, Rng& rng);

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("w_m", self.w_m);
    f("w_s", self.w_s);
  }
};

// Gate for medium j >= 1 over raw mediums 0..j (rows of raw_bank):
//   g_j = sigmoid(W_s relu(W_m[:, 0..j] [r_0 .. r_j]^T))
// gate_literal returns g_j, gated_pool returns g_j * r_j.
// Throws ContractViolation for j == 0 and CapacityError for j >= c_max.
Vector recalibrate_medium(std::size_t j, const Matrix& raw_bank, const SqueezeParams& params,
                          MediumMode mode);

struct MediumBank {
  Matrix raw;    // c x d, row 0 is zero
  Matrix final;  // c x d, row 0 is zero
};

struct MediumTape {
  std::vector<Matrix> pre_relu;  // per medium, C x d (empty for the sentry)
  Matrix gate;                   // c x d
};

MediumBank build_medium_bank(const Matrix& X, const InsertionPlan& plan, const SqueezeParams& params,
                             const MediumConfig& cfg, MediumTape* tape = nullptr);

// Stream with mediums placed at plan.medium_slot and tokens at plan.token_slot.
Matrix interleave(const Matrix& X, const Matrix& mediums, const InsertionPlan& plan);
Matrix deinterleave(const Matrix& stream, const InsertionPlan& plan);
Matrix medium_rows(const Matrix& stream, const InsertionPlan& plan);

// Predecessor rows for the excited channel mix: row t is the medium mapped to token t.
Matrix mapped_mediums(const Matrix& mediums, const InsertionPlan& plan, MappingMode mode);

using ExcitedChannelMixParams = ChannelMixParams;

// r_t = W_r (nu_r * o_t + (1 - nu_r) * m_t), z_t likewise, output as in the
// plain channel mix. O holds token positions only.
Matrix excited_channel_mix(const Matrix& O, const Matrix& mediums, const InsertionPlan& plan,
                           const ExcitedChannelMixParams& params, MappingMode mode,
                           ChannelMixTape* tape = nullptr);

// ---------------------------------------------------------------------------
// Model

struct ModelConfig {
  std::size_t d = 8;
  std::size_t layers = 1;
  std::size_t vocab = 16;
  Variant variant = Variant::rrwkv;
  MediumConfig medium;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Per-token standardization with learned gain and offset.
struct LayerNormParams {
  Vector gain, bias;

  static LayerNormParams identity(std::size_t d);
  static LayerNormParams zeros(std::size_t d);

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f("gain", self.gain);
    f("bias", self.bias);
  }
};

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormTape {
  Matrix normalized;  // (x - mean) / std
  Vector inv_std;     // per row
};

Matrix layer_norm(const Matrix& X, const LayerNormParams& params, LayerNormTape* tape = nullptr);

struct LayerParams {
  LayerNormParams ln1, ln2;
  TimeMixParams time_mix;
  ChannelMixParams channel_mix;  // rwkv: mu weights; rrwkv: nu weights of the excited mix
  SqueezeParams squeeze;         // rrwkv only

  template <typename Self, typename F>
  static void visit(Self& self, Variant variant, F&& f) {
    const auto prefixed = [&f](const std::string& prefix) {
      return [&f, prefix](const char* name, auto& tensor) { f(prefix + name, tensor); };
    };
    LayerNormParams::visit(self.ln1, prefixed("ln1."));
    TimeMixParams::visit(self.time_mix, prefixed("time_mix."));
    LayerNormParams::visit(self.ln2, prefixed("ln2."));
    if (variant == Variant::rwkv) {
      ChannelMixParams::visit(self.channel_mix, prefixed("channel_mix."));
    } else {
      ChannelMixParams::visit(self.channel_mix, prefixed("excited_mix."));
      SqueezeParams::visit(self.squeeze, prefixed("squeeze."));
    }
  }
};

struct LayerTape {
  LayerNormTape ln1, ln2;
  Matrix ln1_out;
  InsertionPlan plan;
  MediumTape medium;
  MediumBank bank;
  TimeMixTape time_mix;
  ChannelMixTape channel_mix;
};

// One residual layer:
//   a  = LN1(x)
//   x' = x + TimeMix(stream(a))|tokens
//   y  = x' + ChannelMix(LN2(x'))
// where for rrwkv the stream interleaves the recalibrated mediums of a and the
// channel mix interpolates with each token's mapped medium.
Matrix layer_forward(const Matrix& X, const LayerParams& params, const ModelConfig& cfg,
                     LayerTape* tape = nullptr);

struct Model {
  ModelConfig config;
  Matrix embedding;  // vocab x d
  std::vector<LayerParams> layers;
  LayerNormParams ln_out;
  Matrix head;  // vocab x d

  static Model init(const ModelConfig& cfg, std::uint64_t seed);
  // Same structure, every value zero (gradient accumulators).
  static Model zeros(const ModelConfig& cfg);

  // Visits every parameter as (name, Vector& | Matrix&) in a fixed order.
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f(std::string("embedding"), self.embedding);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      const std::string prefix = "layers." + std::to_string(l) + ".";
      LayerParams::visit(self.layers[l], self.config.variant,
                         [&](const std::string& name, auto& tensor) { f(prefix + name, tensor); });
    }
    LayerNormParams::visit(self.ln_out, [&](const char* name, auto& tensor) {
      f(std::string("ln_out.") + name, tensor);
    });
    f(std::string("head"), self.head);
  }

  std::size_t parameter_count() const;
  // Clamp every shift weight (mu / nu) into [0, 1].
  void clamp_shift_weights();
};

// Parameter value views used by optimizers, checkpoints and gradient checks.
inline std::span<double> values_of(Vector& v) { return v; }
inline std::span<const double> values_of(const Vector& v) { return v; }
inline std::span<double> values_of(Matrix& m) { return m.flat(); }
inline std::span<const double> values_of(const Matrix& m) { return m.flat(); }
inline std::pair<std::size_t, std::size_t> shape_of(const Vector& v) { return {1, v.size()}; }
inline std::pair<std::size_t, std::size_t> shape_of(const Matrix& m) { return {m.rows(), m.cols()}; }

struct GradTape;

// Embedding lookup; throws InputError for ids outside [0, vocab).
Matrix embed(const Model& model, std::span<const int> ids);

// Logits (T x vocab) from the embedded stream X0 (T x d).
Matrix forward_embedded(const Model& model, const Matrix& x0, GradTape* tape = nullptr);

// Logits (T x vocab); softmax is left to loss / evaluation code.
Matrix model_forward(const Model& model, std::span<const int> ids, GradTape* tape = nullptr);

}  // namespace rrwkv
