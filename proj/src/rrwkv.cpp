#include "rrwkv/rrwkv.hpp"

#include <algorithm>
#include <cmath>

#include "rrwkv/tape.hpp"

namespace rrwkv {

std::string to_string(MappingMode m) { return m == MappingMode::causal ? "causal" : "paper_literal"; }
std::string to_string(MediumMode m) { return m == MediumMode::gate_literal ? "gate_literal" : "gated_pool"; }
std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::mean: return "mean";
    case Pooling::sum: return "sum";
    case Pooling::last: return "last";
  }
  return "?";
}
std::string to_string(Variant v) { return v == Variant::rwkv ? "rwkv" : "rrwkv"; }

MappingMode parse_mapping_mode(const std::string& s) {
  if (s == "causal") return MappingMode::causal;
  if (s == "paper_literal") return MappingMode::paper_literal;
  throw InputError("unknown mapping_mode '" + s + "'");
}

MediumMode parse_medium_mode(const std::string& s) {
  if (s == "gate_literal") return MediumMode::gate_literal;
  if (s == "gated_pool") return MediumMode::gated_pool;
  throw InputError("unknown medium_mode '" + s + "'");
}

Pooling parse_pooling(const std::string& s) {
  if (s == "mean") return Pooling::mean;
  if (s == "sum") return Pooling::sum;
  if (s == "last") return Pooling::last;
  throw InputError("unknown pooling '" + s + "'");
}

Variant parse_variant(const std::string& s) {
  if (s == "rwkv") return Variant::rwkv;
  if (s == "rrwkv") return Variant::rrwkv;
  throw InputError("unknown variant '" + s + "'");
}

void MediumConfig::validate() const {
  require(s >= 1, "medium interval s must be >= 1");
  require(C >= 1, "squeeze width C must be >= 1");
  require(c_max >= 1, "c_max must be >= 1");
}

// ---------------------------------------------------------------------------
// Scheduling

TokenRange InsertionPlan::window(std::size_t j) const {
  require(j < c, "window: medium index out of range");
  if (j == 0) return {};
  return {(j - 1) * s, j * s};
}

std::size_t InsertionPlan::medium_for_token(std::size_t t, MappingMode mode) const {
  require(t < n, "medium_for_token: token index out of range");
  const std::size_t own_window = t / s;
  if (mode == MappingMode::causal) return std::min(c - 1, own_window);
  return std::min(c - 1, own_window + 1);
}

InsertionPlan schedule_mediums(std::size_t n, const MediumConfig& cfg) {
  cfg.validate();
  require(n >= 1, "schedule_mediums: n must be >= 1");
  InsertionPlan plan;
  plan.n = n;
  plan.s = cfg.s;
  plan.c = std::max<std::size_t>(1, n / cfg.s);
  plan.medium_slot.resize(plan.c);
  for (std::size_t j = 0; j < plan.c; ++j) plan.medium_slot[j] = j * cfg.s + j;
  plan.token_slot.resize(n);
  for (std::size_t t = 0; t < n; ++t) plan.token_slot[t] = t + 1 + std::min(plan.c - 1, t / cfg.s);
  return plan;
}

namespace {

void check_plan(const InsertionPlan& plan) {
  require(plan.s >= 1 && plan.c >= 1, "inconsistent plan: s and c must be >= 1");
  require(plan.medium_slot.size() == plan.c && plan.token_slot.size() == plan.n,
          "inconsistent plan: slot table sizes");
  std::vector<bool> used(plan.stream_length(), false);
  const auto claim = [&](std::size_t slot) {
    require(slot < used.size() && !used[slot], "inconsistent plan: slots do not tile the stream");
    used[slot] = true;
  };
  for (auto slot : plan.medium_slot) claim(slot);
  for (auto slot : plan.token_slot) claim(slot);
  require(plan.medium_slot[0] == 0, "inconsistent plan: sentry must lead the stream");
  require((plan.c - 1) * plan.s <= plan.n, "inconsistent plan: more mediums than windows");
}

}  // namespace

// ---------------------------------------------------------------------------
// Squeeze and recalibration

Vector squeeze_raw_medium(const std::vector<Vector>& window) {
  require(!window.empty(), "squeeze_raw_medium: empty window (the sentry is not squeezed)");
  return mean_pool(window);
}

Vector pool_window(const Matrix& X, TokenRange window, Pooling pooling) {
  require(!window.empty() && window.end <= X.rows(), "pool_window: empty or out-of-range window");
  switch (pooling) {
    case Pooling::mean:
      return mean_pool(X, window.begin, window.end);
    case Pooling::sum: {
      Vector acc(X.cols(), 0.0);
      for (std::size_t t = window.begin; t < window.end; ++t)
        for (std::size_t c = 0; c < X.cols(); ++c) acc[c] += X(t, c);
      return acc;
    }
    case Pooling::last:
      return Vector(X.row(window.end - 1).begin(), X.row(window.end - 1).end());
  }
  return {};
}

SqueezeParams SqueezeParams::zeros(const MediumConfig& cfg) {
  return {Matrix(cfg.C, cfg.c_max), Matrix(1, cfg.C)};
}

SqueezeParams SqueezeParams::random(const MediumConfig& cfg, Rng& rng) {
  SqueezeParams p;
  p.w_m = rng.normal_matrix(cfg.C, cfg.c_max, 1.0);
  p.w_s = rng.normal_matrix(1, cfg.C, 1.0 / std::sqrt(static_cast<double>(cfg.C)));
  return p;
}

namespace {

// Writes medium j into `out`; pre_relu (C x d) and gate (d) are optional sinks.
void recalibrate_into(std::size_t j, const Matrix& raw, const SqueezeParams& params, MediumMode mode,
                      std::span<double> out, Matrix* pre_relu, std::span<double> gate) {
  require(j >= 1, "recalibrate_medium: the sentry (index 0) is never recalibrated");
  if (j >= params.w_m.cols())
    throw CapacityError("recalibrate_medium: medium index " + std::to_string(j + 1) +
                        " exceeds c_max " + std::to_string(params.w_m.cols()));
  require(raw.rows() > j, "recalibrate_medium: raw bank shorter than the medium index");
  const std::size_t C = params.w_m.rows();
  const std::size_t d = raw.cols();
  require(params.w_s.rows() == 1 && params.w_s.cols() == C, "recalibrate_medium: W_s must be 1 x C");

  Matrix u(C, d);
  for (std::size_t k = 0; k < C; ++k)
    for (std::size_t i = 0; i <= j; ++i) {
      const double w = params.w_m(k, i);
      for (std::size_t c = 0; c < d; ++c) u(k, c) += w * raw(i, c);
    }
  for (std::size_t c = 0; c < d; ++c) {
    double acc = 0.0;
    for (std::size_t k = 0; k < C; ++k) acc += params.w_s(0, k) * std::max(u(k, c), 0.0);
    const double g = sigmoid(acc);
    if (!gate.empty()) gate[c] = g;
    out[c] = mode == MediumMode::gate_literal ? g : g * raw(j, c);
  }
  if (pre_relu) *pre_relu = std::move(u);
}

}  // namespace

Vector recalibrate_medium(std::size_t j, const Matrix& raw_bank, const SqueezeParams& params,
                          MediumMode mode) {
  Vector out(raw_bank.cols());
  recalibrate_into(j, raw_bank, params, mode, out, nullptr, {});
  return out;
}

MediumBank build_medium_bank(const Matrix& X, const InsertionPlan& plan, const SqueezeParams& params,
                             const MediumConfig& cfg, MediumTape* tape) {
  check_plan(plan);
  require(X.rows() == plan.n, "build_medium_bank: plan does not match the token count");
  const std::size_t d = X.cols();
  MediumBank bank{Matrix(plan.c, d), Matrix(plan.c, d)};
  for (std::size_t j = 1; j < plan.c; ++j) {
    const Vector r = pool_window(X, plan.window(j), cfg.pooling);
    std::copy(r.begin(), r.end(), bank.raw.row(j).begin());
  }
  if (tape) {
    tape->pre_relu.assign(plan.c, Matrix());
    tape->gate = Matrix(plan.c, d);
  }
  for (std::size_t j = 1; j < plan.c; ++j) {
    recalibrate_into(j, bank.raw, params, cfg.medium, bank.final.row(j),
                     tape ? &tape->pre_relu[j] : nullptr,
                     tape ? tape->gate.row(j) : std::span<double>{});
  }
  return bank;
}

// ---------------------------------------------------------------------------
// Interleaving and excitation

Matrix interleave(const Matrix& X, const Matrix& mediums, const InsertionPlan& plan) {
  check_plan(plan);
  require(X.rows() == plan.n && mediums.rows() == plan.c, "interleave: plan does not match inputs");
  require(X.cols() == mediums.cols(), "interleave: token and medium widths differ");
  Matrix stream(plan.stream_length(), X.cols());
  for (std::size_t j = 0; j < plan.c; ++j)
    std::copy(mediums.row(j).begin(), mediums.row(j).end(), stream.row(plan.medium_slot[j]).begin());
  for (std::size_t t = 0; t < plan.n; ++t)
    std::copy(X.row(t).begin(), X.row(t).end(), stream.row(plan.token_slot[t]).begin());
  return stream;
}

Matrix deinterleave(const Matrix& stream, const InsertionPlan& plan) {
  require(stream.rows() == plan.stream_length(), "deinterleave: stream length != n + c");
  Matrix X(plan.n, stream.cols());
  for (std::size_t t = 0; t < plan.n; ++t)
    std::copy(stream.row(plan.token_slot[t]).begin(), stream.row(plan.token_slot[t]).end(), X.row(t).begin());
  return X;
}

Matrix medium_rows(const Matrix& stream, const InsertionPlan& plan) {
  require(stream.rows() == plan.stream_length(), "medium_rows: stream length != n + c");
  Matrix M(plan.c, stream.cols());
  for (std::size_t j = 0; j < plan.c; ++j)
    std::copy(stream.row(plan.medium_slot[j]).begin(), stream.row(plan.medium_slot[j]).end(), M.row(j).begin());
  return M;
}

Matrix mapped_mediums(const Matrix& mediums, const InsertionPlan& plan, MappingMode mode) {
  require(mediums.rows() == plan.c, "mapped_mediums: bank size != plan.c");
  Matrix prev(plan.n, mediums.cols());
  for (std::size_t t = 0; t < plan.n; ++t) {
    const std::size_t j = plan.medium_for_token(t, mode);
    std::copy(mediums.row(j).begin(), mediums.row(j).end(), prev.row(t).begin());
  }
  return prev;
}

Matrix excited_channel_mix(const Matrix& O, const Matrix& mediums, const InsertionPlan& plan,
                           const ExcitedChannelMixParams& params, MappingMode mode, ChannelMixTape* tape) {
  require(O.rows() == plan.n, "excited_channel_mix: O must hold the token positions only");
  return channel_mix_with_prev(O, mapped_mediums(mediums, plan, mode), params, tape);
}

// ---------------------------------------------------------------------------
// Layers and model

void ModelConfig::validate() const {
  require(d >= 1, "model dim d must be >= 1");
  require(layers >= 1, "layer count must be >= 1");
  require(vocab >= 1, "vocab must be >= 1");
  medium.validate();
}

LayerNormParams LayerNormParams::identity(std::size_t d) { return {Vector(d, 1.0), Vector(d, 0.0)}; }
LayerNormParams LayerNormParams::zeros(std::size_t d) { return {Vector(d, 0.0), Vector(d, 0.0)}; }

Matrix layer_norm(const Matrix& X, const LayerNormParams& params, LayerNormTape* tape) {
  const std::size_t d = X.cols();
  require(params.gain.size() == d && params.bias.size() == d, "layer_norm: parameter width mismatch");
  Matrix Y(X.rows(), d);
  Matrix normalized(X.rows(), d);
  Vector inv_std(X.rows());
  for (std::size_t t = 0; t < X.rows(); ++t) {
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += X(t, c);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (X(t, c) - mean) * (X(t, c) - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[t] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const double n = (X(t, c) - mean) * is;
      normalized(t, c) = n;
      Y(t, c) = params.gain[c] * n + params.bias[c];
    }
  }
  if (tape) *tape = LayerNormTape{std::move(normalized), std::move(inv_std)};
  return Y;
}

namespace {

void add_into(Matrix& acc, const Matrix& x) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc.flat()[i] += x.flat()[i];
}

}  // namespace

Matrix layer_forward(const Matrix& X, const LayerParams& params, const ModelConfig& cfg, LayerTape* tape) {
  LayerNormTape* ln1_tape = tape ? &tape->ln1 : nullptr;
  Matrix a = layer_norm(X, params.ln1, ln1_tape);

  Matrix x1 = X;
  Matrix mediums;
  InsertionPlan plan;
  if (cfg.variant == Variant::rwkv) {
    add_into(x1, time_mix_forward(a, params.time_mix, tape ? &tape->time_mix : nullptr));
  } else {
    plan = schedule_mediums(X.rows(), cfg.medium);
    MediumBank bank = build_medium_bank(a, plan, params.squeeze, cfg.medium, tape ? &tape->medium : nullptr);
    const Matrix stream = interleave(a, bank.final, plan);
    add_into(x1, deinterleave(time_mix_forward(stream, params.time_mix, tape ? &tape->time_mix : nullptr), plan));
    mediums = bank.final;
    if (tape) tape->bank = std::move(bank);
  }

  const Matrix b = layer_norm(x1, params.ln2, tape ? &tape->ln2 : nullptr);
  Matrix y = x1;
  if (cfg.variant == Variant::rwkv) {
    add_into(y, channel_mix_forward(b, params.channel_mix, tape ? &tape->channel_mix : nullptr));
  } else {
    add_into(y, excited_channel_mix(b, mediums, plan, params.channel_mix, cfg.medium.mapping,
                                    tape ? &tape->channel_mix : nullptr));
  }
  if (tape) {
    tape->ln1_out = std::move(a);
    tape->plan = std::move(plan);
  }
  return y;
}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Model m;
  m.config = cfg;
  m.embedding = rng.normal_matrix(cfg.vocab, cfg.d, 1.0);
  m.layers.resize(cfg.layers);
  for (auto& layer : m.layers) {
    layer.ln1 = LayerNormParams::identity(cfg.d);
    layer.ln2 = LayerNormParams::identity(cfg.d);
    layer.time_mix = TimeMixParams::random(cfg.d, rng);
    layer.channel_mix = ChannelMixParams::random(cfg.d, rng);
    if (cfg.variant == Variant::rrwkv) layer.squeeze = SqueezeParams::random(cfg.medium, rng);
  }
  m.ln_out = LayerNormParams::identity(cfg.d);
  m.head = rng.normal_matrix(cfg.vocab, cfg.d, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
  return m;
}

Model Model::zeros(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.config = cfg;
  m.embedding = Matrix(cfg.vocab, cfg.d);
  m.layers.resize(cfg.layers);
  for (auto& layer : m.layers) {
    layer.ln1 = LayerNormParams::zeros(cfg.d);
    layer.ln2 = LayerNormParams::zeros(cfg.d);
    layer.time_mix = TimeMixParams::zeros(cfg.d);
    layer.channel_mix = ChannelMixParams::zeros(cfg.d);
    if (cfg.variant == Variant::rrwkv) layer.squeeze = SqueezeParams::zeros(cfg.medium);
  }
  m.ln_out = LayerNormParams::zeros(cfg.d);
  m.head = Matrix(cfg.vocab, cfg.d);
  return m;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  visit(*this, [&n](const std::string&, const auto& tensor) { n += values_of(tensor).size(); });
  return n;
}

void Model::clamp_shift_weights() {
  for (auto& layer : layers) {
    for (Vector* mu : {&layer.time_mix.mu_q, &layer.time_mix.mu_k, &layer.time_mix.mu_v,
                       &layer.channel_mix.mu_r, &layer.channel_mix.mu_z})
      for (auto& x : *mu) x = std::clamp(x, 0.0, 1.0);
  }
}

Matrix embed(const Model& model, std::span<const int> ids) {
  const std::size_t d = model.config.d;
  Matrix x0(ids.size(), d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const int id = ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= model.config.vocab)
      throw InputError("token id " + std::to_string(id) + " at position " + std::to_string(t) +
                       " outside vocab of " + std::to_string(model.config.vocab));
    std::copy(model.embedding.row(id).begin(), model.embedding.row(id).end(), x0.row(t).begin());
  }
  return x0;
}

Matrix forward_embedded(const Model& model, const Matrix& x0, GradTape* tape) {
  require(x0.rows() >= 1, "model_forward: empty sequence");
  require(x0.cols() == model.config.d, "model_forward: embedded width != d");
  if (tape) {
    tape->x0 = x0;
    tape->layers.assign(model.layers.size(), LayerTape{});
    tape->complete = false;
  }
  Matrix x = x0;
  for (std::size_t l = 0; l < model.layers.size(); ++l)
    x = layer_forward(x, model.layers[l], model.config, tape ? &tape->layers[l] : nullptr);
  Matrix normed = layer_norm(x, model.ln_out, tape ? &tape->ln_out : nullptr);
  Matrix logits = project(normed, model.head);
  if (tape) {
    tape->head_input = std::move(normed);
    tape->logits = logits;
    tape->complete = true;
  }
  return logits;
}

Matrix model_forward(const Model& model, std::span<const int> ids, GradTape* tape) {
  Matrix x0 = embed(model, ids);
  Matrix logits = forward_embedded(model, x0, tape);
  if (tape) tape->ids.assign(ids.begin(), ids.end());
  return logits;
}

}  // namespace rrwkv
