#include "rrwkv/backward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rrwkv {

void wkv_backward(const Matrix& K, const Matrix& V, const WkvTrace& trace, const Matrix& dH, Matrix& dK,
                  Matrix& dV) {
  const std::size_t T = K.rows(), d = K.cols();
  require(V.rows() == T && dH.rows() == T && trace.p.rows() == T && trace.b.rows() == T,
          "wkv_backward: length mismatch");
  dK = Matrix(T, d);
  dV = Matrix(T, d);
  for (std::size_t c = 0; c < d; ++c) {
    double alpha = 0.0;  // sum_{t>=i} dH_t e^{p_i - p_t} / b_t
    double beta = 0.0;   // same with an extra h_t factor
    for (std::size_t i = T; i-- > 0;) {
      const double carry = i + 1 < T ? std::exp(trace.p(i, c) - trace.p(i + 1, c)) : 0.0;
      const double g = dH(i, c) / trace.b(i, c);
      alpha = g + carry * alpha;
      beta = g * trace.h(i, c) + carry * beta;
      const double w = std::exp(K(i, c) - trace.p(i, c));
      dV(i, c) = w * alpha;
      dK(i, c) = w * (V(i, c) * alpha - beta);
    }
  }
}

void shift_project_backward(const Matrix& X, const Matrix& Prev, const Vector& mu, const Matrix& W,
                            const Matrix& dY, Matrix& dX, Matrix& dPrev, Vector& dmu, Matrix& dW) {
  const std::size_t T = X.rows(), d = X.cols();
  Vector mixed(d), dmixed(d);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < d; ++c) mixed[c] = mu[c] * X(t, c) + (1.0 - mu[c]) * Prev(t, c);
    outer_acc(dW, dY.row(t), mixed);
    std::fill(dmixed.begin(), dmixed.end(), 0.0);
    matvec_transposed_acc(W, dY.row(t), dmixed);
    for (std::size_t c = 0; c < d; ++c) {
      dX(t, c) += mu[c] * dmixed[c];
      dPrev(t, c) += (1.0 - mu[c]) * dmixed[c];
      dmu[c] += dmixed[c] * (X(t, c) - Prev(t, c));
    }
  }
}

namespace {

// Prev = shift_down(X): fold dPrev[t] back onto row t-1.
void unshift_into(const Matrix& dPrev, Matrix& dX) {
  for (std::size_t t = 1; t < dPrev.rows(); ++t)
    for (std::size_t c = 0; c < dPrev.cols(); ++c) dX(t - 1, c) += dPrev(t, c);
}

}  // namespace

Matrix time_mix_backward(const TimeMixTape& tape, const TimeMixParams& params, const Matrix& dOut,
                         TimeMixParams& grads) {
  const Matrix& X = tape.x;
  const std::size_t T = X.rows(), d = X.cols();
  require(dOut.rows() == T && dOut.cols() == d, "time_mix_backward: gradient shape mismatch");

  Matrix G(T, d);
  for (std::size_t i = 0; i < G.size(); ++i) G.flat()[i] = sigmoid(tape.q.flat()[i]) * tape.wkv.h.flat()[i];
  project_backward_weight(dOut, G, grads.w_o);
  Matrix dG(T, d);
  project_backward_input(dOut, params.w_o, dG);

  Matrix dQ(T, d), dH(T, d);
  for (std::size_t i = 0; i < G.size(); ++i) {
    const double s = sigmoid(tape.q.flat()[i]);
    dH.flat()[i] = dG.flat()[i] * s;
    dQ.flat()[i] = dG.flat()[i] * tape.wkv.h.flat()[i] * s * (1.0 - s);
  }
  Matrix dK, dV;
  wkv_backward(tape.k, tape.v, tape.wkv, dH, dK, dV);

  const Matrix prev = shift_down(X);
  Matrix dX(T, d), dPrev(T, d);
  shift_project_backward(X, prev, params.mu_q, params.w_q, dQ, dX, dPrev, grads.mu_q, grads.w_q);
  shift_project_backward(X, prev, params.mu_k, params.w_k, dK, dX, dPrev, grads.mu_k, grads.w_k);
  shift_project_backward(X, prev, params.mu_v, params.w_v, dV, dX, dPrev, grads.mu_v, grads.w_v);
  unshift_into(dPrev, dX);
  return dX;
}

ChannelMixInputGrads channel_mix_backward(const ChannelMixTape& tape, const ChannelMixParams& params,
                                          const Matrix& dOut, ChannelMixParams& grads) {
  const std::size_t T = tape.x.rows(), d = tape.x.cols();
  require(dOut.rows() == T && dOut.cols() == d, "channel_mix_backward: gradient shape mismatch");

  Matrix du(T, d), dr(T, d), sq(T, d);
  for (std::size_t i = 0; i < du.size(); ++i) {
    const double s = sigmoid(tape.r.flat()[i]);
    du.flat()[i] = dOut.flat()[i] * s;
    dr.flat()[i] = dOut.flat()[i] * tape.u.flat()[i] * s * (1.0 - s);
    const double relu = std::max(tape.z.flat()[i], 0.0);
    sq.flat()[i] = relu * relu;
  }
  project_backward_weight(du, sq, grads.w_p);
  Matrix dsq(T, d);
  project_backward_input(du, params.w_p, dsq);
  Matrix dz(T, d);
  for (std::size_t i = 0; i < dz.size(); ++i) dz.flat()[i] = dsq.flat()[i] * 2.0 * std::max(tape.z.flat()[i], 0.0);

  ChannelMixInputGrads out{Matrix(T, d), Matrix(T, d)};
  shift_project_backward(tape.x, tape.prev, params.mu_r, params.w_r, dr, out.dx, out.dprev, grads.mu_r, grads.w_r);
  shift_project_backward(tape.x, tape.prev, params.mu_z, params.w_z, dz, out.dx, out.dprev, grads.mu_z, grads.w_z);
  return out;
}

Matrix layer_norm_backward(const LayerNormTape& tape, const LayerNormParams& params, const Matrix& dY,
                           LayerNormParams& grads) {
  const std::size_t T = dY.rows(), d = dY.cols();
  Matrix dX(T, d);
  Vector dn(d);
  const double inv_d = 1.0 / static_cast<double>(d);
  for (std::size_t t = 0; t < T; ++t) {
    double mean_dn = 0.0, mean_dn_n = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double n = tape.normalized(t, c);
      grads.gain[c] += dY(t, c) * n;
      grads.bias[c] += dY(t, c);
      dn[c] = dY(t, c) * params.gain[c];
      mean_dn += dn[c];
      mean_dn_n += dn[c] * n;
    }
    mean_dn *= inv_d;
    mean_dn_n *= inv_d;
    for (std::size_t c = 0; c < d; ++c)
      dX(t, c) = tape.inv_std[t] * (dn[c] - mean_dn - tape.normalized(t, c) * mean_dn_n);
  }
  return dX;
}

void medium_bank_backward(const InsertionPlan& plan, const SqueezeParams& params, const MediumConfig& cfg,
                          const MediumBank& bank, const MediumTape& tape, const Matrix& dFinal, Matrix& dX,
                          SqueezeParams& grads) {
  const std::size_t c = plan.c, d = bank.raw.cols(), C = params.w_m.rows();
  require(dFinal.rows() == c && dFinal.cols() == d, "medium_bank_backward: gradient shape mismatch");
  Matrix dRaw(c, d);
  Vector dS(d);
  Matrix dU(C, d);
  for (std::size_t j = 1; j < c; ++j) {
    const Matrix& u = tape.pre_relu[j];
    for (std::size_t ch = 0; ch < d; ++ch) {
      const double g = tape.gate(j, ch);
      double dg = dFinal(j, ch);
      if (cfg.medium == MediumMode::gated_pool) {
        dRaw(j, ch) += dg * g;
        dg *= bank.raw(j, ch);
      }
      dS[ch] = dg * g * (1.0 - g);
    }
    for (std::size_t k = 0; k < C; ++k) {
      for (std::size_t ch = 0; ch < d; ++ch) {
        if (u(k, ch) > 0.0) {
          grads.w_s(0, k) += dS[ch] * u(k, ch);
          dU(k, ch) = params.w_s(0, k) * dS[ch];
        } else {
          dU(k, ch) = 0.0;
        }
      }
      for (std::size_t i = 0; i <= j; ++i) {
        const double w = params.w_m(k, i);
        double acc = 0.0;
        for (std::size_t ch = 0; ch < d; ++ch) {
          acc += dU(k, ch) * bank.raw(i, ch);
          dRaw(i, ch) += w * dU(k, ch);
        }
        grads.w_m(k, i) += acc;
      }
    }
  }
  for (std::size_t j = 1; j < c; ++j) {
    const TokenRange win = plan.window(j);
    switch (cfg.pooling) {
      case Pooling::mean: {
        const double inv = 1.0 / static_cast<double>(win.size());
        for (std::size_t t = win.begin; t < win.end; ++t)
          for (std::size_t ch = 0; ch < d; ++ch) dX(t, ch) += dRaw(j, ch) * inv;
        break;
      }
      case Pooling::sum:
        for (std::size_t t = win.begin; t < win.end; ++t)
          for (std::size_t ch = 0; ch < d; ++ch) dX(t, ch) += dRaw(j, ch);
        break;
      case Pooling::last:
        for (std::size_t ch = 0; ch < d; ++ch) dX(win.end - 1, ch) += dRaw(j, ch);
        break;
    }
  }
}

Matrix layer_backward(const LayerTape& tape, const LayerParams& params, const ModelConfig& cfg,
                      const Matrix& dY, LayerParams& grads) {
  const std::size_t T = dY.rows(), d = dY.cols();
  Matrix dx1 = dY;

  auto cm = channel_mix_backward(tape.channel_mix, params.channel_mix, dY, grads.channel_mix);
  Matrix dFinal;
  if (cfg.variant == Variant::rwkv) {
    unshift_into(cm.dprev, cm.dx);
  } else {
    dFinal = Matrix(tape.plan.c, d);
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t j = tape.plan.medium_for_token(t, cfg.medium.mapping);
      for (std::size_t ch = 0; ch < d; ++ch) dFinal(j, ch) += cm.dprev(t, ch);
    }
  }
  const Matrix dx1_ln = layer_norm_backward(tape.ln2, params.ln2, cm.dx, grads.ln2);
  for (std::size_t i = 0; i < dx1.size(); ++i) dx1.flat()[i] += dx1_ln.flat()[i];

  Matrix dA;
  if (cfg.variant == Variant::rwkv) {
    dA = time_mix_backward(tape.time_mix, params.time_mix, dx1, grads.time_mix);
  } else {
    const InsertionPlan& plan = tape.plan;
    Matrix dStream(plan.stream_length(), d);
    for (std::size_t t = 0; t < T; ++t)
      std::copy(dx1.row(t).begin(), dx1.row(t).end(), dStream.row(plan.token_slot[t]).begin());
    const Matrix dStreamIn = time_mix_backward(tape.time_mix, params.time_mix, dStream, grads.time_mix);
    dA = deinterleave(dStreamIn, plan);
    for (std::size_t j = 1; j < plan.c; ++j)
      for (std::size_t ch = 0; ch < d; ++ch) dFinal(j, ch) += dStreamIn(plan.medium_slot[j], ch);
    medium_bank_backward(plan, params.squeeze, cfg.medium, tape.bank, tape.medium, dFinal, dA, grads.squeeze);
  }
  const Matrix dx_ln = layer_norm_backward(tape.ln1, params.ln1, dA, grads.ln1);
  Matrix dX = std::move(dx1);
  for (std::size_t i = 0; i < dX.size(); ++i) dX.flat()[i] += dx_ln.flat()[i];
  return dX;
}

ModelGrads backward(const Model& model, const GradTape& tape, const Matrix& dlogits) {
  require(tape.complete, "backward: incomplete tape");
  require(tape.layers.size() == model.layers.size(), "backward: tape recorded a different layer count");
  require(dlogits.rows() == tape.logits.rows() && dlogits.cols() == tape.logits.cols(),
          "backward: dlogits shape != logits shape");

  ModelGrads out{Model::zeros(model.config), Matrix()};
  Model& g = out.params;
  project_backward_weight(dlogits, tape.head_input, g.head);
  Matrix dnormed(dlogits.rows(), model.config.d);
  project_backward_input(dlogits, model.head, dnormed);
  Matrix dx = layer_norm_backward(tape.ln_out, model.ln_out, dnormed, g.ln_out);
  for (std::size_t l = model.layers.size(); l-- > 0;)
    dx = layer_backward(tape.layers[l], model.layers[l], model.config, dx, g.layers[l]);
  for (std::size_t t = 0; t < tape.ids.size(); ++t)
    for (std::size_t c = 0; c < model.config.d; ++c) g.embedding(tape.ids[t], c) += dx(t, c);
  out.d_x0 = std::move(dx);
  return out;
}

double masked_cross_entropy(const Matrix& logits, std::span<const int> targets, std::span<const std::uint8_t> mask,
                            Matrix* dlogits, double scale) {
  const std::size_t T = logits.rows(), V = logits.cols();
  require(targets.size() == T && mask.size() == T, "masked_cross_entropy: length mismatch");
  std::size_t count = 0;
  for (auto m : mask) count += m != 0;
  if (dlogits) *dlogits = Matrix(T, V);
  if (count == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  double loss = 0.0;
  Vector prob(V);
  for (std::size_t t = 0; t < T; ++t) {
    if (!mask[t]) continue;
    const int y = targets[t];
    require(y >= 0 && static_cast<std::size_t>(y) < V, "masked_cross_entropy: target outside vocab");
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < V; ++v) best = std::max(best, logits(t, v));
    double z = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      prob[v] = std::exp(logits(t, v) - best);
      z += prob[v];
    }
    loss += (std::log(z) + best - logits(t, y)) * inv;
    if (dlogits) {
      for (std::size_t v = 0; v < V; ++v) (*dlogits)(t, v) = scale * inv * (prob[v] / z - (static_cast<int>(v) == y ? 1.0 : 0.0));
    }
  }
  return loss;
}

}  // namespace rrwkv
