#include "rrwkv/rwkv.hpp"

#include <algorithm>
#include <cmath>

#include "rrwkv/kernels.hpp"

namespace rrwkv {

namespace {

void require_unit_interval(const Vector& mu, const char* what) {
  for (std::size_t i = 0; i < mu.size(); ++i)
    if (!(mu[i] >= 0.0 && mu[i] <= 1.0)) throw DomainError(std::string(what) + " outside [0,1]", i);
}

void require_square(const Matrix& W, std::size_t d, const char* what) {
  require(W.rows() == d && W.cols() == d, std::string(what) + " must be d x d");
}

double init_scale(std::size_t d) { return 1.0 / std::sqrt(static_cast<double>(d)); }

}  // namespace

TimeMixParams TimeMixParams::zeros(std::size_t d) {
  return {Vector(d, 0.0), Vector(d, 0.0), Vector(d, 0.0),
          Matrix(d, d),   Matrix(d, d),   Matrix(d, d), Matrix(d, d)};
}

TimeMixParams TimeMixParams::random(std::size_t d, Rng& rng) {
  TimeMixParams p;
  p.mu_q = rng.uniform_vector(d, 0.0, 1.0);
  p.mu_k = rng.uniform_vector(d, 0.0, 1.0);
  p.mu_v = rng.uniform_vector(d, 0.0, 1.0);
  p.w_q = rng.normal_matrix(d, d, init_scale(d));
  p.w_k = rng.normal_matrix(d, d, init_scale(d));
  p.w_v = rng.normal_matrix(d, d, init_scale(d));
  p.w_o = rng.normal_matrix(d, d, init_scale(d));
  return p;
}

void TimeMixParams::validate() const {
  const std::size_t d = dim();
  require(mu_k.size() == d && mu_v.size() == d, "time mix: mu lengths differ");
  require_unit_interval(mu_q, "mu_q");
  require_unit_interval(mu_k, "mu_k");
  require_unit_interval(mu_v, "mu_v");
  require_square(w_q, d, "w_q");
  require_square(w_k, d, "w_k");
  require_square(w_v, d, "w_v");
  require_square(w_o, d, "w_o");
}

ChannelMixParams ChannelMixParams::zeros(std::size_t d) {
  return {Vector(d, 0.0), Vector(d, 0.0), Matrix(d, d), Matrix(d, d), Matrix(d, d)};
}

ChannelMixParams ChannelMixParams::random(std::size_t d, Rng& rng) {
  ChannelMixParams p;
  p.mu_r = rng.uniform_vector(d, 0.0, 1.0);
  p.mu_z = rng.uniform_vector(d, 0.0, 1.0);
  p.w_r = rng.normal_matrix(d, d, init_scale(d));
  p.w_z = rng.normal_matrix(d, d, init_scale(d));
  p.w_p = rng.normal_matrix(d, d, init_scale(d));
  return p;
}

void ChannelMixParams::validate() const {
  const std::size_t d = dim();
  require(mu_z.size() == d, "channel mix: mu lengths differ");
  require_unit_interval(mu_r, "mu_r");
  require_unit_interval(mu_z, "mu_z");
  require_square(w_r, d, "w_r");
  require_square(w_z, d, "w_z");
  require_square(w_p, d, "w_p");
}

// ---------------------------------------------------------------------------

WkvStepResult wkv_step(const WkvState& state, const Vector& k, const Vector& v) {
  const std::size_t d = k.size();
  require(v.size() == d && state.a.size() == d && state.b.size() == d && state.p.size() == d,
          "wkv_step: dimension mismatch");
  require(all_finite(k) && all_finite(v), "wkv_step: non-finite key or value");

  WkvStepResult out{Vector(d), WkvState::zeros(d)};
  for (std::size_t c = 0; c < d; ++c) {
    const double p_new = std::max(state.p[c], k[c]);
    const double decay = std::exp(state.p[c] - p_new);
    const double fresh = std::exp(k[c] - p_new);
    const double a = decay * state.a[c] + fresh * v[c];
    const double b = decay * state.b[c] + fresh;
    out.state.a[c] = a;
    out.state.b[c] = b;
    out.state.p[c] = p_new;
    out.h[c] = a / b;
  }
  return out;
}

Matrix wkv_fold(const Matrix& K, const Matrix& V) {
  require(K.rows() == V.rows() && K.cols() == V.cols(), "wkv: K and V shapes differ");
  Matrix H(K.rows(), K.cols());
  WkvState state = WkvState::zeros(K.cols());
  for (std::size_t t = 0; t < K.rows(); ++t) {
    auto step = wkv_step(state, Vector(K.row(t).begin(), K.row(t).end()),
                         Vector(V.row(t).begin(), V.row(t).end()));
    std::copy(step.h.begin(), step.h.end(), H.row(t).begin());
    state = std::move(step.state);
  }
  return H;
}

Matrix wkv_scan(const Matrix& K, const Matrix& V) {
  require(K.rows() == V.rows() && K.cols() == V.cols(), "wkv: K and V shapes differ");
  require(all_finite(K.flat()) && all_finite(V.flat()), "wkv: non-finite key or value");
  return kernels::wkv_omp(K, V);
}

WkvTrace wkv_scan_traced(const Matrix& K, const Matrix& V) {
  require(K.rows() == V.rows() && K.cols() == V.cols(), "wkv: K and V shapes differ");
  require(all_finite(K.flat()) && all_finite(V.flat()), "wkv: non-finite key or value");
  WkvTrace trace{Matrix(), Matrix(K.rows(), K.cols()), Matrix(K.rows(), K.cols())};
  trace.h = kernels::wkv_omp(K, V, &trace.p, &trace.b);
  return trace;
}

// ---------------------------------------------------------------------------

Vector token_shift(const Vector& x_t, const Vector& x_prev, const Vector& mu, const Matrix& W) {
  require(x_t.size() == x_prev.size() && x_t.size() == mu.size(), "token_shift: dimension mismatch");
  Vector mixed(x_t.size());
  for (std::size_t c = 0; c < x_t.size(); ++c) mixed[c] = mu[c] * x_t[c] + (1.0 - mu[c]) * x_prev[c];
  return matvec(W, mixed);
}

Matrix shift_down(const Matrix& X) {
  Matrix prev(X.rows(), X.cols());
  if (X.rows() > 1) std::copy(X.data(), X.data() + (X.rows() - 1) * X.cols(), prev.data() + X.cols());
  return prev;
}

Matrix shift_project(const Matrix& X, const Matrix& Prev, const Vector& mu, const Matrix& W) {
  require(X.rows() == Prev.rows() && X.cols() == Prev.cols() && X.cols() == mu.size(),
          "shift_project: dimension mismatch");
  Matrix mixed(X.rows(), X.cols());
  for (std::size_t t = 0; t < X.rows(); ++t)
    for (std::size_t c = 0; c < X.cols(); ++c)
      mixed(t, c) = mu[c] * X(t, c) + (1.0 - mu[c]) * Prev(t, c);
  return project(mixed, W);
}

// ---------------------------------------------------------------------------

namespace {

Matrix gated(const Matrix& Q, const Matrix& H) {
  Matrix G(Q.rows(), Q.cols());
  for (std::size_t i = 0; i < G.size(); ++i) G.flat()[i] = sigmoid(Q.flat()[i]) * H.flat()[i];
  return G;
}

}  // namespace

Matrix time_mix_forward(const Matrix& X, const TimeMixParams& params, TimeMixTape* tape) {
  require(X.cols() == params.dim(), "time_mix: input width != model dim");
  const Matrix prev = shift_down(X);
  Matrix q = shift_project(X, prev, params.mu_q, params.w_q);
  Matrix k = shift_project(X, prev, params.mu_k, params.w_k);
  Matrix v = shift_project(X, prev, params.mu_v, params.w_v);
  WkvTrace trace = wkv_scan_traced(k, v);
  Matrix out = project(gated(q, trace.h), params.w_o);
  if (tape) *tape = TimeMixTape{X, std::move(q), std::move(k), std::move(v), std::move(trace)};
  return out;
}

Matrix time_mix_core(const Matrix& X, const TimeMixParams& params) {
  require(X.cols() == params.dim(), "time_mix: input width != model dim");
  const Matrix prev = shift_down(X);
  const Matrix q = shift_project(X, prev, params.mu_q, params.w_q);
  const Matrix k = shift_project(X, prev, params.mu_k, params.w_k);
  const Matrix v = shift_project(X, prev, params.mu_v, params.w_v);
  return gated(q, wkv_scan(k, v));
}

Matrix channel_mix_with_prev(const Matrix& X, const Matrix& Prev, const ChannelMixParams& params,
                             ChannelMixTape* tape) {
  require(X.cols() == params.dim(), "channel_mix: input width != model dim");
  Matrix r = shift_project(X, Prev, params.mu_r, params.w_r);
  Matrix z = shift_project(X, Prev, params.mu_z, params.w_z);
  Matrix sq(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double relu = std::max(z.flat()[i], 0.0);
    sq.flat()[i] = relu * relu;
  }
  Matrix u = project(sq, params.w_p);
  Matrix out(u.rows(), u.cols());
  for (std::size_t i = 0; i < u.size(); ++i) out.flat()[i] = sigmoid(r.flat()[i]) * u.flat()[i];
  if (tape) *tape = ChannelMixTape{X, Prev, std::move(r), std::move(z), std::move(u)};
  return out;
}

Matrix channel_mix_forward(const Matrix& O, const ChannelMixParams& params, ChannelMixTape* tape) {
  return channel_mix_with_prev(O, shift_down(O), params, tape);
}

}  // namespace rrwkv
