#include "rrwkv/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "rrwkv/tape.hpp"

namespace rrwkv {

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / scale;
}

Vector finite_diff(const std::function<double(std::span<const double>)>& f, const Vector& theta, double eps) {
  require(eps > 0.0, "finite_diff: eps must be positive");
  Vector x = theta;
  Vector grad(theta.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = f(x);
    x[i] = saved - eps;
    const double down = f(x);
    x[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) throw DomainError("finite_diff: non-finite objective", i);
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

// ---------------------------------------------------------------------------

double GradReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.rel_error);
  return m;
}

const GradEntry* GradReport::worst() const {
  const GradEntry* w = nullptr;
  for (const auto& e : entries)
    if (!w || e.rel_error > w->rel_error) w = &e;
  return w;
}

std::size_t GradReport::checked() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.checked;
  return n;
}

std::size_t GradReport::skipped() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.skipped;
  return n;
}

void GradReport::merge(const GradReport& other) {
  for (const auto& e : other.entries) {
    auto it = std::find_if(entries.begin(), entries.end(), [&](const GradEntry& x) { return x.parameter == e.parameter; });
    if (it == entries.end()) {
      entries.push_back(e);
      continue;
    }
    const std::size_t checked = it->checked + e.checked, skipped = it->skipped + e.skipped;
    if (e.rel_error > it->rel_error) *it = e;
    it->checked = checked;
    it->skipped = skipped;
  }
}

void GradReport::write_csv(std::ostream& os) const {
  os << "parameter,analytic,numeric,rel_error\n";
  char buf[128];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", e.analytic, e.numeric, e.rel_error);
    os << e.parameter << ',' << buf << '\n';
  }
}

GradReport check_gradients(const std::function<Evaluation()>& evaluate, const std::vector<CheckTarget>& targets,
                           double eps) {
  require(eps > 0.0, "check_gradients: eps must be positive");
  const Evaluation base = evaluate();
  GradReport report;
  for (const auto& target : targets) {
    require(target.values.size() == target.analytic.size(), "check_gradients: analytic length mismatch");
    GradEntry entry{target.name, 0.0, 0.0, 0.0, 0, 0};
    bool first = true;
    for (std::size_t i = 0; i < target.values.size(); ++i) {
      double& x = target.values[i];
      const double saved = x;
      x = saved + eps;
      const Evaluation up = evaluate();
      x = saved - eps;
      const Evaluation down = evaluate();
      x = saved;
      if (up.branches != base.branches || down.branches != base.branches) {
        ++entry.skipped;
        continue;
      }
      if (!std::isfinite(up.loss) || !std::isfinite(down.loss)) throw DomainError("check_gradients: non-finite objective", i);
      const double numeric = (up.loss - down.loss) / (2.0 * eps);
      const double err = relative_error(target.analytic[i], numeric);
      ++entry.checked;
      if (first || err > entry.rel_error) {
        entry.analytic = target.analytic[i];
        entry.numeric = numeric;
        entry.rel_error = err;
        first = false;
      }
    }
    report.entries.push_back(entry);
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

void append_relu_signs(const Matrix& z, std::vector<std::uint8_t>& out) {
  for (double x : z.flat()) out.push_back(x > 0.0);
}

// Whether each step took the fresh key as the new exponent offset.
void append_wkv_branches(const Matrix& K, const Matrix& P, std::vector<std::uint8_t>& out) {
  for (std::size_t t = 0; t < K.rows(); ++t)
    for (std::size_t c = 0; c < K.cols(); ++c) out.push_back(K(t, c) > (t ? P(t - 1, c) : 0.0));
}

double weighted_sum(const Matrix& coef, const Matrix& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += coef.flat()[i] * y.flat()[i];
  return acc;
}

// Mean cross-entropy over all rows, accumulated in extended precision so that
// a difference of two nearby evaluations keeps more significant bits than the
// rounded double loss would.
long double precise_cross_entropy(const Matrix& logits, std::span<const int> targets) {
  long double total = 0.0L;
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    long double best = logits(t, 0);
    for (double x : logits.row(t)) best = std::max<long double>(best, x);
    long double z = 0.0L;
    for (double x : logits.row(t)) z += std::exp(static_cast<long double>(x) - best);
    total += std::log(z) + best - logits(t, static_cast<std::size_t>(targets[t]));
  }
  return total / static_cast<long double>(logits.rows());
}

template <typename P>
void add_targets(const std::string& prefix, P& params, const P& grads, std::vector<CheckTarget>& out) {
  std::vector<std::pair<std::string, std::span<double>>> vals;
  std::vector<std::span<const double>> ana;
  P::visit(params, [&](const auto& name, auto& t) { vals.emplace_back(prefix + std::string(name), values_of(t)); });
  P::visit(grads, [&](const auto&, const auto& t) { ana.push_back(values_of(t)); });
  for (std::size_t i = 0; i < vals.size(); ++i) out.push_back({vals[i].first, vals[i].second, ana[i]});
}

MediumConfig block_medium_config(MediumMode mode, MappingMode mapping) {
  MediumConfig cfg;
  cfg.s = 3;
  cfg.C = 3;
  cfg.c_max = 8;
  cfg.medium = mode;
  cfg.mapping = mapping;
  return cfg;
}

}  // namespace

std::vector<std::uint8_t> branch_signature(const GradTape& tape) {
  std::vector<std::uint8_t> out;
  for (const auto& layer : tape.layers) {
    append_wkv_branches(layer.time_mix.k, layer.time_mix.wkv.p, out);
    append_relu_signs(layer.channel_mix.z, out);
    for (const auto& u : layer.medium.pre_relu) append_relu_signs(u, out);
  }
  return out;
}

GradReport check_wkv_block(std::uint64_t seed, std::size_t T, std::size_t d) {
  Rng rng(seed);
  Matrix K = rng.uniform_matrix(T, d, -3.0, 3.0);
  Matrix V = rng.normal_matrix(T, d, 1.0);
  const Matrix coef = rng.normal_matrix(T, d, 1.0);

  const WkvTrace trace = wkv_scan_traced(K, V);
  Matrix dK, dV;
  wkv_backward(K, V, trace, coef, dK, dV);

  auto evaluate = [&] {
    const WkvTrace tr = wkv_scan_traced(K, V);
    Evaluation e{weighted_sum(coef, tr.h), {}};
    append_wkv_branches(K, tr.p, e.branches);
    return e;
  };
  return check_gradients(evaluate, {{"wkv.k", K.flat(), dK.flat()}, {"wkv.v", V.flat(), dV.flat()}});
}

GradReport check_time_mix_block(std::uint64_t seed, std::size_t T, std::size_t d) {
  Rng rng(seed);
  Matrix X = rng.normal_matrix(T, d, 1.0);
  TimeMixParams params = TimeMixParams::random(d, rng);
  const Matrix coef = rng.normal_matrix(T, d, 1.0);

  TimeMixTape tape;
  time_mix_forward(X, params, &tape);
  TimeMixParams grads = TimeMixParams::zeros(d);
  const Matrix dX = time_mix_backward(tape, params, coef, grads);

  auto evaluate = [&] {
    TimeMixTape tp;
    Evaluation e{weighted_sum(coef, time_mix_forward(X, params, &tp)), {}};
    append_wkv_branches(tp.k, tp.wkv.p, e.branches);
    return e;
  };
  std::vector<CheckTarget> targets{{"time_mix.input", X.flat(), dX.flat()}};
  add_targets("time_mix.", params, grads, targets);
  return check_gradients(evaluate, targets);
}

GradReport check_channel_mix_block(std::uint64_t seed, std::size_t T, std::size_t d) {
  Rng rng(seed);
  Matrix O = rng.normal_matrix(T, d, 1.0);
  ChannelMixParams params = ChannelMixParams::random(d, rng);
  const Matrix coef = rng.normal_matrix(T, d, 1.0);

  ChannelMixTape tape;
  channel_mix_forward(O, params, &tape);
  ChannelMixParams grads = ChannelMixParams::zeros(d);
  auto in = channel_mix_backward(tape, params, coef, grads);
  for (std::size_t t = 1; t < T; ++t)
    for (std::size_t c = 0; c < d; ++c) in.dx(t - 1, c) += in.dprev(t, c);

  auto evaluate = [&] {
    ChannelMixTape tp;
    Evaluation e{weighted_sum(coef, channel_mix_forward(O, params, &tp)), {}};
    append_relu_signs(tp.z, e.branches);
    return e;
  };
  std::vector<CheckTarget> targets{{"channel_mix.input", O.flat(), in.dx.flat()}};
  add_targets("channel_mix.", params, grads, targets);
  return check_gradients(evaluate, targets);
}

GradReport check_medium_block(std::uint64_t seed, MediumMode mode, std::size_t T, std::size_t d) {
  Rng rng(seed);
  const MediumConfig cfg = block_medium_config(mode, MappingMode::causal);
  const InsertionPlan plan = schedule_mediums(T, cfg);
  Matrix X = rng.normal_matrix(T, d, 1.0);
  SqueezeParams params = SqueezeParams::random(cfg, rng);
  const Matrix coef = rng.normal_matrix(plan.c, d, 1.0);

  MediumTape tape;
  const MediumBank bank = build_medium_bank(X, plan, params, cfg, &tape);
  SqueezeParams grads = SqueezeParams::zeros(cfg);
  Matrix dX(T, d);
  medium_bank_backward(plan, params, cfg, bank, tape, coef, dX, grads);

  auto evaluate = [&] {
    MediumTape tp;
    Evaluation e{weighted_sum(coef, build_medium_bank(X, plan, params, cfg, &tp).final), {}};
    for (const auto& u : tp.pre_relu) append_relu_signs(u, e.branches);
    return e;
  };
  const std::string prefix = "squeeze[" + to_string(mode) + "].";
  std::vector<CheckTarget> targets{{prefix + "input", X.flat(), dX.flat()}};
  add_targets(prefix, params, grads, targets);
  return check_gradients(evaluate, targets);
}

GradReport check_excited_mix_block(std::uint64_t seed, MappingMode mapping, std::size_t T, std::size_t d) {
  Rng rng(seed);
  const MediumConfig cfg = block_medium_config(MediumMode::gate_literal, mapping);
  const InsertionPlan plan = schedule_mediums(T, cfg);
  Matrix O = rng.normal_matrix(T, d, 1.0);
  Matrix mediums = rng.uniform_matrix(plan.c, d, 0.0, 1.0);
  std::fill(mediums.row(0).begin(), mediums.row(0).end(), 0.0);
  ExcitedChannelMixParams params = ExcitedChannelMixParams::random(d, rng);
  const Matrix coef = rng.normal_matrix(T, d, 1.0);

  ChannelMixTape tape;
  excited_channel_mix(O, mediums, plan, params, mapping, &tape);
  ExcitedChannelMixParams grads = ExcitedChannelMixParams::zeros(d);
  const auto in = channel_mix_backward(tape, params, coef, grads);
  Matrix dM(plan.c, d);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t j = plan.medium_for_token(t, mapping);
    for (std::size_t c = 0; c < d; ++c) dM(j, c) += in.dprev(t, c);
  }

  auto evaluate = [&] {
    ChannelMixTape tp;
    Evaluation e{weighted_sum(coef, excited_channel_mix(O, mediums, plan, params, mapping, &tp)), {}};
    append_relu_signs(tp.z, e.branches);
    return e;
  };
  const std::string prefix = "excited_mix[" + to_string(mapping) + "].";
  std::vector<CheckTarget> targets{{prefix + "input", O.flat(), in.dx.flat()},
                                   {prefix + "mediums", mediums.flat(), dM.flat()}};
  add_targets(prefix, params, grads, targets);
  return check_gradients(evaluate, targets);
}

GradReport check_model(const ModelConfig& cfg, std::uint64_t seed, std::size_t T, double eps) {
  Model model = Model::init(cfg, seed);
  Rng rng(seed ^ 0x5DEECE66DULL);
  std::vector<int> ids(T), targets(T);
  for (auto& id : ids) id = static_cast<int>(rng.below(cfg.vocab));
  for (auto& y : targets) y = static_cast<int>(rng.below(cfg.vocab));
  const std::vector<std::uint8_t> mask(T, 1);

  GradTape tape;
  const Matrix logits = model_forward(model, ids, &tape);
  Matrix dlogits;
  masked_cross_entropy(logits, targets, mask, &dlogits);
  const ModelGrads grads = backward(model, tape, dlogits);

  std::vector<CheckTarget> list;
  {
    std::vector<std::pair<std::string, std::span<double>>> vals;
    std::vector<std::span<const double>> ana;
    Model::visit(model, [&](const std::string& name, auto& t) { vals.emplace_back(name, values_of(t)); });
    Model::visit(grads.params, [&](const std::string&, const auto& t) { ana.push_back(values_of(t)); });
    for (std::size_t i = 0; i < vals.size(); ++i) list.push_back({vals[i].first, vals[i].second, ana[i]});
  }
  // Reported relative to the unperturbed loss; the offset cancels in the
  // central difference.
  const long double base = precise_cross_entropy(logits, targets);
  auto evaluate = [&] {
    GradTape tp;
    const Matrix lg = model_forward(model, ids, &tp);
    return Evaluation{static_cast<double>(precise_cross_entropy(lg, targets) - base), branch_signature(tp)};
  };
  GradReport report = check_gradients(evaluate, list, eps);

  // The embedded inputs themselves, bypassing the lookup.
  Matrix x0 = embed(model, ids);
  auto evaluate_inputs = [&] {
    GradTape tp;
    const Matrix lg = forward_embedded(model, x0, &tp);
    return Evaluation{static_cast<double>(precise_cross_entropy(lg, targets) - base), branch_signature(tp)};
  };
  report.merge(check_gradients(evaluate_inputs, {{"input", x0.flat(), grads.d_x0.flat()}}, eps));
  return report;
}

Vector long_range_profile(const Model& model, const Matrix& x0, int target) {
  GradTape tape;
  const Matrix logits = forward_embedded(model, x0, &tape);
  const std::size_t T = logits.rows();
  std::vector<int> targets(T, target);
  std::vector<std::uint8_t> mask(T, 0);
  mask[T - 1] = 1;
  Matrix dlogits;
  masked_cross_entropy(logits, targets, mask, &dlogits);
  const ModelGrads grads = backward(model, tape, dlogits);
  Vector norms(T);
  for (std::size_t i = 0; i < T; ++i) {
    double acc = 0.0;
    for (double g : grads.d_x0.row(i)) acc += g * g;
    norms[i] = std::sqrt(acc);
  }
  return norms;
}

double long_range_probe(const Model& model, const Matrix& x0, std::size_t i, int target) {
  require(i < x0.rows(), "long_range_probe: source position beyond the sequence");
  return long_range_profile(model, x0, target)[i];
}

}  // namespace rrwkv
