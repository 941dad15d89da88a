#include "rrwkv/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <ostream>
#include <type_traits>

#include "rrwkv/errors.hpp"
#include "rrwkv/gradcheck.hpp"
#include "rrwkv/kernels.hpp"
#include "rrwkv/tape.hpp"

namespace rrwkv {

// ---------------------------------------------------------------------------
// Tasks

std::string to_string(TaskKind k) { return k == TaskKind::copy ? "copy" : "recall"; }

TaskKind parse_task_kind(const std::string& s) {
  if (s == "copy") return TaskKind::copy;
  if (s == "recall") return TaskKind::recall;
  throw InputError("unknown task '" + s + "' (expected copy or recall)");
}

void TaskSpec::validate() const {
  require(vocab >= 3, "task vocab must be >= 3 (prompt, content and filler ids)");
  require(T >= 1, "task length must be >= 1");
  require(gap < T, "task gap must be smaller than the sequence length");
  if (kind == TaskKind::recall) require(T >= gap + 4, "recall needs T >= gap + 4");
}

TaskGenerator::TaskGenerator(const TaskSpec& spec) : spec_(spec), rng_(spec.seed) { spec_.validate(); }

Example TaskGenerator::next() {
  const std::size_t T = spec_.T, gap = spec_.gap, h = spec_.content_size();
  const auto content = [&] { return static_cast<int>(1 + rng_.below(h)); };
  const auto filler = [&] { return static_cast<int>(h + 1 + rng_.below(spec_.vocab - 1 - h)); };
  Example ex{std::vector<int>(T), std::vector<int>(T, 0), std::vector<std::uint8_t>(T, 0)};

  if (spec_.kind == TaskKind::recall) {
    const std::size_t key_pos = T - gap - 4;
    for (std::size_t t = 0; t < key_pos; ++t) ex.input[t] = filler();
    const int key = content(), value = content();
    ex.input[key_pos] = key;
    ex.input[key_pos + 1] = value;
    for (std::size_t t = key_pos + 2; t < T - 2; ++t) ex.input[t] = filler();
    ex.input[T - 2] = key;
    ex.input[T - 1] = kPromptToken;
    ex.target[T - 1] = value;
    ex.mask[T - 1] = 1;
  } else {
    for (std::size_t t = 0; t < T; ++t) ex.input[t] = t + gap < T ? content() : kPromptToken;
    for (std::size_t t = gap; t < T; ++t) {
      ex.target[t] = ex.input[t - gap];
      ex.mask[t] = 1;
    }
  }
  return ex;
}

std::vector<Example> TaskGenerator::batch(std::size_t count) {
  std::vector<Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(next());
  return out;
}

std::vector<Example> gen_task(const TaskSpec& spec, std::size_t count) { return TaskGenerator(spec).batch(count); }

std::vector<Example> held_out_examples(const TaskSpec& spec, std::size_t count) {
  TaskSpec held = spec;
  held.seed = spec.seed ^ 0xA5A5A5A5DEADBEEFULL;
  return gen_task(held, count);
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  require(batch >= 1, "batch must be >= 1");
  require(eval_interval >= 1, "eval_interval must be >= 1");
  require(eval_size >= 1, "eval_size must be >= 1");
  require(std::isfinite(lr) && lr >= 0.0, "learning rate must be finite and >= 0");
  require(grad_clip >= 0.0, "grad_clip must be >= 0");
}

namespace {

// Parallel views of two structurally identical models.
template <typename F>
void zip_params(Model& a, const Model& b, F&& f) {
  std::vector<std::span<double>> va;
  std::vector<std::span<const double>> vb;
  Model::visit(a, [&](const std::string&, auto& t) { va.push_back(values_of(t)); });
  Model::visit(b, [&](const std::string&, const auto& t) { vb.push_back(values_of(t)); });
  require(va.size() == vb.size(), "parameter structure mismatch");
  for (std::size_t i = 0; i < va.size(); ++i) {
    require(va[i].size() == vb[i].size(), "parameter shape mismatch");
    f(va[i], vb[i]);
  }
}

struct ExampleScore {
  double loss = 0.0;
  std::size_t correct = 0;
  std::size_t scored = 0;
};

ExampleScore score(const Matrix& logits, const Example& ex) {
  ExampleScore s;
  s.loss = masked_cross_entropy(logits, ex.target, ex.mask);
  for (std::size_t t = 0; t < logits.rows(); ++t) {
    if (!ex.mask[t]) continue;
    const auto row = logits.row(t);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    s.correct += best == ex.target[t];
    ++s.scored;
  }
  return s;
}

}  // namespace

namespace {

// Runs body(i) for i in [0, count) across threads. An exception cannot leave
// an OpenMP region, so each one is held and the lowest-index one rethrown.
template <typename F>
void parallel_for_each(std::size_t count, F&& body) {
  std::vector<std::exception_ptr> errors(count);
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

EvalResult evaluate(const Model& model, std::span<const Example> examples) {
  require(!examples.empty(), "evaluate: no examples");
  std::vector<ExampleScore> scores(examples.size());
  parallel_for_each(examples.size(),
                    [&](std::size_t i) { scores[i] = score(model_forward(model, examples[i].input), examples[i]); });
  double loss = 0.0;
  std::size_t correct = 0, scored = 0;
  for (const auto& s : scores) {
    loss += s.loss;
    correct += s.correct;
    scored += s.scored;
  }
  return {loss / static_cast<double>(examples.size()),
          scored ? static_cast<double>(correct) / static_cast<double>(scored) : 0.0};
}

double batch_gradients(const Model& model, std::span<const Example> batch, Model& grads) {
  require(!batch.empty(), "batch_gradients: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  std::vector<Model> per(batch.size());
  std::vector<double> losses(batch.size());
  parallel_for_each(batch.size(), [&](std::size_t i) {
    const Example& ex = batch[i];
    GradTape tape;
    const Matrix logits = model_forward(model, ex.input, &tape);
    Matrix dlogits;
    losses[i] = masked_cross_entropy(logits, ex.target, ex.mask, &dlogits, inv);
    per[i] = backward(model, tape, dlogits).params;
  });
  grads = Model::zeros(model.config);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    loss += losses[i] * inv;
    zip_params(grads, per[i], [](std::span<double> g, std::span<const double> x) {
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += x[k];
    });
  }
  return loss;
}

RmsProp::RmsProp(const Model& shape, double lr, double rho, double eps)
    : lr_(lr), rho_(rho), eps_(eps), square_avg_(Model::zeros(shape.config)) {}

void RmsProp::step(Model& model, const Model& grads) {
  std::vector<std::span<double>> sq;
  Model::visit(square_avg_, [&](const std::string&, auto& t) { sq.push_back(values_of(t)); });
  std::size_t i = 0;
  zip_params(model, grads, [&](std::span<double> w, std::span<const double> g) {
    std::span<double> v = sq[i++];
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = rho_ * v[k] + (1.0 - rho_) * g[k] * g[k];
      w[k] -= lr_ * g[k] / (std::sqrt(v[k]) + eps_);
    }
  });
  model.clamp_shift_weights();
}

double global_norm(const Model& grads) {
  double acc = 0.0;
  Model::visit(grads, [&](const std::string&, const auto& t) {
    for (double x : values_of(t)) acc += x * x;
  });
  return std::sqrt(acc);
}

void scale_grads(Model& grads, double factor) {
  Model::visit(grads, [&](const std::string&, auto& t) {
    for (double& x : values_of(t)) x *= factor;
  });
}

TrainResult train(Model& model, const TaskSpec& task, const TrainConfig& cfg,
                  const std::function<void(const MetricRow&)>& on_row) {
  task.validate();
  cfg.validate();
  require(task.vocab == model.config.vocab, "train: model and task vocab differ");

  // Training batches come from a stream keyed by both seeds.
  const std::vector<Example> held_out = held_out_examples(task, cfg.eval_size);
  TaskSpec train_spec = task;
  train_spec.seed = Rng(task.seed ^ (cfg.seed * 0x9E3779B97F4A7C15ULL + 1)).next_u64();
  TaskGenerator stream(train_spec);

  TrainResult result;
  const auto record = [&](std::size_t step) {
    const EvalResult e = evaluate(model, held_out);
    result.rows.push_back({step, e.loss, e.accuracy});
    if (on_row) on_row(result.rows.back());
    return e;
  };

  record(0);
  RmsProp opt(model, cfg.lr);
  Model grads;
  const auto diverge = [&](std::size_t step, const std::string& why) {
    result.diverged = true;
    result.diagnostic = "training diverged at step " + std::to_string(step) + ": " + why;
    result.rows.push_back({step, std::numeric_limits<double>::quiet_NaN(), 0.0});
    if (on_row) on_row(result.rows.back());
  };
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    result.steps_run = step;
    // Overflowing activations surface as non-finite values rejected by the
    // kernels; past step 1 they mean the weights blew up.
    try {
      const std::vector<Example> batch = stream.batch(cfg.batch);
      const double loss = batch_gradients(model, batch, grads);
      if (!std::isfinite(loss)) {
        diverge(step, "loss is non-finite");
        return result;
      }
      if (cfg.grad_clip > 0.0) {
        const double norm = global_norm(grads);
        if (norm > cfg.grad_clip) scale_grads(grads, cfg.grad_clip / norm);
      }
      opt.step(model, grads);
      if (step % cfg.eval_interval == 0 || step == cfg.steps) {
        const EvalResult e = record(step);
        if (!std::isfinite(e.loss)) {
          diverge(step, "evaluation loss is non-finite");
          return result;
        }
        if (cfg.target_accuracy > 0.0 && e.accuracy >= cfg.target_accuracy) break;
      }
    } catch (const ContractViolation& e) {
      if (step == 1) throw;
      diverge(step, e.what());
      return result;
    } catch (const DomainError& e) {
      if (step == 1) throw;
      diverge(step, e.what());
      return result;
    }
  }
  return result;
}

Vector gradient_profile(const Model& model, std::span<const Example> examples) {
  require(!examples.empty(), "gradient_profile: no examples");
  const std::size_t T = examples[0].input.size();
  std::vector<Vector> per(examples.size());
  parallel_for_each(examples.size(), [&](std::size_t i) {
    const Example& ex = examples[i];
    per[i] = long_range_profile(model, embed(model, ex.input), ex.target.back());
  });
  Vector mean(T, 0.0);
  for (const auto& p : per) {
    require(p.size() == T, "gradient_profile: examples differ in length");
    for (std::size_t t = 0; t < T; ++t) mean[t] += p[t];
  }
  for (double& x : mean) x /= static_cast<double>(examples.size());
  return mean;
}

// ---------------------------------------------------------------------------
// Scaling benchmark

std::string to_string(Arch a) {
  switch (a) {
    case Arch::attention: return "attention";
    case Arch::rwkv: return "rwkv";
    case Arch::rrwkv: return "rrwkv";
  }
  return "?";
}

Arch parse_arch(const std::string& s) {
  if (s == "attention") return Arch::attention;
  if (s == "rwkv") return Arch::rwkv;
  if (s == "rrwkv") return Arch::rrwkv;
  throw InputError("unknown architecture '" + s + "' (expected attention, rwkv or rrwkv)");
}

namespace {

struct CoreInputs {
  MatrixF x, k, v;
  MatrixF wm, ws;
};

MatrixF to_float(const Matrix& m) {
  MatrixF out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.flat()[i] = static_cast<float>(m.flat()[i]);
  return out;
}

template <typename S>
BasicMatrix<S> interleave_rows(const BasicMatrix<S>& X, const BasicMatrix<S>& M, std::size_t s) {
  const std::size_t n = X.rows(), c = M.rows(), d = X.cols();
  BasicMatrix<S> out(n + c, d);
  std::size_t r = 0;
  for (std::size_t j = 0; j < c; ++j) {
    std::copy(M.row(j).begin(), M.row(j).end(), out.row(r++).begin());
    const std::size_t end = j + 1 == c ? n : (j + 1) * s;
    for (std::size_t t = j * s; t < end; ++t) std::copy(X.row(t).begin(), X.row(t).end(), out.row(r++).begin());
  }
  return out;
}

template <typename S, typename Count>
BasicMatrix<S> rrwkv_core(const BasicMatrix<S>& X, const BasicMatrix<S>& Wm, const BasicMatrix<S>& Ws,
                          std::size_t s, bool parallel, Count& count) {
  const std::size_t c = std::max<std::size_t>(1, X.rows() / s);
  BasicMatrix<S> raw, gate;
  kernels::medium_gates(X, s, c, Wm, Ws, raw, gate, count);
  const BasicMatrix<S> stream = interleave_rows(X, gate, s);
  return parallel ? kernels::wkv_omp(stream, stream) : kernels::wkv_serial(stream, stream, count);
}

template <typename S>
BasicMatrix<S> random_like(std::size_t rows, std::size_t cols, Rng& rng) {
  const Matrix m = rng.normal_matrix(rows, cols, 1.0);
  if constexpr (std::is_same_v<S, float>) {
    return to_float(m);
  } else {
    return m;
  }
}

template <typename S>
std::uint64_t run_core(Arch arch, std::size_t n, std::size_t d, std::size_t s, std::size_t C, bool parallel,
                       std::uint64_t seed) {
  Rng rng(seed);
  const BasicMatrix<S> X = random_like<S>(n, d, rng);
  kernels::MaddCounter count;
  volatile S sink = S{0};
  switch (arch) {
    case Arch::attention: {
      const BasicMatrix<S> K = random_like<S>(n, d, rng), V = random_like<S>(n, d, rng);
      const auto out = parallel ? kernels::dot_attention_omp(X, K, V) : kernels::dot_attention_serial(X, K, V, count);
      sink = out(n - 1, 0);
      break;
    }
    case Arch::rwkv: {
      const BasicMatrix<S> V = random_like<S>(n, d, rng);
      const auto out = parallel ? kernels::wkv_omp(X, V) : kernels::wkv_serial(X, V, count);
      sink = out(n - 1, 0);
      break;
    }
    case Arch::rrwkv: {
      const std::size_t c = std::max<std::size_t>(1, n / s);
      const BasicMatrix<S> Wm = random_like<S>(C, c, rng), Ws = random_like<S>(1, C, rng);
      const auto out = rrwkv_core(X, Wm, Ws, s, parallel, count);
      sink = out(0, 0);
      break;
    }
  }
  (void)sink;
  return count.madds;
}

}  // namespace

std::uint64_t count_madds(Arch arch, std::size_t n, std::size_t d, std::size_t s, std::size_t C) {
  require(n >= 1 && d >= 1 && s >= 1 && C >= 1, "count_madds: sizes must be >= 1");
  return run_core<double>(arch, n, d, s, C, false, 0);
}

double time_core_ms(Arch arch, std::size_t n, std::size_t d, std::size_t s, std::size_t C, std::size_t trials,
                    std::uint64_t seed) {
  if (trials == 0) return 0.0;
  std::vector<double> ms;
  for (std::size_t i = 0; i < trials; ++i) {
    const auto start = std::chrono::steady_clock::now();
    run_core<float>(arch, n, d, s, C, true, seed + i);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(ms.begin(), ms.end());
  return ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
}

void BenchConfig::validate() const {
  require(n.size() >= 4, "benchmark grid needs at least 4 lengths");
  for (std::size_t i = 1; i < n.size(); ++i) require(n[i] > n[i - 1], "benchmark lengths must be ascending");
  require(n.front() >= 1 && d >= 1 && s >= 1 && C >= 1, "benchmark sizes must be >= 1");
  require(!archs.empty(), "benchmark needs at least one architecture");
}

std::vector<BenchRow> bench_scaling(const BenchConfig& cfg) {
  cfg.validate();
  std::vector<BenchRow> rows;
  for (Arch arch : cfg.archs)
    for (std::size_t n : cfg.n) {
      BenchRow row{arch, n, cfg.d, cfg.s, count_madds(arch, n, cfg.d, cfg.s, cfg.C), 0.0};
      row.wall_ms = time_core_ms(arch, n, cfg.d, cfg.s, cfg.C, cfg.trials, cfg.seed);
      rows.push_back(row);
    }
  return rows;
}

double loglog_slope(std::span<const BenchRow> rows, Arch arch) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t m = 0;
  for (const auto& r : rows) {
    if (r.arch != arch) continue;
    const double x = std::log(static_cast<double>(r.n)), y = std::log(static_cast<double>(r.madds));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  require(m >= 2, "loglog_slope: need at least two rows for the architecture");
  const double denom = m * sxx - sx * sx;
  require(denom > 0.0, "loglog_slope: lengths must differ");
  return (m * sxy - sx * sy) / denom;
}

TwoTermFit fit_linear_plus_quadratic(std::span<const BenchRow> rows, Arch arch) {
  // Normal equations for madds = a f1 + b f2, f1 = n d, f2 = c^2 d.
  double s11 = 0, s12 = 0, s22 = 0, s1y = 0, s2y = 0;
  std::vector<std::array<double, 3>> pts;
  for (const auto& r : rows) {
    if (r.arch != arch) continue;
    const double c = static_cast<double>(std::max<std::size_t>(1, r.n / r.s));
    const double f1 = static_cast<double>(r.n) * r.d, f2 = c * c * r.d, y = static_cast<double>(r.madds);
    s11 += f1 * f1;
    s12 += f1 * f2;
    s22 += f2 * f2;
    s1y += f1 * y;
    s2y += f2 * y;
    pts.push_back({f1, f2, y});
  }
  require(pts.size() >= 2, "fit_linear_plus_quadratic: need at least two rows");
  const double det = s11 * s22 - s12 * s12;
  require(det != 0.0, "fit_linear_plus_quadratic: degenerate design");
  TwoTermFit fit;
  fit.a = (s1y * s22 - s2y * s12) / det;
  fit.b = (s2y * s11 - s1y * s12) / det;
  for (const auto& [f1, f2, y] : pts)
    fit.max_rel_residual = std::max(fit.max_rel_residual, std::abs(fit.a * f1 + fit.b * f2 - y) / y);
  return fit;
}

void write_bench_csv(std::ostream& os, std::span<const BenchRow> rows) {
  os << "arch,n,d,s,madds,wall_ms\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.wall_ms);
    os << to_string(r.arch) << ',' << r.n << ',' << r.d << ',' << r.s << ',' << r.madds << ',' << buf << '\n';
  }
}

// ---------------------------------------------------------------------------
// Information-flow graphs

std::uint32_t InfoFlowGraph::add_node() {
  adjacency.emplace_back();
  return static_cast<std::uint32_t>(adjacency.size() - 1);
}

void InfoFlowGraph::add_edge(std::uint32_t from, std::uint32_t to) {
  require(from < adjacency.size() && to < adjacency.size(), "add_edge: node out of range");
  adjacency[from].push_back(to);
}

std::size_t InfoFlowGraph::edge_count() const {
  std::size_t e = 0;
  for (const auto& a : adjacency) e += a.size();
  return e;
}

bool InfoFlowGraph::acyclic() const {
  std::vector<std::size_t> indegree(adjacency.size(), 0);
  for (const auto& a : adjacency)
    for (auto v : a) ++indegree[v];
  std::vector<std::uint32_t> ready;
  for (std::uint32_t v = 0; v < adjacency.size(); ++v)
    if (!indegree[v]) ready.push_back(v);
  std::size_t seen = 0;
  while (!ready.empty()) {
    const auto u = ready.back();
    ready.pop_back();
    ++seen;
    for (auto v : adjacency[u])
      if (--indegree[v] == 0) ready.push_back(v);
  }
  return seen == adjacency.size();
}

InfoFlowGraph build_info_flow(Arch arch, std::size_t n, std::size_t s, MappingMode mapping) {
  require(n >= 1, "build_info_flow: n must be >= 1");
  InfoFlowGraph g;
  for (std::size_t t = 0; t < n; ++t) {
    const auto v = g.add_node();
    g.inputs.push_back(v);
    g.outputs.push_back(v);
  }
  const auto tok = [](std::size_t t) { return static_cast<std::uint32_t>(t); };

  if (arch == Arch::rwkv) {
    for (std::size_t t = 1; t < n; ++t) g.add_edge(tok(t - 1), tok(t));
    return g;
  }
  if (arch == Arch::attention) {
    for (std::size_t t = 1; t < n; ++t)
      for (std::size_t i = 0; i < t; ++i) g.add_edge(tok(i), tok(t));
    return g;
  }

  MediumConfig cfg;
  cfg.s = s;
  const InsertionPlan plan = schedule_mediums(n, cfg);
  std::vector<std::uint32_t> raw(plan.c), medium(plan.c);
  for (std::size_t j = 0; j < plan.c; ++j) {
    raw[j] = g.add_node();
    medium[j] = g.add_node();
  }
  std::vector<std::uint32_t> stream(plan.stream_length());
  for (std::size_t j = 0; j < plan.c; ++j) stream[plan.medium_slot[j]] = medium[j];
  for (std::size_t t = 0; t < n; ++t) stream[plan.token_slot[t]] = tok(t);
  for (std::size_t i = 1; i < stream.size(); ++i) g.add_edge(stream[i - 1], stream[i]);

  for (std::size_t j = 1; j < plan.c; ++j) {
    const TokenRange w = plan.window(j);
    for (std::size_t t = w.begin; t < w.end; ++t) g.add_edge(tok(t), raw[j]);
    for (std::size_t i = 1; i <= j; ++i) g.add_edge(raw[i], medium[j]);
  }
  for (std::size_t t = 0; t < n; ++t) g.add_edge(medium[plan.medium_for_token(t, mapping)], tok(t));
  return g;
}

namespace {

// Largest finite BFS distance from `source` to an output node.
std::size_t farthest_output(const InfoFlowGraph& g, std::uint32_t source, const std::vector<std::uint8_t>& is_output,
                            std::vector<std::uint32_t>& dist, std::vector<std::uint32_t>& queue) {
  constexpr auto unseen = std::numeric_limits<std::uint32_t>::max();
  std::fill(dist.begin(), dist.end(), unseen);
  queue.clear();
  dist[source] = 0;
  queue.push_back(source);
  std::size_t best = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const auto u = queue[head];
    if (is_output[u]) best = std::max<std::size_t>(best, dist[u]);
    for (auto v : g.adjacency[u])
      if (dist[v] == unseen) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
  }
  return best;
}

std::vector<std::uint8_t> output_flags(const InfoFlowGraph& g) {
  require(g.acyclic(), "path_length: information-flow graph has a cycle");
  std::vector<std::uint8_t> flags(g.node_count(), 0);
  for (auto v : g.outputs) flags[v] = 1;
  return flags;
}

}  // namespace

std::size_t path_length_serial(const InfoFlowGraph& g) {
  const auto is_output = output_flags(g);
  std::vector<std::uint32_t> dist(g.node_count()), queue;
  std::size_t best = 0;
  for (auto src : g.inputs) best = std::max(best, farthest_output(g, src, is_output, dist, queue));
  return best;
}

std::size_t path_length(const InfoFlowGraph& g) {
  const auto is_output = output_flags(g);
  std::size_t best = 0;
  const auto sources = static_cast<std::ptrdiff_t>(g.inputs.size());
#pragma omp parallel reduction(max : best)
  {
    std::vector<std::uint32_t> dist(g.node_count()), queue;
#pragma omp for schedule(dynamic, 8)
    for (std::ptrdiff_t i = 0; i < sources; ++i)
      best = std::max(best, farthest_output(g, g.inputs[i], is_output, dist, queue));
  }
  return best;
}

void write_path_csv(std::ostream& os, std::span<const PathRow> rows) {
  os << "arch,n,s,max_path\n";
  for (const auto& r : rows) os << to_string(r.arch) << ',' << r.n << ',' << r.s << ',' << r.max_path << '\n';
}

void write_metrics_csv(std::ostream& os, std::span<const MetricRow> rows) {
  os << "step,loss,accuracy\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.step, r.loss, r.accuracy);
    os << buf;
  }
}

}  // namespace rrwkv
