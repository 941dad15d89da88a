#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "rrwkv/harness.hpp"
#include "support.hpp"

using namespace rrwkv;

namespace {

ModelConfig tiny(std::size_t vocab, Variant variant = Variant::rrwkv) {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.layers = 1;
  cfg.vocab = vocab;
  cfg.variant = variant;
  cfg.medium.s = 2;
  cfg.medium.C = 2;
  cfg.medium.c_max = 16;
  return cfg;
}

// All-pairs shortest hops by Floyd-Warshall, maximised over reachable
// (input, output) pairs.
std::size_t floyd_max_path(const InfoFlowGraph& g) {
  const std::size_t N = g.node_count();
  constexpr std::size_t inf = std::numeric_limits<std::size_t>::max() / 4;
  std::vector<std::size_t> dist(N * N, inf);
  for (std::size_t u = 0; u < N; ++u) {
    dist[u * N + u] = 0;
    for (auto v : g.adjacency[u]) dist[u * N + v] = std::min<std::size_t>(dist[u * N + v], 1);
  }
  for (std::size_t k = 0; k < N; ++k)
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < N; ++j) dist[i * N + j] = std::min(dist[i * N + j], dist[i * N + k] + dist[k * N + j]);
  std::size_t best = 0;
  for (auto i : g.inputs)
    for (auto o : g.outputs)
      if (dist[i * N + o] < inf) best = std::max(best, dist[i * N + o]);
  return best;
}

std::uint64_t attention_closed_form(std::uint64_t n, std::uint64_t d) { return d * n * (n + 1); }

std::uint64_t rrwkv_closed_form(std::uint64_t n, std::uint64_t d, std::uint64_t s, std::uint64_t C) {
  const std::uint64_t c = std::max<std::uint64_t>(1, n / s);
  std::uint64_t gates = 0;
  for (std::uint64_t j = 1; j < c; ++j) gates += s * d + C * (j + 1) * d + C * d;
  return gates + 3 * (n + c) * d;
}

}  // namespace

TEST(Tasks, RecallLayout) {
  TaskSpec spec{TaskKind::recall, 16, 10, 6, 3};
  for (const Example& ex : gen_task(spec, 50)) {
    ASSERT_EQ(ex.input.size(), 10u);
    const int key = ex.input[0], value = ex.input[1];
    EXPECT_GE(key, 1);
    EXPECT_LE(key, 7);
    EXPECT_GE(value, 1);
    EXPECT_LE(value, 7);
    for (std::size_t t = 2; t < 8; ++t) EXPECT_GT(ex.input[t], 7);
    EXPECT_EQ(ex.input[8], key);
    EXPECT_EQ(ex.input[9], kPromptToken);
    EXPECT_EQ(ex.target[9], value);
    for (std::size_t t = 0; t < 10; ++t) EXPECT_EQ(ex.mask[t], t == 9 ? 1 : 0);
  }
}

TEST(Tasks, RecallLeadingFillers) {
  TaskSpec spec{TaskKind::recall, 10, 20, 4, 1};
  const Example ex = TaskGenerator(spec).next();
  for (std::size_t t = 0; t < 12; ++t) EXPECT_GT(ex.input[t], 4);
  EXPECT_EQ(ex.input[18], ex.input[12]);
  EXPECT_EQ(ex.target[19], ex.input[13]);
}

TEST(Tasks, CopyLayoutAndEcho) {
  TaskSpec spec{TaskKind::copy, 12, 9, 3, 4};
  const Example ex = TaskGenerator(spec).next();
  for (std::size_t t = 0; t < 9; ++t) {
    if (t < 6) EXPECT_NE(ex.input[t], kPromptToken);
    else EXPECT_EQ(ex.input[t], kPromptToken);
    EXPECT_EQ(ex.mask[t], t >= 3 ? 1 : 0);
    if (t >= 3) EXPECT_EQ(ex.target[t], ex.input[t - 3]);
  }
  spec.gap = 0;
  const Example echo = TaskGenerator(spec).next();
  EXPECT_EQ(echo.target, echo.input);
  for (auto m : echo.mask) EXPECT_EQ(m, 1);
}

TEST(Tasks, DeterminismAndContracts) {
  const TaskSpec spec{TaskKind::recall, 16, 24, 8, 99};
  const auto a = gen_task(spec, 10), b = gen_task(spec, 10);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(a[i].input, b[i].input);
  const auto held = held_out_examples(spec, 10);
  bool differs = false;
  for (std::size_t i = 0; i < 10; ++i) differs |= held[i].input != a[i].input;
  EXPECT_TRUE(differs);
  EXPECT_THROW(gen_task({TaskKind::copy, 16, 8, 8, 0}, 1), ContractViolation);
  EXPECT_THROW(gen_task({TaskKind::recall, 16, 10, 7, 0}, 1), ContractViolation);
  EXPECT_EQ(parse_task_kind("copy"), TaskKind::copy);
  EXPECT_THROW(parse_task_kind("sort"), InputError);
}

TEST(Training, ZeroLearningRateKeepsLossConstant) {
  Model model = Model::init(tiny(8), 1);
  TrainConfig cfg;
  cfg.steps = 12;
  cfg.batch = 4;
  cfg.lr = 0.0;
  cfg.eval_interval = 3;
  cfg.eval_size = 16;
  const TrainResult r = train(model, {TaskKind::copy, 8, 6, 1, 2}, cfg);
  ASSERT_EQ(r.rows.size(), 5u);
  for (const auto& row : r.rows) EXPECT_EQ(row.loss, r.rows[0].loss);
  EXPECT_EQ(r.rows.back().step, 12u);
}

TEST(Training, OverfitsOneBatch) {
  Model model = Model::init(tiny(8), 2);
  const auto batch = gen_task({TaskKind::copy, 8, 6, 1, 5}, 4);
  RmsProp opt(model, 1e-2);
  Model grads;
  for (int step = 0; step < 500; ++step) {
    batch_gradients(model, batch, grads);
    opt.step(model, grads);
  }
  EXPECT_EQ(evaluate(model, batch).accuracy, 1.0);
}

TEST(Training, DeterministicMetrics) {
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.batch = 4;
  cfg.eval_interval = 5;
  cfg.eval_size = 16;
  cfg.seed = 3;
  const TaskSpec task{TaskKind::recall, 8, 10, 4, 6};
  Model a = Model::init(tiny(8), 3), b = Model::init(tiny(8), 3);
  const TrainResult ra = train(a, task, cfg), rb = train(b, task, cfg);
  std::ostringstream sa, sb;
  write_metrics_csv(sa, ra.rows);
  write_metrics_csv(sb, rb.rows);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str().substr(0, 19), "step,loss,accuracy\n");
}

TEST(Training, DivergenceStopsTheRun) {
  Model model = Model::init(tiny(8), 4);
  TrainConfig cfg;
  cfg.steps = 200;
  cfg.batch = 2;
  cfg.lr = 1e300;
  cfg.grad_clip = 0.0;
  cfg.eval_size = 4;
  const TrainResult r = train(model, {TaskKind::copy, 8, 6, 1, 2}, cfg);
  EXPECT_TRUE(r.diverged);
  EXPECT_LT(r.steps_run, 200u);
  EXPECT_FALSE(r.diagnostic.empty());
  EXPECT_FALSE(std::isfinite(r.rows.back().loss));
}

TEST(Training, VocabMismatchIsRejected) {
  Model model = Model::init(tiny(8), 5);
  EXPECT_THROW(train(model, {TaskKind::copy, 9, 6, 1, 2}, TrainConfig{}), ContractViolation);
}

TEST(Training, ClippingBoundsTheGlobalNorm) {
  const Model model = Model::init(tiny(8), 6);
  Model grads;
  batch_gradients(model, gen_task({TaskKind::copy, 8, 6, 1, 5}, 3), grads);
  const double norm = global_norm(grads);
  ASSERT_GT(norm, 0.0);
  scale_grads(grads, 0.5 / norm);
  EXPECT_NEAR(global_norm(grads), 0.5, 1e-12);
}

TEST(Training, GradientProfileHasOneEntryPerPosition) {
  const Model model = Model::init(tiny(8), 7);
  const auto ex = gen_task({TaskKind::recall, 8, 10, 4, 6}, 3);
  const Vector p = gradient_profile(model, ex);
  ASSERT_EQ(p.size(), 10u);
  for (double x : p) EXPECT_TRUE(std::isfinite(x));
  EXPECT_GT(p[9], 0.0);
}

TEST(Bench, CountsMatchClosedForms) {
  for (std::size_t n : {1, 2, 7, 64, 300})
    for (std::size_t d : {1, 3, 16}) {
      EXPECT_EQ(count_madds(Arch::attention, n, d, 8, 4), attention_closed_form(n, d));
      EXPECT_EQ(count_madds(Arch::rwkv, n, d, 8, 4), 3 * n * d);
      for (std::size_t s : {1, 4, 8})
        for (std::size_t C : {1, 4}) EXPECT_EQ(count_madds(Arch::rrwkv, n, d, s, C), rrwkv_closed_form(n, d, s, C));
    }
}

TEST(Bench, SlopesAndFit) {
  BenchConfig cfg;
  cfg.trials = 0;
  const auto rows = bench_scaling(cfg);
  ASSERT_EQ(rows.size(), 15u);
  EXPECT_NEAR(loglog_slope(rows, Arch::attention), 2.0, 0.05);
  EXPECT_NEAR(loglog_slope(rows, Arch::rwkv), 1.0, 1e-12);
  const TwoTermFit fit = fit_linear_plus_quadratic(rows, Arch::rrwkv);
  EXPECT_LT(fit.max_rel_residual, 0.05);
  EXPECT_GT(fit.a, 0.0);
  EXPECT_GT(fit.b, 0.0);
  for (const auto& r : rows) EXPECT_EQ(r.wall_ms, 0.0);
}

TEST(Bench, CountsIgnoreTheSeedAndCsvLayout) {
  BenchConfig a, b;
  a.n = b.n = {8, 16, 32, 64};
  a.d = b.d = 4;
  a.trials = b.trials = 1;
  b.seed = 77;
  const auto ra = bench_scaling(a), rb = bench_scaling(b);
  for (std::size_t i = 0; i < ra.size(); ++i) EXPECT_EQ(ra[i].madds, rb[i].madds);
  std::ostringstream os;
  write_bench_csv(os, std::span(ra).first(1));
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "arch,n,d,s,madds,wall_ms");
}

TEST(Bench, ConfigValidation) {
  BenchConfig cfg;
  cfg.n = {16, 32, 64};
  EXPECT_THROW(cfg.validate(), ContractViolation);
  cfg.n = {16, 64, 32, 128};
  EXPECT_THROW(cfg.validate(), ContractViolation);
  EXPECT_EQ(parse_arch("attention"), Arch::attention);
  EXPECT_THROW(parse_arch("lstm"), InputError);
}

TEST(PathLength, ChainAndAttentionExact) {
  for (std::size_t n : {1, 2, 10, 16, 64, 256, 1024}) {
    EXPECT_EQ(path_length(build_info_flow(Arch::rwkv, n, 8)), n - 1);
    if (n <= 256) EXPECT_EQ(path_length(build_info_flow(Arch::attention, n, 8)), n > 1 ? 1u : 0u);
  }
}

TEST(PathLength, KnownRrwkvValues) {
  EXPECT_EQ(path_length(build_info_flow(Arch::rrwkv, 64, 8)), 7u);
  EXPECT_EQ(path_length(build_info_flow(Arch::rrwkv, 64, 4)), 3u);
  EXPECT_EQ(path_length(build_info_flow(Arch::rrwkv, 64, 2)), 3u);
}

TEST(PathLength, BoundOnDividingIntervals) {
  for (std::size_t n : {16, 64, 256, 1024})
    for (std::size_t s : {1, 2, 4, 8, 16, 64}) {
      const std::size_t p = path_length(build_info_flow(Arch::rrwkv, n, s));
      EXPECT_LE(p, s + 3) << "n=" << n << " s=" << s;
    }
}

TEST(PathLength, RemainderBoundEverywhere) {
  for (std::size_t n = 1; n <= 200; ++n)
    for (std::size_t s = 1; s <= 24; ++s) {
      const std::size_t p = path_length(build_info_flow(Arch::rrwkv, n, s));
      ASSERT_LE(p, s + n % s + 3) << "n=" << n << " s=" << s;
    }
}

TEST(PathLength, NonIncreasingAsIntervalShrinks) {
  for (std::size_t n = 4; n <= 256; ++n) {
    std::size_t prev = std::numeric_limits<std::size_t>::max();
    for (std::size_t s = n + 4; s >= 1; --s) {
      if (s <= n && n % s != 0) continue;
      const std::size_t p = path_length(build_info_flow(Arch::rrwkv, n, s));
      ASSERT_LE(p, prev) << "n=" << n << " s=" << s;
      prev = p;
    }
  }
}

TEST(PathLength, BfsMatchesFloydWarshall) {
  for (std::size_t n = 1; n <= 24; ++n)
    for (std::size_t s = 1; s <= 7; ++s) {
      const InfoFlowGraph g = build_info_flow(Arch::rrwkv, n, s);
      ASSERT_TRUE(g.acyclic());
      ASSERT_EQ(path_length(g), floyd_max_path(g)) << "n=" << n << " s=" << s;
      ASSERT_EQ(path_length_serial(g), path_length(g));
    }
  EXPECT_EQ(floyd_max_path(build_info_flow(Arch::attention, 9, 1)), 1u);
}

TEST(PathLength, ParallelMatchesSerialOnLargeGraphs) {
  for (std::size_t s : {4, 8, 64}) {
    const InfoFlowGraph g = build_info_flow(Arch::rrwkv, 1024, s);
    EXPECT_EQ(path_length(g), path_length_serial(g));
  }
}

TEST(PathLength, CyclesAreRejected) {
  const InfoFlowGraph literal = build_info_flow(Arch::rrwkv, 16, 4, MappingMode::paper_literal);
  EXPECT_FALSE(literal.acyclic());
  EXPECT_THROW(path_length(literal), ContractViolation);
  InfoFlowGraph loop;
  const auto a = loop.add_node(), b = loop.add_node();
  loop.add_edge(a, b);
  loop.add_edge(b, a);
  loop.inputs = {a};
  loop.outputs = {b};
  EXPECT_THROW(path_length_serial(loop), ContractViolation);
}

TEST(PathLength, CsvLayout) {
  std::ostringstream os;
  const std::vector<PathRow> rows{{Arch::rwkv, 10, 0, 9}};
  write_path_csv(os, rows);
  EXPECT_EQ(os.str(), "arch,n,s,max_path\nrwkv,10,0,9\n");
}
