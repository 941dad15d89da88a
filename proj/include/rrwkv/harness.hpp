#pragma once

// Synthetic long-range tasks, the training loop, the operation-count / wall
// time benchmark, and the information-flow path-length analyzer.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rrwkv/backward.hpp"
#include "rrwkv/rrwkv.hpp"

namespace rrwkv {

// ---------------------------------------------------------------------------
// Tasks
//
// Token 0 is reserved as the answer prompt. The remaining ids are split into
// a content alphabet [1, h] and a filler alphabet [h + 1, vocab) with
// h = (vocab - 1) / 2.
//
// recall (1-based positions): key at T-gap-3, its value at T-gap-2, gap
// fillers, the key repeated as the query at T-1, the prompt at T. Only T is
// scored, against the value. Needs T >= gap + 4.
//
// copy: positions 1..T-gap carry random content, the rest are prompts, and
// position t > gap must reproduce the input at t - gap. gap = 0 is an echo.

enum class TaskKind { copy, recall };

std::string to_string(TaskKind k);
TaskKind parse_task_kind(const std::string& s);

inline constexpr int kPromptToken = 0;

struct TaskSpec {
  TaskKind kind = TaskKind::recall;
  std::size_t vocab = 16;
  std::size_t T = 16;
  std::size_t gap = 8;
  std::uint64_t seed = 0;

  std::size_t content_size() const { return (vocab - 1) / 2; }
  // ContractViolation on gap >= T or a layout that does not fit.
  void validate() const;
};

struct Example {
  std::vector<int> input;
  std::vector<int> target;
  std::vector<std::uint8_t> mask;
};

// Deterministic example stream for a spec; the spec seed fixes the sequence.
class TaskGenerator {
 public:
  explicit TaskGenerator(const TaskSpec& spec);
  Example next();
  std::vector<Example> batch(std::size_t count);
  const TaskSpec& spec() const { return spec_; }

 private:
  TaskSpec spec_;
  Rng rng_;
};

std::vector<Example> gen_task(const TaskSpec& spec, std::size_t count);

// The evaluation set train() reports on: same layout, a seed derived from the
// task seed so it never coincides with the training stream.
std::vector<Example> held_out_examples(const TaskSpec& spec, std::size_t count);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t steps = 1000;
  std::size_t batch = 16;
  double lr = 3e-3;
  std::size_t eval_interval = 100;
  std::size_t eval_size = 256;
  double grad_clip = 1.0;        // global norm; 0 disables
  double target_accuracy = 0.0;  // stop once evaluation reaches it; 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricRow {
  std::size_t step = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Mean masked cross-entropy over examples and masked-token argmax accuracy.
EvalResult evaluate(const Model& model, std::span<const Example> examples);

// Sum over the batch of each example's masked-mean loss gradient, divided by
// the batch size. Examples run in parallel; per-example gradients are added in
// batch order so the result does not depend on the thread count.
double batch_gradients(const Model& model, std::span<const Example> batch, Model& grads);

// Root-mean-square scaled steps without momentum:
//   v <- rho v + (1 - rho) g^2;  theta <- theta - lr g / (sqrt(v) + eps)
class RmsProp {
 public:
  RmsProp(const Model& shape, double lr, double rho = 0.99, double eps = 1e-8);
  void step(Model& model, const Model& grads);

 private:
  double lr_, rho_, eps_;
  Model square_avg_;
};

double global_norm(const Model& grads);
void scale_grads(Model& grads, double factor);

struct TrainResult {
  std::vector<MetricRow> rows;  // evaluation rows, step 0 first
  std::size_t steps_run = 0;
  bool diverged = false;
  std::string diagnostic;
};

// Rows hold held-out evaluation loss and accuracy every eval_interval steps
// and after the last step. A non-finite training loss stops the run and sets
// `diverged`. ContractViolation when the model and task vocab differ.
TrainResult train(Model& model, const TaskSpec& task, const TrainConfig& cfg,
                  const std::function<void(const MetricRow&)>& on_row = {});

// Mean over examples of the per-position gradient norms of the final-position
// loss with respect to the embedded inputs.
Vector gradient_profile(const Model& model, std::span<const Example> examples);

// ---------------------------------------------------------------------------
// Scaling benchmark
//
// Architectures compare the token-mixing cores on a length-n, width-d stream:
// "attention" is causal softmax attention, "rwkv" the WKV recurrence, "rrwkv"
// the medium squeeze/gates plus WKV over the interleaved stream.

enum class Arch { attention, rwkv, rrwkv };

std::string to_string(Arch a);
Arch parse_arch(const std::string& s);

struct BenchRow {
  Arch arch = Arch::rwkv;
  std::size_t n = 0, d = 0, s = 0;
  std::uint64_t madds = 0;
  double wall_ms = 0.0;
};

// Exact multiply-add count of one core evaluation; independent of inputs.
std::uint64_t count_madds(Arch arch, std::size_t n, std::size_t d, std::size_t s, std::size_t C);

// Median of `trials` 32-bit wall times (parallel kernels); 0 trials skips timing.
double time_core_ms(Arch arch, std::size_t n, std::size_t d, std::size_t s, std::size_t C, std::size_t trials,
                    std::uint64_t seed);

struct BenchConfig {
  std::vector<Arch> archs{Arch::attention, Arch::rwkv, Arch::rrwkv};
  std::vector<std::size_t> n{128, 256, 512, 1024, 2048};
  std::size_t d = 64;
  std::size_t s = 8;
  std::size_t C = 4;
  std::size_t trials = 5;
  std::uint64_t seed = 0;

  // ContractViolation unless n is strictly ascending with at least 4 points.
  void validate() const;
};

std::vector<BenchRow> bench_scaling(const BenchConfig& cfg);

// Least-squares slope of log(madds) against log(n) for one architecture.
double loglog_slope(std::span<const BenchRow> rows, Arch arch);

struct TwoTermFit {
  double a = 0.0, b = 0.0;
  double max_rel_residual = 0.0;
};

// madds ~ a n d + b c^2 d with c = max(1, floor(n / s)).
TwoTermFit fit_linear_plus_quadratic(std::span<const BenchRow> rows, Arch arch);

void write_bench_csv(std::ostream& os, std::span<const BenchRow> rows);

// ---------------------------------------------------------------------------
// Information-flow graphs

struct InfoFlowGraph {
  std::vector<std::vector<std::uint32_t>> adjacency;
  std::vector<std::uint32_t> inputs;
  std::vector<std::uint32_t> outputs;

  std::uint32_t add_node();
  void add_edge(std::uint32_t from, std::uint32_t to);
  std::size_t node_count() const { return adjacency.size(); }
  std::size_t edge_count() const;
  bool acyclic() const;
};

// Token nodes are both the inputs and the outputs. Edge rules:
//   rwkv       recurrence t-1 -> t
//   attention  i -> t for every i < t
//   rrwkv      recurrence along the interleaved stream (tokens and recalibrated
//              mediums), squeeze (window token -> raw medium j), recalibration
//              (raw medium j' <= j -> medium j), excitation (medium -> every
//              token mapped to it)
// paper_literal mapping lets a medium excite the tokens it summarizes, which
// closes a cycle for every nonempty window.
InfoFlowGraph build_info_flow(Arch arch, std::size_t n, std::size_t s, MappingMode mapping = MappingMode::causal);

// Maximum over reachable (input, output) pairs of the shortest hop count.
// Sources run in parallel. ContractViolation on a cyclic graph.
std::size_t path_length(const InfoFlowGraph& g);
// Single-threaded reference.
std::size_t path_length_serial(const InfoFlowGraph& g);

struct PathRow {
  Arch arch = Arch::rwkv;
  std::size_t n = 0, s = 0;
  std::size_t max_path = 0;
};

void write_path_csv(std::ostream& os, std::span<const PathRow> rows);
void write_metrics_csv(std::ostream& os, std::span<const MetricRow> rows);

}  // namespace rrwkv
