// Serial reference kernels against their OpenMP counterparts, 32-bit.

#include <benchmark/benchmark.h>

#include "rrwkv/harness.hpp"
#include "rrwkv/kernels.hpp"
#include "rrwkv/rwkv.hpp"

namespace {

using rrwkv::MatrixF;
namespace k = rrwkv::kernels;

MatrixF random_float(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  rrwkv::Rng rng(seed);
  MatrixF m(rows, cols);
  for (auto& x : m.flat()) x = static_cast<float>(rng.normal());
  return m;
}

constexpr std::size_t kWidth = 64;

void BM_AttentionSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const MatrixF Q = random_float(n, kWidth, 1), K = random_float(n, kWidth, 2), V = random_float(n, kWidth, 3);
  for (auto _ : state) benchmark::DoNotOptimize(k::dot_attention_serial(Q, K, V));
  state.SetComplexityN(state.range(0));
}

void BM_AttentionOmp(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const MatrixF Q = random_float(n, kWidth, 1), K = random_float(n, kWidth, 2), V = random_float(n, kWidth, 3);
  for (auto _ : state) benchmark::DoNotOptimize(k::dot_attention_omp(Q, K, V));
  state.SetComplexityN(state.range(0));
}

void BM_WkvSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const MatrixF K = random_float(n, kWidth, 4), V = random_float(n, kWidth, 5);
  for (auto _ : state) benchmark::DoNotOptimize(k::wkv_serial(K, V));
  state.SetComplexityN(state.range(0));
}

void BM_WkvOmp(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const MatrixF K = random_float(n, kWidth, 4), V = random_float(n, kWidth, 5);
  for (auto _ : state) benchmark::DoNotOptimize(k::wkv_omp(K, V));
  state.SetComplexityN(state.range(0));
}

void BM_PathLengthSerial(benchmark::State& state) {
  const auto g = rrwkv::build_info_flow(rrwkv::Arch::rrwkv, static_cast<std::size_t>(state.range(0)), 8);
  for (auto _ : state) benchmark::DoNotOptimize(rrwkv::path_length_serial(g));
}

void BM_PathLengthOmp(benchmark::State& state) {
  const auto g = rrwkv::build_info_flow(rrwkv::Arch::rrwkv, static_cast<std::size_t>(state.range(0)), 8);
  for (auto _ : state) benchmark::DoNotOptimize(rrwkv::path_length(g));
}

}  // namespace

BENCHMARK(BM_AttentionSerial)->RangeMultiplier(2)->Range(128, 2048)->Complexity();
BENCHMARK(BM_AttentionOmp)->RangeMultiplier(2)->Range(128, 2048)->Complexity();
BENCHMARK(BM_WkvSerial)->RangeMultiplier(2)->Range(128, 2048)->Complexity();
BENCHMARK(BM_WkvOmp)->RangeMultiplier(2)->Range(128, 2048)->Complexity();
BENCHMARK(BM_PathLengthSerial)->Arg(256)->Arg(1024);
BENCHMARK(BM_PathLengthOmp)->Arg(256)->Arg(1024);

BENCHMARK_MAIN();
