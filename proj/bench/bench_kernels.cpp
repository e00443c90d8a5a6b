#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "tscore/data.hpp"
#include "tscore/kernels.hpp"
#include "tscore/random.hpp"
#include "tscore/scoring.hpp"
#include "tscore/training.hpp"

using namespace tscore;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n;
  Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

void BM_gemm(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::gemm(a, false, b, true));
}
void BM_gemm_reference(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::reference::gemm(a, false, b, true));
}

void BM_imq_sums(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Matrix x = random_matrix(n, 8, 3), z = random_matrix(n, 8, 4);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::imq_sums(x, z, 1.0));
}
void BM_imq_sums_reference(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Matrix x = random_matrix(n, 8, 3), z = random_matrix(n, 8, 4);
  for (auto _ : st) benchmark::DoNotOptimize(kernels::reference::imq_sums(x, z, 1.0));
}

void BM_mmd2_gradient(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Matrix x = random_matrix(n, 8, 5), z = random_matrix(n, 8, 6);
  Matrix gx, gz;
  for (auto _ : st) {
    kernels::mmd2_gradient(x, z, 1.0, gx, gz);
    benchmark::DoNotOptimize(gx);
  }
}
void BM_mmd2_gradient_reference(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Matrix x = random_matrix(n, 8, 5), z = random_matrix(n, 8, 6);
  Matrix gx, gz;
  for (auto _ : st) {
    kernels::reference::mmd2_gradient(x, z, 1.0, gx, gz);
    benchmark::DoNotOptimize(gx);
  }
}

const TrainedModel& bench_model() {
  static const TrainedModel m = [] {
    TrainConfig c;
    c.latent_dim = 4;
    c.steps = 0;
    TrainedModel model = initialize_model(c, 8);
    model.input_scaling = Normalizer::identity(8);
    return model;
  }();
  return m;
}

const std::vector<ScoreKind> kBenchKinds{ScoreKind::reconstruction_error, ScoreKind::proposed_decoder};

void BM_score_batch(benchmark::State& st) {
  const Matrix x = random_matrix(static_cast<std::size_t>(st.range(0)), 8, 7);
  for (auto _ : st) benchmark::DoNotOptimize(score_batch(bench_model(), x, kBenchKinds));
}
void BM_score_batch_reference(benchmark::State& st) {
  const Matrix x = random_matrix(static_cast<std::size_t>(st.range(0)), 8, 7);
  for (auto _ : st) benchmark::DoNotOptimize(reference::score_batch(bench_model(), x, kBenchKinds));
}

}  // namespace

BENCHMARK(BM_gemm)->Arg(64)->Arg(256);
BENCHMARK(BM_gemm_reference)->Arg(64)->Arg(256);
BENCHMARK(BM_imq_sums)->Arg(100)->Arg(1000);
BENCHMARK(BM_imq_sums_reference)->Arg(100)->Arg(1000);
BENCHMARK(BM_mmd2_gradient)->Arg(100)->Arg(1000);
BENCHMARK(BM_mmd2_gradient_reference)->Arg(100)->Arg(1000);
BENCHMARK(BM_score_batch)->Arg(1000);
BENCHMARK(BM_score_batch_reference)->Arg(1000);

BENCHMARK_MAIN();
