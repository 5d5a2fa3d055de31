// Serial reference vs OpenMP kernels, plus a whole detector forward pass under
// each backend. Run with --benchmark_filter to pick a family.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>
#include <omp.h>

#include "hoi/detector.hpp"
#include "hoi/kernels.hpp"

using namespace hoi;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const kernels::GemmShape s{n, n, n, false, true};
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::gemm(s, a, b, c, false);
    else kernels::serial::gemm(s, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_Attention(benchmark::State& state) {
  const auto q = static_cast<std::size_t>(state.range(0)), keys = static_cast<std::size_t>(state.range(1));
  const std::size_t d = 64;
  const kernels::AttentionShape s{q, keys, d, d};
  const auto Q = random_vec(q * d, 3), K = random_vec(keys * d, 4), V = random_vec(keys * d, 5);
  const auto dout = random_vec(q * d, 6);
  std::vector<double> probs(q * keys), out(q * d), dq(q * d), dk(keys * d), dv(keys * d);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::attention_forward(s, Q, K, V, {}, 0.125, probs, out);
      kernels::parallel::attention_backward(s, Q, K, V, probs, dout, 0.125, dq, dk, dv);
    } else {
      kernels::serial::attention_forward(s, Q, K, V, {}, 0.125, probs, out);
      kernels::serial::attention_backward(s, Q, K, V, probs, dout, 0.125, dq, dk, dv);
    }
    benchmark::DoNotOptimize(dv.data());
  }
}

void BM_DetectorForward(benchmark::State& state) {
  kernels::set_backend(state.range(0) ? kernels::Backend::OpenMP : kernels::Backend::Serial);
  static const Taxonomy tax = Taxonomy::default_taxonomy();
  DetectorConfig cfg;
  const EmbeddingTable emb = EmbeddingTable::pseudo(tax, {.dim = cfg.dim});
  Detector det(tax, emb, cfg, 1);
  det.bind(nullptr);
  const Tensor grid({cfg.grid_h, cfg.grid_w, cfg.dim}, random_vec(cfg.grid_h * cfg.grid_w * cfg.dim, 7));
  ForwardOptions opt;
  opt.hor_mask = true;
  opt.category_tokens = true;
  for (auto _ : state) benchmark::DoNotOptimize(det.forward(grid, opt).interaction.hoi_logits.data().data());
  kernels::set_backend(kernels::Backend::OpenMP);
  state.SetLabel(state.range(0) ? "openmp" : "serial");
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/openmp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Attention<false>)->Name("attention/serial")->Args({64, 64})->Args({256, 256})->Args({64, 1024});
BENCHMARK(BM_Attention<true>)->Name("attention/openmp")->Args({64, 64})->Args({256, 256})->Args({64, 1024});
BENCHMARK(BM_DetectorForward)->Name("detector_forward")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  benchmark::AddCustomContext("omp_max_threads", std::to_string(omp_get_max_threads()));
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
}
