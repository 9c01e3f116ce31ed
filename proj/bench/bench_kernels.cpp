// Serial reference vs OpenMP kernels on teacher-sized workloads.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "kdiqa/kernels.hpp"
#include "kdiqa/nets.hpp"
#include "kdiqa/scoring.hpp"

namespace {

using namespace kdiqa;

struct Workload {
    EncoderParams params;
    PromptBank bank;
    std::vector<Vec> xs;
    std::vector<Embedding> embs;
    Matrix upstream;

    explicit Workload(std::size_t batch)
        : params(init_params(std::vector<std::size_t>{32, 128, 64, 32}, 1)),
          bank(make_synthetic_bank(32, kDefaultTemperature, 2)) {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> g(0.0, 1.0);
        xs.assign(batch, Vec(32));
        for (auto& x : xs)
            for (auto& v : x) v = g(rng);
        embs = kernels::serial::encode_batch(params, xs);
        upstream = Matrix(batch, 32);
        for (auto& v : upstream.flat()) v = g(rng);
    }
};

template <bool Parallel>
void BM_EncodeBatch(benchmark::State& state) {
    Workload w(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        auto out = Parallel ? kernels::omp::encode_batch(w.params, w.xs) : kernels::serial::encode_batch(w.params, w.xs);
        benchmark::DoNotOptimize(out);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_ScoreBatch(benchmark::State& state) {
    Workload w(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        auto out = Parallel ? kernels::omp::score_batch(w.embs, w.bank) : kernels::serial::score_batch(w.embs, w.bank);
        benchmark::DoNotOptimize(out);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_BackwardBatch(benchmark::State& state) {
    Workload w(static_cast<std::size_t>(state.range(0)));
    std::vector<ForwardCache> caches;
    kernels::serial::encode_batch(w.params, w.xs, &caches);
    for (auto _ : state) {
        auto g = Parallel ? kernels::omp::backward_batch(w.params, caches, w.upstream)
                          : kernels::serial::backward_batch(w.params, caches, w.upstream);
        benchmark::DoNotOptimize(g);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_EncodeBatch<false>)->Name("encode_batch/serial")->Arg(64)->Arg(2000);
BENCHMARK(BM_EncodeBatch<true>)->Name("encode_batch/omp")->Arg(64)->Arg(2000);
BENCHMARK(BM_ScoreBatch<false>)->Name("score_batch/serial")->Arg(64)->Arg(2000);
BENCHMARK(BM_ScoreBatch<true>)->Name("score_batch/omp")->Arg(64)->Arg(2000);
BENCHMARK(BM_BackwardBatch<false>)->Name("backward_batch/serial")->Arg(64);
BENCHMARK(BM_BackwardBatch<true>)->Name("backward_batch/omp")->Arg(64);

BENCHMARK_MAIN();
