// Microbenchmarks for the structured matrix-vector multiplies. Reports the
// MAC count per iteration so runtime-per-FLOP is visible across families.

#include <benchmark/benchmark.h>

#include "smx/costs.hpp"
#include "smx/structured.hpp"

namespace {

using namespace smx;

StructuredMatrix build(Family f, std::int64_t d, std::int64_t rank,
                       std::int64_t blocks) {
    StructureOptions opts;
    opts.cores = 2;
    opts.rank = rank;
    opts.blocks = blocks;
    opts.kernel = 9;
    auto m = make_structured(f, d, d, opts);
    auto cores = core_tensors(m);
    for (std::size_t i = 0; i < cores.size(); ++i) {
        *cores[i] = gaussian(cores[i]->shape(), 0.0, 0.02, 11 + 7 * i);
    }
    return m;
}

void run_mvm(benchmark::State &state, Family f, std::int64_t rank,
             std::int64_t blocks) {
    const std::int64_t d = state.range(0);
    auto m = build(f, d, rank, blocks);
    auto x = gaussian({d, 1}, 0.0, 1.0, 99);
    for (auto _ : state) {
        auto y = structured_apply(m, x);
        benchmark::DoNotOptimize(y.data());
    }
    state.counters["macs"] = static_cast<double>(cost(m).flops);
}

void BM_DenseMvm(benchmark::State &state) {
    run_mvm(state, Family::Dense, 1, 4);
}
void BM_MonarchMvm(benchmark::State &state) {
    run_mvm(state, Family::Monarch, 1, 4);
}
void BM_BttMvm(benchmark::State &state) {
    run_mvm(state, Family::BlockTensorTrain, 2, 4);
}
void BM_TtMvm(benchmark::State &state) {
    run_mvm(state, Family::TensorTrain, 2, 4);
}
void BM_KroneckerMvm(benchmark::State &state) {
    run_mvm(state, Family::Kronecker, 1, 4);
}
void BM_LowRankMvm(benchmark::State &state) {
    run_mvm(state, Family::LowRank, 16, 4);
}
void BM_ConvMvm(benchmark::State &state) {
    run_mvm(state, Family::Convolution, 1, 4);
}

} // namespace

BENCHMARK(BM_DenseMvm)->Arg(256)->Arg(1024)->Arg(2048);
BENCHMARK(BM_MonarchMvm)->Arg(256)->Arg(1024)->Arg(4096);
BENCHMARK(BM_BttMvm)->Arg(256)->Arg(1024)->Arg(4096);
BENCHMARK(BM_TtMvm)->Arg(256)->Arg(1024)->Arg(4096);
BENCHMARK(BM_KroneckerMvm)->Arg(256)->Arg(1024)->Arg(4096);
BENCHMARK(BM_LowRankMvm)->Arg(256)->Arg(1024)->Arg(4096);
BENCHMARK(BM_ConvMvm)->Arg(256)->Arg(1024)->Arg(4096);

BENCHMARK_MAIN();
