#include <benchmark/benchmark.h>

#include <vector>

#include "pgd/det_eval.hpp"
#include "pgd/distill_loss.hpp"
#include "pgd/pgw.hpp"
#include "pgd/synth.hpp"

namespace {

const pgd::SceneBundle& scene() {
    static const pgd::SceneBundle b = [] {
        pgd::SynthSpec s;
        s.num_objects = 5;
        return pgd::generate_bundle(s);
    }();
    return b;
}

void BM_PgwMask(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(pgd::pgw_mask(scene(), 0.8, 30));
}
BENCHMARK(BM_PgwMask);

void BM_TotalLoss(benchmark::State& state) {
    const pgd::DistillConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(pgd::total_loss(scene(), cfg).total);
}
BENCHMARK(BM_TotalLoss);

void BM_LossGradients(benchmark::State& state) {
    const pgd::DistillConfig cfg;
    const auto inputs = pgd::prepare_inputs(scene(), cfg);
    for (auto _ : state) benchmark::DoNotOptimize(pgd::loss_gradients(inputs, cfg));
}
BENCHMARK(BM_LossGradients);

void BM_Maskout(benchmark::State& state) {
    const std::vector<double> ratios{0, 1, 2, 5, 10, 20, 50, 100};
    const int workers = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(pgd::maskout_experiment(scene(), ratios, 0.8, 0.6, workers));
}
BENCHMARK(BM_Maskout)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
