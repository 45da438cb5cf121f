// Serial reference kernels against their OpenMP versions on the default
// benchmark. The argument is the thread count; 0 runs the serial kernel.

#include <coepg/kernels.hpp>
#include <coepg/loop.hpp>

#include <benchmark/benchmark.h>

using namespace coepg;

namespace {

struct Setup {
    Benchmark bench;
    IterationState st;
    PlannerModel planner;
    std::vector<int> ids;
    std::vector<TrainStep> steps;
    Ensemble ensemble;
};

const Setup& setup()
{
    static const Setup s = [] {
        Setup s;
        RunConfig cfg;
        s.bench = build_benchmark(cfg.benchmark_seed, cfg.benchmark);
        s.st = bootstrap(s.bench, cfg, 1);
        s.planner = sft_planner(s.st.planner, s.bench, s.st.data, cfg.planner_sft);
        s.planner.temperature = cfg.grpo.temperature;
        s.ids = s.bench.task_ids(Split::Train);
        s.steps = make_train_steps(s.bench, s.ids, cfg.buckets);
        s.ensemble = make_ensemble(s.st, s.st.verifiers.references[0], cfg);
        return s;
    }();
    return s;
}

void BM_SampleGroups(benchmark::State& state)
{
    const auto& s = setup();
    const int jobs = static_cast<int>(state.range(0));
    std::uint64_t tag = 0;
    for (auto _ : state) {
        auto g = jobs == 0 ? sample_groups_serial(s.planner, s.ensemble, s.steps, 7, 1, ++tag)
                           : sample_groups_parallel(s.planner, s.ensemble, s.steps, 7, 1, ++tag, jobs);
        benchmark::DoNotOptimize(g);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.steps.size()) * 7);
}

void BM_Propose(benchmark::State& state)
{
    const auto& s = setup();
    const int jobs = static_cast<int>(state.range(0));
    std::vector<Proposer> proposers{planner_proposer(s.planner, 1.0), seed_proposer(SeedGenerator{})};
    const auto verifiers = s.st.verifiers.verifiers();
    std::uint64_t tag = 0;
    for (auto _ : state) {
        auto p = jobs == 0 ? propose_serial(proposers, verifiers, s.steps, 3, VerifyRule::Majority, 1, ++tag)
                           : propose_parallel(proposers, verifiers, s.steps, 3, VerifyRule::Majority, 1, ++tag, jobs);
        benchmark::DoNotOptimize(p);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.steps.size()));
}

void BM_EvaluateSteps(benchmark::State& state)
{
    const auto& s = setup();
    const int jobs = static_cast<int>(state.range(0));
    const auto& g = s.st.verifiers.references[1];
    for (auto _ : state) {
        auto e = jobs == 0 ? evaluate_steps_serial(s.planner, g, s.bench, s.ids)
                           : evaluate_steps_parallel(s.planner, g, s.bench, s.ids, jobs);
        benchmark::DoNotOptimize(e);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.steps.size()));
}

} // namespace

BENCHMARK(BM_SampleGroups)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Propose)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EvaluateSteps)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
