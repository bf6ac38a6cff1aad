#include <cmath>
#include <filesystem>
#include <memory>

#include <benchmark/benchmark.h>

#include <ckoop/artifacts.hpp>
#include <ckoop/conformal.hpp>
#include <ckoop/controller.hpp>
#include <ckoop/dubins.hpp>
#include <ckoop/koopman_id.hpp>
#include <ckoop/lifting.hpp>
#include <ckoop/pipeline.hpp>

using namespace ckoop;
namespace fs = std::filesystem;

namespace {

Mat random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

Vec random_vector(Rng& rng, int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
}

struct Fixture {
    LiftedModel model;
    ControllerSpec spec;
    ExperimentConfig config;
};

// collect / fit / synth once into a scratch directory
const Fixture& fixture() {
    static const std::unique_ptr<Fixture> f = [] {
        auto out = std::make_unique<Fixture>();
        PipelineContext ctx;
        ctx.config = preset_config("dubins-paper");
        ctx.config.data.episodes = 100;
        ctx.out_dir = (fs::temp_directory_path() / "ckoop_bench").string();
        fs::remove_all(ctx.out_dir);
        cmd_collect(ctx);
        cmd_fit(ctx);
        cmd_synth(ctx);
        out->model = load_model(ctx.path("model/model.txt"));
        out->spec = load_controller(ctx.path("model/controller.txt")).spec;
        out->config = ctx.config;
        fs::remove_all(ctx.out_dir);
        return out;
    }();
    return *f;
}

}  // namespace

static void BM_SolveCrdr(benchmark::State& state) {
    Rng rng(1);
    const int m = static_cast<int>(state.range(0));
    std::vector<CrdrSubproblem> problems(64);
    for (auto& p : problems) {
        p.a = random_vector(rng, 6);
        p.f = random_matrix(rng, 6, m);
        p.r0 = rng.uniform(-0.5, 1.5);
        p.c_v = std::exp(rng.uniform(-4.6, 4.6));
    }
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_crdr(problems[i++ % problems.size()]));
    }
}
BENCHMARK(BM_SolveCrdr)->Arg(1)->Arg(2)->Arg(3);

static void BM_ConformalQuantile(benchmark::State& state) {
    Rng rng(2);
    std::vector<double> scores(static_cast<std::size_t>(state.range(0)));
    for (auto& s : scores) s = std::abs(rng.normal());
    for (auto _ : state) {
        benchmark::DoNotOptimize(conformal_quantile(scores, 0.1));
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ConformalQuantile)->RangeMultiplier(10)->Range(100, 100000)->Complexity();

static void BM_SynthesizeMetric(benchmark::State& state) {
    Rng rng(3);
    const int n = static_cast<int>(state.range(0));
    const Mat a = random_matrix(rng, n, n, 0.5);
    const Mat b = random_matrix(rng, n, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(synthesize_metric(a, b, 0.9, Mat::Identity(n, n)));
    }
}
BENCHMARK(BM_SynthesizeMetric)->DenseRange(2, 8, 2)->Unit(benchmark::kMicrosecond);

static void BM_FitEdmd(benchmark::State& state) {
    CollectionConfig cc;
    cc.episodes = static_cast<int>(state.range(0));
    cc.steps = 100;
    const TransitionDataset data = collect_episodes(cc, 4);
    const Dictionary dict = fixture().model.dictionary;
    const LiftedData lifted = lift_dataset(dict, data);
    for (auto _ : state) {
        benchmark::DoNotOptimize(fit_edmd(lifted, 0.0));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long long>(data.records.size()));
}
BENCHMARK(BM_FitEdmd)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_Rollout(benchmark::State& state) {
    const Fixture& f = fixture();
    const auto& c = f.config;
    const ControllerKind kind = state.range(0) == 0 ? ControllerKind::NFC : ControllerKind::CRDR;
    const ReferenceTrajectory ref = circle_reference(c.rollout.radius, c.data.speed, c.data.dt, c.rollout.steps);
    const Plant plant = dubins_plant(c.data.dt);
    const DubinsState x0 = perturbed_start(ref, 7, c.rollout.position_spread, c.rollout.heading_spread);
    for (auto _ : state) {
        benchmark::DoNotOptimize(rollout(f.model, f.spec, ref, kind, plant, x0.as_vector(), BoundInputs{}));
    }
    state.SetLabel(to_string(kind));
}
BENCHMARK(BM_Rollout)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
