#include "ergmark/backend.hpp"
#include "ergmark/energy.hpp"
#include "ergmark/kernels.hpp"
#include "ergmark/power.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

using namespace ergmark;

namespace {

ThreadPool& pool() {
    static ThreadPool p(hardware_threads());
    return p;
}

std::vector<float> uniform(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

void median_2d(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    const auto n = static_cast<std::size_t>(state.range(1));
    std::mt19937_64 rng(1);
    std::vector<std::uint16_t> px(side * side);
    for (auto& p : px) p = static_cast<std::uint16_t>(rng());
    const Image2D img(side, side, px);
    for (auto _ : state) benchmark::DoNotOptimize(median_filter_2d(img, n, pool()));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(px.size()));
}
BENCHMARK(median_2d)->Args({256, 3})->Args({256, 5})->Args({512, 3})->Unit(benchmark::kMillisecond);

void dot_f32(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto x = uniform(n, 2);
    const auto y = uniform(n, 3);
    for (auto _ : state) benchmark::DoNotOptimize(dot_product<float>(x, y, pool()));
    state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * sizeof(float)));
}
BENCHMARK(dot_f32)->RangeMultiplier(8)->Range(1 << 12, 1 << 21);

void xcorr(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const SignalPair s{uniform(n, 4), uniform(n, 5)};
    for (auto _ : state) benchmark::DoNotOptimize(cross_correlate(s, CorrelationMode::raw, pool()));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK(xcorr)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);

template <typename Real>
void advect_step(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::vector<Real> u0(n * n);
    for (std::size_t k = 0; k < u0.size(); ++k) u0[k] = static_cast<Real>(std::sin(0.01 * static_cast<double>(k)));
    auto st = make_grid_state<Real>(n, n, 1.0, 0.5, 0.5 / (1.5 * static_cast<double>(n)), u0);
    for (auto _ : state) ssprk33_advect_step(st, pool());
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}
BENCHMARK_TEMPLATE(advect_step, float)->Arg(256)->Arg(1024);
BENCHMARK_TEMPLATE(advect_step, double)->Arg(256)->Arg(1024);

void integrate_trace(benchmark::State& state) {
    PowerTrace t;
    t.nominal_rate_hz = 10;
    const auto n = static_cast<std::size_t>(state.range(0));
    for (std::size_t i = 0; i < n; ++i) {
        t.samples.push_back({static_cast<std::int64_t>(i) * 100'000'000, 50.0 + std::sin(0.1 * static_cast<double>(i))});
    }
    const TimeWindow w{t.first_ns(), t.last_ns()};
    for (auto _ : state) benchmark::DoNotOptimize(integrate_power(t, w));
}
BENCHMARK(integrate_trace)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
