#include "ergmark/orchestrator.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <fstream>

using namespace ergmark;

namespace {

// Small, quick configuration: dot at desk size with few iterations.
RunConfig quick(double idle_w = 20, double load_w = 100) {
    RunConfig c;
    c.workload = "dot";
    c.iterations = 40;
    c.provider.kind = ProviderConfig::Kind::synthetic;
    c.provider.synthetic.idle_watts = idle_w;
    c.provider.synthetic.load_watts = load_w;
    c.sample_hz = 100;
    c.baseline_seconds = 0.3;
    c.baseline_min_seconds = 0.2;
    return c;
}

double window_s(const RunRecord& r) { return static_cast<double>(r.energy->window.length_ns()) * 1e-9; }

PowerTrace flat_trace(std::int64_t from_ns, std::int64_t to_ns, double watts) {
    PowerTrace t;
    t.nominal_rate_hz = 10;
    for (std::int64_t ts = from_ns; ts <= to_ns; ts += 100'000'000) t.samples.push_back({ts, watts});
    return t;
}

}  // namespace

TEST_CASE("constant synthetic power gives (load - idle) times the window") {
    const auto out = run_benchmark(quick());
    const auto& b = out.bundle;
    CHECK(out.files.empty());
    REQUIRE(b.baseline);
    CHECK(b.baseline->watts == 20.0);
    REQUIRE(b.runs.size() == 3);
    for (const auto& r : b.runs) {
        REQUIRE(r.energy);
        CHECK(r.trace_ref == "trace_" + std::to_string(r.index) + ".csv");
        CHECK(r.energy->coverage == 1.0);
        CHECK(r.energy->window == TimeWindow{r.anchor_start_ns, r.anchor_stop_ns});
        CHECK(std::abs(r.energy->joules_raw - 100.0 * window_s(r)) <= 1e-9 * r.energy->joules_raw);
        CHECK(std::abs(r.energy->joules_net - 80.0 * window_s(r)) <= 1e-9 * r.energy->joules_net);
        CHECK(r.energy->joules_corrected == r.energy->joules_net);
        // The window brackets the kernels tightly.
        CHECK(r.anchor_stop_ns - r.anchor_start_ns >= r.timing.kernel_ns);
        CHECK(r.timing.iterations == 40);
    }
    CHECK(b.aggregate.energy_j);
    CHECK(b.config.conforming);
    CHECK(b.workload_id == "dot");
    CHECK(b.precision == "f32");
}

TEST_CASE("warm-up energy is excluded") {
    auto cfg = quick(20, 100);
    cfg.provider.synthetic.warmup_watts = 1000;
    cfg.warmup = 20;
    const auto out = run_benchmark(cfg);
    for (const auto& r : out.bundle.runs) {
        const auto* t = out.bundle.find_trace(*r.trace_ref);
        REQUIRE(t);
        for (const auto& s : t->trace.samples) CHECK(s.watts == 100.0);
        CHECK(std::abs(r.energy->joules_raw - 100.0 * window_s(r)) <= 1e-9 * r.energy->joules_raw);
    }
}

TEST_CASE("corrections and the extended window") {
    auto cfg = quick();
    cfg.psu_efficiency = 0.9;
    cfg.legacy_external = true;
    cfg.window = WindowMode::extended;
    cfg.tail_s = 0.05;
    const auto out = run_benchmark(cfg);
    for (const auto& r : out.bundle.runs) {
        CHECK(r.energy->corrections.size() == 2);
        CHECK(r.energy->joules_corrected == r.energy->joules_net * 0.9 * 0.9);
        CHECK(r.energy->window.end_ns - r.anchor_stop_ns == 50'000'000);
    }
}

TEST_CASE("no provider records times only") {
    auto cfg = quick();
    cfg.provider = ProviderConfig{};
    const auto out = run_benchmark(cfg);
    CHECK_FALSE(out.bundle.baseline);
    for (const auto& r : out.bundle.runs) {
        CHECK_FALSE(r.energy);
        CHECK_FALSE(r.trace_ref);
        CHECK(r.energy_note == "no power provider");
    }
    CHECK_FALSE(out.bundle.aggregate.energy_j);
    CHECK(exit_code_for(out.bundle) == (out.bundle.valid ? 0 : kExitValidity));
}

TEST_CASE("a 30 % slower second run fails the validity gate") {
    auto cfg = quick();
    cfg.iterations = 100;
    cfg.slowdown[2] = 0.3;
    const auto out = run_benchmark(cfg);
    CHECK_FALSE(out.bundle.valid);
    CHECK_FALSE(out.bundle.aggregate.time_validity->valid);
    CHECK(exit_code_for(out.bundle) == kExitValidity);
    const auto& runs = out.bundle.runs;
    CHECK(runs[1].timing.kernel_ns > runs[0].timing.kernel_ns);
}

TEST_CASE("fewer runs need the explicit flag") {
    auto cfg = quick();
    cfg.runs = 2;
    test::check_error(ErrorKind::usage, "at least 3", [&] { validate_config(cfg); });
    cfg.allow_fewer_runs = true;
    const auto out = run_benchmark(cfg);
    CHECK(out.bundle.runs.size() == 2);
    CHECK_FALSE(out.bundle.config.conforming);
    CHECK_FALSE(out.bundle.valid);
    CHECK(exit_code_for(out.bundle) == 0);
}

TEST_CASE("configuration errors") {
    auto cfg = quick();
    cfg.tail_s = 0.5;
    test::check_error(ErrorKind::usage, "extended", [&] { validate_config(cfg); });
    cfg = quick();
    cfg.slowdown[7] = 0.1;
    test::check_error(ErrorKind::usage, "does not exist", [&] { validate_config(cfg); });
    cfg = quick();
    cfg.workload = "no-such-thing";
    test::check_error(ErrorKind::io, "neither", [&] { run_benchmark(cfg); });
    cfg = quick();
    cfg.device = "gpu0";
    CHECK_THROWS_AS(run_benchmark(cfg), Error);
    cfg = quick();
    cfg.iterations = 0;
    test::check_error(ErrorKind::usage, "iterations", [&] { validate_config(cfg); });
}

TEST_CASE("persisted bundles re-analyze to the same energies") {
    test::TempDir dir;
    auto cfg = quick();
    cfg.psu_efficiency = 0.85;
    cfg.verify = true;
    cfg.out = dir.path() / "bundle";
    const auto out = run_benchmark(cfg);
    CHECK_FALSE(out.files.empty());
    CHECK(out.bundle.config.verified);
    const auto a = analyze_bundle(*cfg.out);
    CHECK(a.max_rel_diff <= 1e-9);
    CHECK(a.bundle == out.bundle);
    REQUIRE(a.runs.size() == 3);
    for (const auto& r : a.runs) CHECK(r.recomputed == r.stored);
    const auto b = analyze_bundle(a.bundle);
    CHECK(b.max_rel_diff == a.max_rel_diff);
    CHECK(b.aggregate == a.aggregate);
}

TEST_CASE("repeat runs are deterministic in outputs and inputs") {
    auto cfg = quick();
    cfg.provider = ProviderConfig{};
    cfg.seed = 9;
    const auto a = run_benchmark(cfg);
    const auto b = run_benchmark(cfg);
    CHECK(a.bundle.manifest_hash == b.bundle.manifest_hash);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.bundle.runs[i].output_checksum == b.bundle.runs[i].output_checksum);
        CHECK(a.bundle.runs[i].output_checksum == a.bundle.runs[0].output_checksum);
    }
    cfg.seed = 10;
    CHECK(run_benchmark(cfg).bundle.manifest_hash != a.bundle.manifest_hash);
}

TEST_CASE("window alignment") {
    const std::int64_t s = 1'000'000'000;
    const auto trace = flat_trace(0, 10 * s, 50);
    TimingRecord timing;
    timing.kernel_ns = 2 * s;
    timing.wall_ns = 2 * s;
    timing.iterations = 1;

    const auto k = align_trace_to_window(trace, timing, s, 3 * s + s / 2, WindowMode::kernel);
    CHECK(k.window == TimeWindow{s, 3 * s + s / 2});
    CHECK(k.span_coverage == 1.0);

    const auto e = align_trace_to_window(trace, timing, s, 3 * s + s / 2, WindowMode::extended, 0.5);
    CHECK(e.window == TimeWindow{s, 4 * s});

    test::check_error(ErrorKind::usage, "precedes", [&] { align_trace_to_window(trace, timing, 3 * s, s, WindowMode::kernel); });
    test::check_error(ErrorKind::usage, "less time",
                      [&] { align_trace_to_window(trace, timing, s, 2 * s, WindowMode::kernel); });

    SUBCASE("a trace starting one second late is partially covered") {
        const auto late = flat_trace(2 * s, 10 * s, 50);
        const auto w = align_trace_to_window(late, timing, s, 3 * s, WindowMode::kernel);
        CHECK(w.span_coverage == doctest::Approx(0.5));
        const auto r = compute_energy(late, w.window, std::nullopt, {});
        CHECK(r.coverage == doctest::Approx(0.5));
        CHECK(r.degraded());
        CHECK(r.joules_raw == doctest::Approx(50.0));
    }
}

TEST_CASE("exit codes") {
    CHECK(exit_code_for(ErrorKind::usage) == kExitUsage);
    CHECK(exit_code_for(ErrorKind::device) == kExitDevice);
    CHECK(exit_code_for(ErrorKind::provider) == kExitDevice);
    CHECK(exit_code_for(ErrorKind::numerical) == kExitDevice);
    CHECK(exit_code_for(ErrorKind::dispatch) == kExitDevice);
    CHECK(exit_code_for(ErrorKind::io) == kExitIo);
    CHECK(exit_code_for(ErrorKind::validation) == kExitIo);
}

TEST_CASE("trend inputs") {
    test::TempDir dir;
    const auto path = dir.path() / "eff.csv";
    std::ofstream(path) << "# measured\nyear,efficiency,device\n2010,1.5,a\n2012,2.0,b\n\n2014,3.0,c\n";
    const auto pts = read_trend_csv(path);
    REQUIRE(pts.size() == 3);
    CHECK(pts[1].year == 2012);
    CHECK(pts[2].efficiency == 3.0);

    std::ofstream(path) << "year,efficiency\n2010,1.5\n2012,abc\n";
    test::check_error(ErrorKind::validation, ":3", [&] { read_trend_csv(path); });
    std::ofstream(path) << "when,how\n1,2\n";
    test::check_error(ErrorKind::validation, "header", [&] { read_trend_csv(path); });

    auto cfg = quick();
    const auto b = run_benchmark(cfg).bundle;
    if (b.valid) {
        const auto p = trend_point_from_bundle(b, 2024);
        CHECK(p.year == 2024);
        CHECK(p.efficiency == doctest::Approx(1.0 / b.aggregate.energy_j->mean));
    }
    cfg.provider = ProviderConfig{};
    test::check_error(ErrorKind::validation, "no energy data",
                      [&] { trend_point_from_bundle(run_benchmark(cfg).bundle, 2024); });
}
