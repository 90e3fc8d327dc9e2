#include "ergmark/results.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <fstream>

using namespace ergmark;

namespace {

PowerTrace make_trace(std::int64_t t0, double watts) {
    PowerTrace t;
    t.provider = ProviderKind::synthetic;
    t.nominal_rate_hz = 10;
    for (int i = 0; i < 30; ++i) t.samples.push_back({t0 + i * 100'000'000LL, watts + 0.1 * i + 1.0 / 3.0});
    return t;
}

ResultBundle three_run_bundle() {
    ResultBundle b;
    b.manifest_hash = 0xcbf29ce484222325ULL;
    b.workload_id = "dot";
    b.precision = "f32";
    b.device = {"host", DeviceKind::cpu_host, "host cpu", 4, true};
    b.config.workload = "dot";
    b.config.power_provider = "synthetic";
    b.config.psu_efficiency = 0.87;
    b.config.window_mode = WindowMode::extended;
    b.config.tail_s = 0.25;
    b.config.verified = true;
    BaselineEstimate base;
    base.watts = 20.125;
    base.duration_ns = 5'000'000'000;
    base.sample_count = 51;
    base.dispersion = 0.01;
    b.baseline = base;
    for (std::size_t k = 1; k <= 3; ++k) {
        const std::int64_t t0 = static_cast<std::int64_t>(k) * 10'000'000'000LL;
        RunRecord r;
        r.index = k;
        r.key = {"host", "dot", "f32"};
        r.timing = {1'500'000'000 + static_cast<std::int64_t>(k), 0, 1'600'000'000, 100};
        r.anchor_start_ns = t0 + 500'000'000;
        r.anchor_stop_ns = t0 + 2'100'000'000;
        EnergyResult e;
        e.window = {r.anchor_start_ns, r.anchor_stop_ns};
        e.joules_raw = 160.1 + static_cast<double>(k) / 7.0;
        e.joules_net = e.joules_raw - 32.2;
        e.corrections = build_corrections(0.87, false);
        e.joules_corrected = e.joules_net * 0.87;
        e.coverage = 1.0;
        r.energy = e;
        r.trace_ref = "trace_" + std::to_string(k) + ".csv";
        r.output_checksum = 0x1234567890abcdefULL;
        b.runs.push_back(r);
        b.traces.push_back({*r.trace_ref, make_trace(t0, 100 + static_cast<double>(k))});
    }
    b.aggregate = aggregate_runs(b.runs);
    b.valid = b.aggregate.valid;
    return b;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("a three-run bundle round-trips exactly") {
    test::TempDir dir;
    const auto b = three_run_bundle();
    const auto files = write_results(b, dir.path());
    CHECK(files.front().filename() == kSummaryFile);
    CHECK(files.size() == 7);
    CHECK_FALSE(std::filesystem::exists(dir.path() / kIncompleteMarker));
    CHECK(std::filesystem::exists(dir.path() / "trace_2.csv"));
    const auto back = read_results(dir.path());
    CHECK(back == b);

    // Writing the read bundle again reproduces the files byte for byte.
    test::TempDir again;
    write_results(back, again.path());
    for (const auto& f : files) CHECK(slurp(f) == slurp(again.path() / f.filename()));
}

TEST_CASE("an infinite deviation survives the round trip") {
    test::TempDir dir;
    auto b = three_run_bundle();
    for (auto& r : b.runs) r.energy->coverage = 0.5;
    b.aggregate = aggregate_runs(b.runs);
    b.valid = false;
    REQUIRE(std::isinf(b.aggregate.energy_validity->max_rel_dev));
    write_results(b, dir.path());
    CHECK(read_results(dir.path()) == b);
}

TEST_CASE("structural validation") {
    SUBCASE("no runs") {
        ResultBundle b;
        test::check_error(ErrorKind::validation, "bundle contains no runs", [&] { validate_bundle(b); });
    }
    SUBCASE("window outside its trace") {
        auto b = three_run_bundle();
        b.runs[1].energy->window.end_ns = b.traces[1].trace.last_ns() + 1;
        test::check_error(ErrorKind::validation, "window/trace mismatch", [&] { validate_bundle(b); });
        test::TempDir dir;
        CHECK_THROWS_AS(write_results(b, dir.path()), Error);
    }
    SUBCASE("dangling trace reference") {
        auto b = three_run_bundle();
        b.runs[0].trace_ref = "trace_9.csv";
        test::check_error(ErrorKind::validation, "missing trace", [&] { validate_bundle(b); });
    }
    SUBCASE("energy without a trace") {
        auto b = three_run_bundle();
        b.runs[2].trace_ref.reset();
        test::check_error(ErrorKind::validation, "no trace reference", [&] { validate_bundle(b); });
    }
    SUBCASE("unsafe trace name") {
        auto b = three_run_bundle();
        b.traces[0].file = "../escape.csv";
        b.runs[0].trace_ref = "../escape.csv";
        test::TempDir dir;
        test::check_error(ErrorKind::validation, "bad trace file name", [&] { write_results(b, dir.path()); });
    }
}

TEST_CASE("reading damaged bundles") {
    test::TempDir dir;
    write_results(three_run_bundle(), dir.path());
    SUBCASE("interrupted write") {
        std::ofstream(dir.path() / kIncompleteMarker) << "x";
        test::check_error(ErrorKind::validation, "incomplete", [&] { read_results(dir.path()); });
    }
    SUBCASE("missing trace file") {
        std::filesystem::remove(dir.path() / "trace_3.csv");
        test::check_error(ErrorKind::io, "missing file", [&] { read_results(dir.path()); });
    }
    SUBCASE("missing summary") {
        std::filesystem::remove(dir.path() / kSummaryFile);
        test::check_error(ErrorKind::io, "missing file", [&] { read_results(dir.path()); });
    }
    SUBCASE("malformed summary") {
        std::ofstream(dir.path() / kSummaryFile) << "{\"format\": \"ergmark-results/1\"}";
        test::check_error(ErrorKind::validation, "malformed bundle", [&] { read_results(dir.path()); });
    }
    SUBCASE("edited trace breaks the window") {
        std::ofstream(dir.path() / "trace_1.csv") << "t_ns,watts\n0,1\n1,1\n";
        test::check_error(ErrorKind::validation, "window/trace mismatch", [&] { read_results(dir.path()); });
    }
}

TEST_CASE("trace CSV") {
    const auto t = make_trace(123, 55.5);
    const auto text = format_trace_csv(t);
    CHECK(text.rfind("t_ns,watts\n123,", 0) == 0);
    CHECK(parse_trace_csv(text, "mem") == t.samples);
    test::check_error(ErrorKind::validation, "header", [] { parse_trace_csv("t,w\n1,2\n", "mem"); });
    test::check_error(ErrorKind::validation, "line 3", [] { parse_trace_csv("t_ns,watts\n1,2\nx,3\n", "mem"); });
    test::check_error(ErrorKind::validation, "empty", [] { parse_trace_csv("", "mem"); });
    CHECK(window_mode_from_string("extended") == WindowMode::extended);
    CHECK_THROWS_AS(window_mode_from_string("wide"), Error);
}
