#include "ergmark/backend.hpp"
#include "ergmark/energy.hpp"
#include "ergmark/power.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <future>
#include <thread>

using namespace ergmark;
using namespace std::chrono_literals;

namespace {

ProviderConfig synthetic(double watts) {
    ProviderConfig c;
    c.kind = ProviderConfig::Kind::synthetic;
    c.synthetic.idle_watts = watts;
    c.synthetic.load_watts = watts;
    return c;
}

PowerTrace sample_for(const ProviderConfig& cfg, double rate_hz, std::chrono::milliseconds d) {
    auto session = sample_session(cfg, rate_hz);
    std::this_thread::sleep_for(d);
    return session->stop();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    out << text;
}

// Energy counter file advanced by a writer thread at a fixed cadence.
class CounterFixture {
public:
    CounterFixture(std::filesystem::path path, double watts, std::chrono::milliseconds tick)
        : path_(std::move(path)) {
        write(0);
        thread_ = std::thread([this, watts, tick] {
            std::uint64_t uj = 0;
            const auto step = static_cast<std::uint64_t>(watts * 1e6 * static_cast<double>(tick.count()) / 1000.0);
            auto next = std::chrono::steady_clock::now();
            while (!stop_) {
                next += tick;
                std::this_thread::sleep_until(next);
                uj += step;
                write(uj);
            }
        });
    }
    ~CounterFixture() {
        stop_ = true;
        thread_.join();
    }

private:
    void write(std::uint64_t uj) {
        // Replace atomically so readers never see a partial number.
        const auto tmp = path_.string() + ".tmp";
        write_text(tmp, std::to_string(uj) + "\n");
        std::filesystem::rename(tmp, path_);
    }

    std::filesystem::path path_;
    std::atomic<bool> stop_{false};
    std::thread thread_;
};

double median_spacing_s(const PowerTrace& t) {
    std::vector<std::int64_t> d;
    for (std::size_t i = 1; i < t.samples.size(); ++i) d.push_back(t.samples[i].t_ns - t.samples[i - 1].t_ns);
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
    return static_cast<double>(d[d.size() / 2]) * 1e-9;
}

}  // namespace

TEST_CASE("sample rate bounds") {
    CHECK_NOTHROW(check_sample_rate(1));
    CHECK_NOTHROW(check_sample_rate(1000));
    CHECK_THROWS_AS(check_sample_rate(0.5), Error);
    CHECK_THROWS_AS(check_sample_rate(1001), Error);
    CHECK(make_provider(ProviderConfig{}) == nullptr);
}

TEST_CASE("synthetic constant 100 W at 10 Hz for 2 s") {
    const auto t = sample_for(synthetic(100), 10, 2000ms);
    CHECK(t.samples.size() >= 18);
    CHECK(t.samples.size() <= 22);
    CHECK(std::all_of(t.samples.begin(), t.samples.end(), [](const PowerSample& s) { return s.watts == 100.0; }));
    CHECK(t.provider == ProviderKind::synthetic);
    CHECK_FALSE(t.degraded());
    CHECK_NOTHROW(t.validate());
    const double spacing = median_spacing_s(t);
    CHECK(spacing >= 0.08);
    CHECK(spacing <= 0.12);
}

TEST_CASE("a provider failing after 1 s leaves one gap") {
    test::WarningCapture warnings;
    auto cfg = synthetic(100);
    cfg.synthetic.fail_after_s = 1.0;
    auto provider = make_provider(cfg);
    auto session = provider->open_session(20);
    session->start();
    std::this_thread::sleep_for(1800ms);
    const auto t = session->stop();
    CHECK(t.degraded());
    REQUIRE(t.gaps.size() == 1);
    CHECK(t.gaps[0].start_ns >= t.samples.back().t_ns);
    CHECK(t.gaps[0].end_ns > t.gaps[0].start_ns);
    CHECK(warnings.contains("read failed"));
}

TEST_CASE("energy counter arithmetic") {
    SUBCASE("1e6 uJ over 0.1 s is 10 W") {
        const auto s = power_from_counter({0, 5'000'000}, {100'000'000, 6'000'000}, std::nullopt);
        REQUIRE(s);
        CHECK(s->watts == doctest::Approx(10.0).epsilon(1e-12));
        CHECK(s->t_ns == 50'000'000);
    }
    SUBCASE("wrap at the configured range stays positive") {
        const auto s = power_from_counter({0, 999'000'000}, {1'000'000'000, 1'000'000}, 1'000'000'000ULL);
        REQUIRE(s);
        CHECK(s->watts == doctest::Approx(2.0).epsilon(1e-12));
    }
    SUBCASE("a decreasing counter without a range is dropped") {
        CHECK_FALSE(power_from_counter({0, 10}, {1'000'000, 5}, std::nullopt));
    }
    SUBCASE("file reads") {
        test::TempDir dir;
        write_text(dir.path() / "energy_uj", "123456789\n");
        CHECK(read_counter_uj(dir.path() / "energy_uj") == 123456789ULL);
        CounterReading prev{0, 123'000'000};
        const auto s = read_energy_counter_power(dir.path() / "energy_uj", prev, 1'000'000'000, std::nullopt);
        REQUIRE(s);
        CHECK(s->watts == doctest::Approx(0.456789).epsilon(1e-9));
        CHECK(prev.energy_uj == 123456789ULL);
        write_text(dir.path() / "energy_uj", "garbage\n");
        CHECK_THROWS_AS(read_counter_uj(dir.path() / "energy_uj"), Error);
        CHECK_THROWS_AS(read_counter_uj(dir.path() / "missing"), Error);
    }
}

TEST_CASE("energy counter path and direct-watts path agree") {
    test::TempDir dir;
    const auto path = dir.path() / "energy_uj";
    // 50 W programmed as a sawtooth ramp updated at 50 Hz.
    CounterFixture fixture(path, 50.0, 20ms);
    ProviderConfig cfg;
    cfg.kind = ProviderConfig::Kind::counter;
    cfg.counter_path = path;

    auto counter_future = std::async(std::launch::async, [&] { return sample_for(cfg, 10, 2500ms); });
    const auto direct = sample_for(synthetic(50), 10, 2500ms);
    const auto counted = counter_future.get();

    CHECK(counted.provider == ProviderKind::energy_counter);
    REQUIRE(counted.samples.size() >= 15);
    double sum = 0;
    for (const auto& s : counted.samples) sum += s.watts;
    const double mean = sum / static_cast<double>(counted.samples.size());
    CHECK(std::abs(mean - 50.0) <= 0.02 * 50.0);

    auto mean_power = [](const PowerTrace& t) {
        const TimeWindow w{t.first_ns(), t.last_ns()};
        return integrate_power(t, w).joules / (static_cast<double>(w.length_ns()) * 1e-9);
    };
    CHECK(std::abs(mean_power(counted) - mean_power(direct)) <= 0.01 * mean_power(direct));
}

TEST_CASE("unreachable providers fail at creation") {
    ProviderConfig counter;
    counter.kind = ProviderConfig::Kind::counter;
    counter.counter_path = "/nonexistent/energy_uj";
    CHECK_THROWS_AS(make_provider(counter), Error);
    try {
        make_provider(counter);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::provider);
    }
    ProviderConfig trace;
    trace.kind = ProviderConfig::Kind::trace;
    trace.trace_file = "/nonexistent/trace.csv";
    CHECK_THROWS_AS(make_provider(trace), Error);
}

TEST_CASE("external trace import") {
    test::TempDir dir;
    SUBCASE("current at 12 V") {
        write_text(dir.path() / "t.csv", "t_s,amps\n0,2\n1,2\n");
        const auto t = import_external_trace(dir.path() / "t.csv", {12.0, 0.0});
        REQUIRE(t.samples.size() == 2);
        CHECK(t.samples[0] == PowerSample{0, 24.0});
        CHECK(t.samples[1] == PowerSample{1'000'000'000, 24.0});
        CHECK(t.provider == ProviderKind::external_trace);
        CHECK_FALSE(t.reordered);
    }
    SUBCASE("direct watts pass through") {
        write_text(dir.path() / "t.csv", "t_s,watts\n0.5,13.25\n0.6,14.75\n0.7,0\n");
        const auto t = import_external_trace(dir.path() / "t.csv");
        REQUIRE(t.samples.size() == 3);
        CHECK(t.samples[0].watts == 13.25);
        CHECK(t.samples[1].watts == 14.75);
        CHECK(t.samples[2].watts == 0.0);
        CHECK(t.nominal_rate_hz == doctest::Approx(10.0));
    }
    SUBCASE("shuffled rows are sorted and flagged") {
        write_text(dir.path() / "t.csv", "t_s,watts\n2,3\n0,1\n1,2\n");
        test::WarningCapture warnings;
        const auto t = import_external_trace(dir.path() / "t.csv");
        CHECK(t.reordered);
        CHECK(t.samples[0].watts == 1);
        CHECK(t.samples[2].watts == 3);
        CHECK(warnings.contains("sorted"));
    }
    SUBCASE("duplicate timestamps are averaged") {
        write_text(dir.path() / "t.csv", "t_s,watts\n0,10\n1,20\n1,30\n2,10\n");
        const auto t = import_external_trace(dir.path() / "t.csv");
        REQUIRE(t.samples.size() == 3);
        CHECK(t.samples[1].watts == 25.0);
    }
    SUBCASE("offset shifts every timestamp") {
        write_text(dir.path() / "t.csv", "t_s,watts\n0,1\n1,1\n");
        const auto t = import_external_trace(dir.path() / "t.csv", {std::nullopt, 2.5});
        CHECK(t.samples[0].t_ns == 2'500'000'000);
    }
    SUBCASE("non-numeric rows are reported by line") {
        write_text(dir.path() / "t.csv", "t_s,watts\n0,1\nabc,2\n2,x\n3,1\n");
        test::check_error(ErrorKind::validation, "line(s) 3, 4", [&] { import_external_trace(dir.path() / "t.csv"); });
    }
    SUBCASE("empty file") {
        write_text(dir.path() / "t.csv", "");
        test::check_error(ErrorKind::validation, "empty", [&] { import_external_trace(dir.path() / "t.csv"); });
    }
    SUBCASE("current without a voltage") {
        write_text(dir.path() / "t.csv", "t_s,amps\n0,1\n1,1\n");
        test::check_error(ErrorKind::usage, "voltage", [&] { import_external_trace(dir.path() / "t.csv"); });
    }
}

TEST_CASE("trace provider crops the file to the session span") {
    test::TempDir dir;
    const double now_s = static_cast<double>(monotonic_now_ns()) * 1e-9;
    std::string csv = "t_s,watts\n";
    for (int i = -20; i <= 60; ++i) csv += std::to_string(now_s + 0.1 * i) + ",75\n";
    write_text(dir.path() / "meter.csv", csv);
    ProviderConfig cfg;
    cfg.kind = ProviderConfig::Kind::trace;
    cfg.trace_file = dir.path() / "meter.csv";
    auto session = sample_session(cfg, 10);
    const auto start = monotonic_now_ns();
    std::this_thread::sleep_for(500ms);
    const auto stop = monotonic_now_ns();
    const auto t = session->stop();
    REQUIRE(t.samples.size() >= 5);
    CHECK(t.provider == ProviderKind::external_trace);
    CHECK(t.first_ns() <= start);
    CHECK(t.last_ns() >= stop);
    // One neighbour on each side at most.
    CHECK(t.samples[1].t_ns > start);
    CHECK(t.samples[t.samples.size() - 2].t_ns < stop);
}

TEST_CASE("subprocess bridge") {
    SUBCASE("streams host-clock samples") {
        ProviderConfig cfg;
        cfg.kind = ProviderConfig::Kind::bridge;
        cfg.bridge_cmd =
            "python3 -u -c 'import time\nprint(\"t_ns,watts\")\nwhile True:\n"
            "    print(f\"{time.monotonic_ns()},42.5\")\n    time.sleep(0.05)'";
        const auto t = sample_for(cfg, 20, 1000ms);
        CHECK(t.provider == ProviderKind::subprocess_bridge);
        CHECK(t.samples.size() >= 10);
        CHECK(std::all_of(t.samples.begin(), t.samples.end(), [](const PowerSample& s) { return s.watts == 42.5; }));
        CHECK(t.last_ns() <= monotonic_now_ns());
    }
    SUBCASE("a silent command fails to start") {
        ProviderConfig cfg;
        cfg.kind = ProviderConfig::Kind::bridge;
        cfg.bridge_cmd = "true";
        test::check_error(ErrorKind::provider, "no sample", [&] { sample_for(cfg, 10, 100ms); });
    }
}

TEST_CASE("baseline from constant and noisy sources") {
    auto measure = [](ProviderConfig cfg) {
        auto p = make_provider(cfg);
        return measure_baseline(*p, 10, 5.0);
    };
    auto noisy_cfg = synthetic(50);
    noisy_cfg.synthetic.noise_sigma = 1.0;
    noisy_cfg.synthetic.seed = 1234;
    auto noisy = std::async(std::launch::async, measure, noisy_cfg);
    const auto flat = measure(synthetic(50));
    CHECK(flat.watts == 50.0);
    CHECK(flat.dispersion == 0.0);
    CHECK_FALSE(flat.noisy);
    CHECK(flat.sample_count >= 40);
    CHECK(flat.duration_ns >= 4'500'000'000);
    const auto n = noisy.get();
    CHECK(std::abs(n.watts - 50.0) <= 0.5);
    CHECK(n.dispersion > 0.5);
    CHECK_FALSE(n.noisy);
}

TEST_CASE("baseline warnings and errors") {
    SUBCASE("square wave of +-20 W on 50 W warns") {
        test::WarningCapture warnings;
        auto cfg = synthetic(50);
        cfg.synthetic.square_amplitude = 20;
        auto p = make_provider(cfg);
        const auto b = measure_baseline(*p, 50, 0.5, 0.5);
        CHECK(b.noisy);
        CHECK(b.dispersion / b.watts == doctest::Approx(0.4).epsilon(0.02));
        CHECK(warnings.contains("idle"));
    }
    SUBCASE("too few samples") {
        auto p = make_provider(synthetic(50));
        test::check_error(ErrorKind::provider, "insufficient baseline data", [&] { measure_baseline(*p, 1, 3.0); });
    }
    SUBCASE("too short") {
        auto p = make_provider(synthetic(50));
        test::check_error(ErrorKind::usage, "below the minimum", [&] { measure_baseline(*p, 10, 1.0); });
    }
}

TEST_CASE("synthetic provider follows the announced phase") {
    auto cfg = synthetic(0);
    cfg.synthetic.idle_watts = 20;
    cfg.synthetic.load_watts = 100;
    cfg.synthetic.warmup_watts = 500;
    auto p = make_provider(cfg);
    p->notify_phase(BenchmarkPhase::warmup);
    auto s = p->open_session(50);
    s->start();
    std::this_thread::sleep_for(100ms);
    p->notify_phase(BenchmarkPhase::measure);
    std::this_thread::sleep_for(200ms);
    const auto t = s->stop();
    CHECK(t.samples.front().watts == 500);
    CHECK(t.samples.back().watts == 100);
}
