#pragma once

#include "ergmark/backend.hpp"
#include "ergmark/energy.hpp"
#include "ergmark/power.hpp"
#include "ergmark/results.hpp"
#include "ergmark/workload.hpp"
#include "ergmark/workloads.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ergmark {

struct RunConfig {
    // Container directory (or its workload.json), or a canonical workload id
    // that is generated in memory with `scale`, `seed` and `precision`.
    std::string workload;
    Scale scale = Scale::desk;
    std::uint64_t seed = 42;
    std::optional<Precision> precision;

    std::string device = "host";
    std::optional<std::size_t> workers;

    std::size_t runs = 3;
    bool allow_fewer_runs = false;
    std::optional<std::size_t> iterations;  // defaults to the manifest value
    std::optional<std::size_t> warmup;      // defaults to 1 at desk scale, 0 at paper scale

    ProviderConfig provider;
    double sample_hz = 10.0;
    double baseline_seconds = 5.0;
    double baseline_min_seconds = kBaselineMinSeconds;
    std::optional<double> psu_efficiency;
    bool legacy_external = false;
    WindowMode window = WindowMode::kernel;
    double tail_s = 0.0;

    bool verify = false;
    std::optional<std::filesystem::path> out;  // bundle is not persisted when empty

    // Test hook: run index (1-based) -> extra busy time as a fraction of each
    // iteration, spent inside the timed window.
    std::map<std::size_t, double> slowdown;
};

// Checks ranges and flag combinations. Throws Error(usage).
void validate_config(const RunConfig& cfg);

// Resolves RunConfig::workload to a loaded container.
Workload load_workload(const RunConfig& cfg);

struct AlignedWindow {
    TimeWindow window;
    double span_coverage = 1.0;  // part of the window inside the trace span
};

// [anchor_start, anchor_stop] in kernel mode; extended mode appends tail_s.
// Throws Error(usage) when the anchors are reversed or do not cover the timed
// kernel time.
AlignedWindow align_trace_to_window(const PowerTrace& trace, const TimingRecord& timing,
                                    std::int64_t anchor_start_ns, std::int64_t anchor_stop_ns,
                                    WindowMode mode, double tail_s = 0.0);

struct RunOutcome {
    ResultBundle bundle;
    std::vector<std::filesystem::path> files;  // empty when not persisted
};

// Baseline, one load of the inputs, then per run: warm-up, sampling start,
// timed iterations, sampling stop, window alignment, integration and
// corrections. Ends with validity checks, aggregation and persistence.
RunOutcome run_benchmark(const RunConfig& cfg);

struct RunReanalysis {
    std::size_t index = 0;
    std::optional<EnergyResult> stored;
    std::optional<EnergyResult> recomputed;
    double rel_diff = 0.0;
};

struct Reanalysis {
    ResultBundle bundle;
    std::vector<RunReanalysis> runs;
    RunSummary aggregate;
    double max_rel_diff = 0.0;
};

// Recomputes every run's energy from the stored trace, anchors and settings.
Reanalysis analyze_bundle(const ResultBundle& bundle);
Reanalysis analyze_bundle(const std::filesystem::path& dir);

// 1 usage, 2 validity failure, 3 device/provider/kernel failure, 4 I/O.
constexpr int kExitUsage = 1;
constexpr int kExitValidity = 2;
constexpr int kExitDevice = 3;
constexpr int kExitIo = 4;

int exit_code_for(ErrorKind kind) noexcept;

// Exit status of a finished run: validity failure only counts for
// conforming bundles.
int exit_code_for(const ResultBundle& bundle) noexcept;

// CSV with header year,efficiency; extra columns are ignored.
std::vector<TrendPoint> read_trend_csv(const std::filesystem::path& path);

// (year, 1 / mean corrected energy) of a valid bundle with energy data.
TrendPoint trend_point_from_bundle(const ResultBundle& bundle, double year);

}  // namespace ergmark
