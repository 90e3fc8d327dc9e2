#pragma once

#include "ergmark/aggregate.hpp"
#include "ergmark/backend.hpp"
#include "ergmark/energy.hpp"
#include "ergmark/power.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ergmark {

enum class WindowMode { kernel, extended };

const char* to_string(WindowMode mode);
WindowMode window_mode_from_string(const std::string& text);

// Settings that shaped the measurement; enough to redo the energy analysis.
struct BundleConfig {
    std::string workload;  // path or canonical id the run was started with
    std::size_t runs = 3;
    std::size_t iterations = 1;
    std::size_t warmup_iterations = 1;
    std::string power_provider = "none";
    double sample_hz = 10.0;
    double baseline_seconds = 5.0;
    std::optional<double> psu_efficiency;
    bool legacy_external = false;
    WindowMode window_mode = WindowMode::kernel;
    double tail_s = 0.0;
    bool conforming = true;
    bool verified = false;

    bool operator==(const BundleConfig&) const = default;
};

struct StoredTrace {
    std::string file;  // trace_<k>.csv
    PowerTrace trace;

    bool operator==(const StoredTrace&) const = default;
};

struct ResultBundle {
    std::uint64_t manifest_hash = 0;
    std::string workload_id;
    std::string precision;
    DeviceDescriptor device;
    BundleConfig config;
    std::optional<BaselineEstimate> baseline;
    std::vector<RunRecord> runs;
    RunSummary aggregate;
    std::vector<StoredTrace> traces;
    bool valid = false;

    const StoredTrace* find_trace(const std::string& file) const;
    bool operator==(const ResultBundle&) const = default;
};

inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kIncompleteMarker = ".incomplete";

// Structural checks: at least one run, every trace reference resolves, every
// energy window lies inside its trace.
void validate_bundle(const ResultBundle& bundle);

// summary.json, run_<k>.json, trace_<k>.csv. A .incomplete marker exists
// while writing and is left behind on failure.
std::vector<std::filesystem::path> write_results(const ResultBundle& bundle, const std::filesystem::path& dir);

ResultBundle read_results(const std::filesystem::path& dir);

// trace CSV: header t_ns,watts, integer nanoseconds, shortest round-trip watts.
std::string format_trace_csv(const PowerTrace& trace);
std::vector<PowerSample> parse_trace_csv(const std::string& text, const std::string& origin);

}  // namespace ergmark
