#pragma once

#include "ergmark/backend.hpp"
#include "ergmark/energy.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ergmark {

struct RunKey {
    std::string device_id;
    std::string workload_id;
    std::string precision;

    bool operator==(const RunKey&) const = default;
};

struct RunRecord {
    std::size_t index = 0;
    RunKey key;
    TimingRecord timing;
    std::int64_t anchor_start_ns = 0;
    std::int64_t anchor_stop_ns = 0;
    std::optional<EnergyResult> energy;
    std::string energy_note;  // why energy is missing, if it is
    std::optional<std::string> trace_ref;
    std::uint64_t output_checksum = 0;
    bool conforming = true;

    double time_to_solution_s() const noexcept {
        return static_cast<double>(timing.time_to_solution_ns()) * 1e-9;
    }
    bool operator==(const RunRecord&) const = default;
};

struct RunSummary {
    MetricStats time_s;
    std::optional<MetricStats> energy_j;
    std::optional<ValidityReport> time_validity;
    std::optional<ValidityReport> energy_validity;
    std::size_t energy_runs = 0;     // runs contributing to energy_j
    std::size_t degraded_runs = 0;   // runs with energy below full coverage
    bool valid = false;

    bool operator==(const RunSummary&) const = default;
};

// Time and energy are aggregated independently. Runs whose energy is degraded
// are left out of the energy statistics. Validity is only checked when
// require_min_runs is set; otherwise the summary is never valid.
RunSummary aggregate_runs(const std::vector<RunRecord>& runs, bool require_min_runs = true);

}  // namespace ergmark
