#pragma once

#include "ergmark/power.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ergmark {

struct TimeWindow {
    std::int64_t start_ns = 0;
    std::int64_t end_ns = 0;

    std::int64_t length_ns() const noexcept { return end_ns - start_ns; }
    bool operator==(const TimeWindow&) const = default;
};

// Spacing above this many nominal sample periods is a gap and is left out of
// the integral.
constexpr double kGapPeriods = 5.0;

struct Integration {
    double joules = 0.0;
    std::int64_t window_ns = 0;   // requested window length
    std::int64_t covered_ns = 0;  // part of the window actually integrated
    TimeWindow integrated;        // requested window clipped to the trace span

    double coverage() const noexcept {
        return window_ns > 0 ? static_cast<double>(covered_ns) / static_cast<double>(window_ns) : 0.0;
    }
};

// Trapezoidal rule with linear interpolation at the window edges. Window parts
// outside the trace span or inside gaps count as uncovered. Throws when the
// window does not overlap the trace or is entirely uncovered.
Integration integrate_power(const PowerTrace& trace, TimeWindow window, double gap_periods = kGapPeriods);

struct BaselineSubtraction {
    PowerTrace trace;
    std::size_t clamp_count = 0;
};

// Negative net power is clamped to zero and counted.
BaselineSubtraction subtract_baseline(const PowerTrace& trace, double baseline_watts);
BaselineSubtraction subtract_baseline(const PowerTrace& trace, const BaselineEstimate& baseline);

enum class CorrectionKind { psu_efficiency, legacy_external };

const char* to_string(CorrectionKind kind);
CorrectionKind correction_kind_from_string(const std::string& text);

struct Correction {
    CorrectionKind kind = CorrectionKind::psu_efficiency;
    double factor = 1.0;

    bool operator==(const Correction&) const = default;
};

// Externally measured power is about 10 % above internal profiling.
constexpr double kLegacyExternalFactor = 0.90;
constexpr double kMinPsuEfficiency = 0.5;
constexpr double kMaxPsuEfficiency = 1.0;

// PSU efficiency first, then the legacy-external factor.
std::vector<Correction> build_corrections(std::optional<double> psu_efficiency, bool legacy_external);

struct CorrectedEnergy {
    double joules = 0.0;
    std::vector<Correction> ledger;
};

CorrectedEnergy apply_corrections(double joules, std::span<const Correction> chain);

constexpr double kMinCoverage = 0.95;

struct EnergyResult {
    double joules_raw = 0.0;
    double joules_net = 0.0;
    double joules_corrected = 0.0;
    std::vector<Correction> corrections;
    TimeWindow window;  // integrated window, inside the trace span
    double coverage = 1.0;
    std::size_t clamp_count = 0;

    bool degraded() const noexcept { return coverage < kMinCoverage; }
    bool operator==(const EnergyResult&) const = default;
};

// Integrate, subtract the baseline (when given), then apply the chain.
EnergyResult compute_energy(const PowerTrace& trace, TimeWindow window,
                            const std::optional<BaselineEstimate>& baseline,
                            std::span<const Correction> chain);

enum class Metric { time, energy };

const char* to_string(Metric metric);

constexpr double kValidityBand = 0.15;
constexpr std::size_t kMinRuns = 3;

struct ValidityReport {
    Metric metric = Metric::time;
    std::vector<double> values;
    double mean = 0.0;
    double max_rel_dev = 0.0;  // +inf when the mean is zero
    bool valid = false;
    std::string diagnostic;

    bool operator==(const ValidityReport&) const = default;
};

// Every value must lie within 15 % of the mean. Needs at least three values.
ValidityReport check_validity(std::span<const double> values, Metric metric);

struct MetricStats {
    double mean = 0.0;
    double stddev = 0.0;  // population
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 0;

    bool operator==(const MetricStats&) const = default;
};

MetricStats summarize(std::span<const double> values);

struct TrendPoint {
    double year = 0.0;
    double efficiency = 0.0;
};

// efficiency(t) = a * exp(r * (t - reference_year))
struct TrendFit {
    double a = 0.0;
    double log_a = 0.0;
    double r = 0.0;
    double two_year_factor = 1.0;
    double r_squared = 0.0;
    std::size_t n_points = 0;
    double reference_year = 0.0;
    double mean_year = 0.0;
};

// Least squares on (year - mean_year, ln efficiency).
TrendFit fit_trend(std::span<const TrendPoint> points, double reference_year = 0.0);

// Efficiency of a run in solutions per joule.
double efficiency_from_energy(double joules);

}  // namespace ergmark
