#pragma once

#include "ergmark/error.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ergmark {

enum class ProviderKind { energy_counter, external_trace, subprocess_bridge, synthetic };

const char* to_string(ProviderKind kind);
ProviderKind provider_kind_from_string(const std::string& text);

struct PowerSample {
    std::int64_t t_ns = 0;
    double watts = 0.0;

    bool operator==(const PowerSample&) const = default;
};

// Interval in which the provider could not be read.
struct TraceGap {
    std::int64_t start_ns = 0;
    std::int64_t end_ns = 0;
    std::string reason;

    bool operator==(const TraceGap&) const = default;
};

struct PowerTrace {
    std::vector<PowerSample> samples;
    ProviderKind provider = ProviderKind::synthetic;
    double nominal_rate_hz = 10.0;
    std::vector<TraceGap> gaps;
    bool reordered = false;

    bool degraded() const noexcept { return !gaps.empty(); }
    std::int64_t first_ns() const { return samples.front().t_ns; }
    std::int64_t last_ns() const { return samples.back().t_ns; }

    // Strictly increasing timestamps, finite non-negative watts.
    void validate() const;

    bool operator==(const PowerTrace&) const = default;
};

struct BaselineEstimate {
    double watts = 0.0;
    std::int64_t duration_ns = 0;
    std::size_t sample_count = 0;
    double dispersion = 0.0;  // population standard deviation, watts
    bool noisy = false;       // dispersion above 10 % of the mean

    bool operator==(const BaselineEstimate&) const = default;
};

// Phases the orchestrator announces to the provider. Only the synthetic
// provider reacts to them.
enum class BenchmarkPhase { idle, warmup, measure };

struct SyntheticConfig {
    double idle_watts = 20.0;
    double load_watts = 100.0;
    std::optional<double> warmup_watts;  // defaults to load_watts
    double noise_sigma = 0.0;
    double square_amplitude = 0.0;  // alternates +a, -a on successive samples
    std::uint64_t seed = 1;
    std::optional<double> fail_after_s;  // reads throw once this much time has passed
    // Overrides the phase levels when set.
    std::function<double(std::int64_t t_ns, BenchmarkPhase phase)> profile;
};

struct ProviderConfig {
    enum class Kind { none, counter, trace, bridge, synthetic };
    Kind kind = Kind::none;

    std::filesystem::path counter_path;
    std::optional<std::uint64_t> counter_max_range_uj;

    std::filesystem::path trace_file;
    std::optional<double> trace_voltage_v;
    double trace_offset_s = 0.0;

    std::string bridge_cmd;

    SyntheticConfig synthetic;
};

ProviderConfig::Kind provider_config_kind_from_string(const std::string& text);
const char* to_string(ProviderConfig::Kind kind);

// Live sampling session. start() returns once the trace has a sample at or
// before the current time; stop() keeps sampling until a sample at or after
// the stop request exists, then hands over the finished trace.
class PowerSession {
public:
    virtual ~PowerSession() = default;
    virtual void start() = 0;
    virtual PowerTrace stop() = 0;
};

class PowerProvider {
public:
    virtual ~PowerProvider() = default;
    virtual ProviderKind kind() const noexcept = 0;
    virtual std::unique_ptr<PowerSession> open_session(double rate_hz) = 0;
    virtual void notify_phase(BenchmarkPhase) {}
};

// Returns nullptr for Kind::none. Throws Error(provider) when unreachable.
std::unique_ptr<PowerProvider> make_provider(const ProviderConfig& config);

// rate_hz must lie in [1, 1000].
void check_sample_rate(double rate_hz);

// Convenience: make_provider(config)->open_session(rate_hz), started. The
// session keeps the provider alive.
std::unique_ptr<PowerSession> sample_session(const ProviderConfig& config, double rate_hz);

struct CounterReading {
    std::int64_t t_ns = 0;
    std::uint64_t energy_uj = 0;
};

// Average power between two readings, stamped at the interval midpoint. A
// decreasing counter is treated as one wrap when max_range_uj is set,
// otherwise the sample is dropped (nullopt).
std::optional<PowerSample> power_from_counter(const CounterReading& prev, const CounterReading& now,
                                              std::optional<std::uint64_t> max_range_uj);

std::uint64_t read_counter_uj(const std::filesystem::path& path);

// Reads the counter at `now_ns`, returns the power since `prev`, and advances
// prev to the new reading.
std::optional<PowerSample> read_energy_counter_power(const std::filesystem::path& path,
                                                     CounterReading& prev, std::int64_t now_ns,
                                                     std::optional<std::uint64_t> max_range_uj);

struct TraceImportOptions {
    std::optional<double> voltage_v;  // required for t_s,amps files
    double offset_s = 0.0;            // added to every timestamp
};

// CSV with header t_s,amps or t_s,watts. Rows are sorted (flagging the trace
// as reordered), duplicate timestamps averaged, amps converted with P = V I.
PowerTrace import_external_trace(const std::filesystem::path& path,
                                 const TraceImportOptions& options = {});

// Nominal rate estimated from the median sample spacing.
double estimate_rate_hz(const std::vector<PowerSample>& samples);

constexpr double kBaselineNoisyFraction = 0.10;
constexpr std::size_t kBaselineMinSamples = 10;
constexpr double kBaselineMinSeconds = 3.0;

BaselineEstimate baseline_from_trace(const PowerTrace& trace);

BaselineEstimate measure_baseline(PowerProvider& provider, double rate_hz, double duration_s,
                                  double min_duration_s = kBaselineMinSeconds);

}  // namespace ergmark
