#include "ergmark/power.hpp"

#include "ergmark/backend.hpp"
#include "ergmark/log.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <csignal>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

namespace ergmark {

const char* to_string(ProviderKind kind) {
    switch (kind) {
        case ProviderKind::energy_counter: return "energy_counter";
        case ProviderKind::external_trace: return "external_trace";
        case ProviderKind::subprocess_bridge: return "subprocess_bridge";
        case ProviderKind::synthetic: return "synthetic";
    }
    return "synthetic";
}

ProviderKind provider_kind_from_string(const std::string& text) {
    if (text == "energy_counter") return ProviderKind::energy_counter;
    if (text == "external_trace") return ProviderKind::external_trace;
    if (text == "subprocess_bridge") return ProviderKind::subprocess_bridge;
    if (text == "synthetic") return ProviderKind::synthetic;
    fail(ErrorKind::validation, "unknown power provider '" + text + "'");
}

ProviderConfig::Kind provider_config_kind_from_string(const std::string& text) {
    using K = ProviderConfig::Kind;
    if (text == "none") return K::none;
    if (text == "counter") return K::counter;
    if (text == "trace") return K::trace;
    if (text == "bridge") return K::bridge;
    if (text == "synthetic") return K::synthetic;
    fail(ErrorKind::usage, "unknown power provider '" + text +
                               "' (expected counter, trace, bridge, synthetic or none)");
}

const char* to_string(ProviderConfig::Kind kind) {
    using K = ProviderConfig::Kind;
    switch (kind) {
        case K::none: return "none";
        case K::counter: return "counter";
        case K::trace: return "trace";
        case K::bridge: return "bridge";
        case K::synthetic: return "synthetic";
    }
    return "none";
}

void PowerTrace::validate() const {
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (!std::isfinite(s.watts) || s.watts < 0.0) {
            fail(ErrorKind::validation, "power sample " + std::to_string(i) + " has invalid watts");
        }
        if (i > 0 && s.t_ns <= samples[i - 1].t_ns) {
            fail(ErrorKind::validation, "power trace timestamps not strictly increasing at sample " +
                                            std::to_string(i));
        }
    }
    if (!(nominal_rate_hz > 0.0) || !std::isfinite(nominal_rate_hz)) {
        fail(ErrorKind::validation, "power trace nominal rate must be positive");
    }
}

void check_sample_rate(double rate_hz) {
    if (!(rate_hz >= 1.0 && rate_hz <= 1000.0)) {
        fail(ErrorKind::usage, "sample rate must lie in [1, 1000] Hz");
    }
}

double estimate_rate_hz(const std::vector<PowerSample>& samples) {
    if (samples.size() < 2) return 10.0;
    std::vector<std::int64_t> dts;
    dts.reserve(samples.size() - 1);
    for (std::size_t i = 1; i < samples.size(); ++i) dts.push_back(samples[i].t_ns - samples[i - 1].t_ns);
    auto mid = dts.begin() + static_cast<std::ptrdiff_t>(dts.size() / 2);
    std::nth_element(dts.begin(), mid, dts.end());
    return *mid > 0 ? 1e9 / static_cast<double>(*mid) : 10.0;
}

// ---------------------------------------------------------------------------
// Energy counter

std::optional<PowerSample> power_from_counter(const CounterReading& prev, const CounterReading& now,
                                              std::optional<std::uint64_t> max_range_uj) {
    const std::int64_t dt = now.t_ns - prev.t_ns;
    if (dt <= 0) return std::nullopt;
    std::uint64_t delta = 0;
    if (now.energy_uj >= prev.energy_uj) {
        delta = now.energy_uj - prev.energy_uj;
    } else if (max_range_uj && prev.energy_uj <= *max_range_uj) {
        delta = (*max_range_uj - prev.energy_uj) + now.energy_uj;
    } else {
        return std::nullopt;
    }
    PowerSample s;
    s.t_ns = prev.t_ns + dt / 2;
    s.watts = static_cast<double>(delta) * 1e-6 / (static_cast<double>(dt) * 1e-9);
    return s;
}

std::uint64_t read_counter_uj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::provider, "cannot open energy counter " + path.string());
    std::string text;
    in >> text;
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        fail(ErrorKind::provider, "energy counter " + path.string() + " holds '" + text +
                                      "', expected an unsigned integer");
    }
    return value;
}

std::optional<PowerSample> read_energy_counter_power(const std::filesystem::path& path,
                                                     CounterReading& prev, std::int64_t now_ns,
                                                     std::optional<std::uint64_t> max_range_uj) {
    const CounterReading now{now_ns, read_counter_uj(path)};
    auto sample = power_from_counter(prev, now, max_range_uj);
    prev = now;
    return sample;
}

// ---------------------------------------------------------------------------
// Polled sessions

namespace {

class PollSource {
public:
    virtual ~PollSource() = default;
    virtual void reset() {}
    // Counters report the average since the previous read, so an early extra
    // read yields a short, quantization-dominated interval.
    virtual bool poll_on_stop() const { return true; }
    // nullopt: nothing to report this tick. Throws on read failure.
    virtual std::optional<PowerSample> poll(std::int64_t now_ns) = 0;
};

class CounterSource final : public PollSource {
public:
    CounterSource(std::filesystem::path path, std::optional<std::uint64_t> max_range)
        : path_(std::move(path)), max_range_(max_range) {}

    void reset() override { prev_.reset(); }
    bool poll_on_stop() const override { return false; }

    std::optional<PowerSample> poll(std::int64_t now_ns) override {
        if (!prev_) {
            prev_ = CounterReading{now_ns, read_counter_uj(path_)};
            return std::nullopt;
        }
        auto s = read_energy_counter_power(path_, *prev_, now_ns, max_range_);
        if (!s) warn("energy counter went backwards without a configured wrap range; sample dropped");
        return s;
    }

private:
    std::filesystem::path path_;
    std::optional<std::uint64_t> max_range_;
    std::optional<CounterReading> prev_;
};

class SyntheticSource final : public PollSource {
public:
    explicit SyntheticSource(SyntheticConfig cfg)
        : cfg_(std::move(cfg)), rng_(cfg_.seed), created_ns_(monotonic_now_ns()) {}

    void set_phase(BenchmarkPhase phase) { phase_.store(phase); }

    std::optional<PowerSample> poll(std::int64_t now_ns) override {
        if (cfg_.fail_after_s &&
            static_cast<double>(now_ns - created_ns_) * 1e-9 >= *cfg_.fail_after_s) {
            fail(ErrorKind::provider, "synthetic provider failure (scripted)");
        }
        const BenchmarkPhase phase = phase_.load();
        double watts = 0.0;
        if (cfg_.profile) {
            watts = cfg_.profile(now_ns, phase);
        } else {
            switch (phase) {
                case BenchmarkPhase::idle: watts = cfg_.idle_watts; break;
                case BenchmarkPhase::warmup: watts = cfg_.warmup_watts.value_or(cfg_.load_watts); break;
                case BenchmarkPhase::measure: watts = cfg_.load_watts; break;
            }
        }
        if (cfg_.square_amplitude != 0.0) {
            watts += (flip_ ? -cfg_.square_amplitude : cfg_.square_amplitude);
            flip_ = !flip_;
        }
        if (cfg_.noise_sigma > 0.0) watts += noise_(rng_) * cfg_.noise_sigma;
        return PowerSample{now_ns, std::max(watts, 0.0)};
    }

private:
    SyntheticConfig cfg_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> noise_{0.0, 1.0};
    std::atomic<BenchmarkPhase> phase_{BenchmarkPhase::idle};
    std::int64_t created_ns_;
    bool flip_ = false;
};

// Shared by the polled and bridge sessions: owns the buffer that only the
// sampling thread appends to, plus the start/stop handshake.
class TraceBuffer {
public:
    void add_sample(PowerSample s) {
        std::lock_guard lock(mutex_);
        if (!samples_.empty() && s.t_ns <= samples_.back().t_ns) return;
        if (open_gap_) {
            open_gap_->end_ns = s.t_ns;
            gaps_.push_back(*open_gap_);
            open_gap_.reset();
        }
        samples_.push_back(s);
        cv_.notify_all();
    }

    void add_failure(std::int64_t now_ns, const std::string& reason) {
        std::lock_guard lock(mutex_);
        if (!open_gap_) {
            const std::int64_t from = samples_.empty() ? now_ns : samples_.back().t_ns;
            open_gap_ = TraceGap{from, now_ns, reason};
            warn("power provider read failed: " + reason);
        }
        open_gap_->end_ns = now_ns;
    }

    bool wait_first(std::chrono::nanoseconds timeout) {
        std::unique_lock lock(mutex_);
        return cv_.wait_for(lock, timeout, [&] { return !samples_.empty() || finished_; }) &&
               !samples_.empty();
    }

    bool wait_reaching(std::int64_t t_ns, std::chrono::nanoseconds timeout) {
        std::unique_lock lock(mutex_);
        return cv_.wait_for(lock, timeout, [&] {
            return finished_ || (!samples_.empty() && samples_.back().t_ns >= t_ns);
        }) && !samples_.empty() && samples_.back().t_ns >= t_ns;
    }

    bool reached(std::int64_t t_ns) {
        std::lock_guard lock(mutex_);
        return !samples_.empty() && samples_.back().t_ns >= t_ns;
    }

    void finish(std::int64_t now_ns) {
        std::lock_guard lock(mutex_);
        if (open_gap_) {
            open_gap_->end_ns = std::max(open_gap_->end_ns, now_ns);
            gaps_.push_back(*open_gap_);
            open_gap_.reset();
        }
        finished_ = true;
        cv_.notify_all();
    }

    PowerTrace take(ProviderKind kind, double rate_hz) {
        std::lock_guard lock(mutex_);
        PowerTrace t;
        t.samples = std::move(samples_);
        t.gaps = std::move(gaps_);
        t.provider = kind;
        t.nominal_rate_hz = rate_hz;
        return t;
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::vector<PowerSample> samples_;
    std::vector<TraceGap> gaps_;
    std::optional<TraceGap> open_gap_;
    bool finished_ = false;
};

std::chrono::nanoseconds settle_timeout(double rate_hz) {
    const auto periods = std::chrono::nanoseconds(static_cast<std::int64_t>(5e9 / rate_hz));
    return std::max<std::chrono::nanoseconds>(periods, std::chrono::seconds(1));
}

class PolledSession final : public PowerSession {
public:
    PolledSession(std::shared_ptr<PollSource> source, ProviderKind kind, double rate_hz)
        : source_(std::move(source)), kind_(kind), rate_hz_(rate_hz) {
        check_sample_rate(rate_hz);
    }

    ~PolledSession() override { halt(); }

    void start() override {
        if (thread_.joinable()) fail(ErrorKind::usage, "power session already started");
        source_->reset();
        thread_ = std::thread([this] { loop(); });
        // Counter sources need one full period before the first sample.
        if (!buffer_.wait_first(settle_timeout(rate_hz_) + period())) {
            halt();
            fail(ErrorKind::provider, "power provider produced no sample after session start");
        }
    }

    PowerTrace stop() override {
        if (!thread_.joinable()) fail(ErrorKind::usage, "power session not running");
        request_stop(monotonic_now_ns());
        buffer_.wait_reaching(stop_request_ns_.load(), settle_timeout(rate_hz_));
        halt();
        return buffer_.take(kind_, rate_hz_);
    }

private:
    std::chrono::nanoseconds period() const {
        return std::chrono::nanoseconds(static_cast<std::int64_t>(1e9 / rate_hz_));
    }

    void request_stop(std::int64_t t_ns) {
        {
            std::lock_guard lock(mutex_);
            stop_request_ns_.store(t_ns);
        }
        wake_.notify_all();
    }

    void halt() {
        {
            std::lock_guard lock(mutex_);
            halt_ = true;
        }
        wake_.notify_all();
        if (thread_.joinable()) thread_.join();
    }

    void loop() {
        using clock = std::chrono::steady_clock;
        auto next = clock::now();
        bool stop_seen = false;
        for (;;) {
            const std::int64_t now = monotonic_now_ns();
            try {
                if (auto s = source_->poll(now)) buffer_.add_sample(*s);
            } catch (const std::exception& e) {
                buffer_.add_failure(now, e.what());
            }
            next += period();
            std::unique_lock lock(mutex_);
            if (halt_) break;
            const std::int64_t req = stop_request_ns_.load();
            if (req != kNoStop && buffer_.reached(req)) break;
            if (req != kNoStop && !stop_seen) {
                // First tick after a stop request happens immediately.
                stop_seen = true;
                if (source_->poll_on_stop()) continue;
            }
            const auto now_tp = clock::now();
            if (next < now_tp) next = now_tp;
            wake_.wait_until(lock, next, [&] {
                return halt_ ||
                       (!stop_seen && source_->poll_on_stop() && stop_request_ns_.load() != kNoStop);
            });
            if (halt_) break;
        }
        buffer_.finish(monotonic_now_ns());
    }

    static constexpr std::int64_t kNoStop = INT64_MIN;

    std::shared_ptr<PollSource> source_;
    ProviderKind kind_;
    double rate_hz_;
    TraceBuffer buffer_;
    std::thread thread_;
    std::mutex mutex_;
    std::condition_variable wake_;
    bool halt_ = false;
    std::atomic<std::int64_t> stop_request_ns_{kNoStop};
};

class PolledProvider final : public PowerProvider {
public:
    PolledProvider(std::shared_ptr<PollSource> source, ProviderKind kind,
                   std::shared_ptr<SyntheticSource> synthetic = nullptr)
        : source_(std::move(source)), kind_(kind), synthetic_(std::move(synthetic)) {}

    ProviderKind kind() const noexcept override { return kind_; }

    std::unique_ptr<PowerSession> open_session(double rate_hz) override {
        return std::make_unique<PolledSession>(source_, kind_, rate_hz);
    }

    void notify_phase(BenchmarkPhase phase) override {
        if (synthetic_) synthetic_->set_phase(phase);
    }

private:
    std::shared_ptr<PollSource> source_;
    ProviderKind kind_;
    std::shared_ptr<SyntheticSource> synthetic_;
};

// ---------------------------------------------------------------------------
// External trace: the log is written by an outside instrument; a session only
// records its span and crops the imported trace to it.

PowerTrace crop_to_span(const PowerTrace& full, std::int64_t from_ns, std::int64_t to_ns) {
    PowerTrace out = full;
    out.samples.clear();
    const auto& s = full.samples;
    auto lo = std::upper_bound(s.begin(), s.end(), from_ns,
                               [](std::int64_t t, const PowerSample& p) { return t < p.t_ns; });
    if (lo != s.begin()) --lo;
    auto hi = std::lower_bound(s.begin(), s.end(), to_ns,
                               [](const PowerSample& p, std::int64_t t) { return p.t_ns < t; });
    if (hi != s.end()) ++hi;
    out.samples.assign(lo, hi);
    return out;
}

class ExternalTraceSession final : public PowerSession {
public:
    ExternalTraceSession(std::filesystem::path file, TraceImportOptions options)
        : file_(std::move(file)), options_(options) {}

    void start() override { start_ns_ = monotonic_now_ns(); }

    PowerTrace stop() override {
        const auto stop_ns = monotonic_now_ns();
        auto trace = crop_to_span(import_external_trace(file_, options_), start_ns_, stop_ns);
        if (trace.samples.size() < 2) {
            fail(ErrorKind::provider, "external trace " + file_.string() +
                                          " has fewer than two samples around the session");
        }
        return trace;
    }

private:
    std::filesystem::path file_;
    TraceImportOptions options_;
    std::int64_t start_ns_ = 0;
};

class ExternalTraceProvider final : public PowerProvider {
public:
    ExternalTraceProvider(std::filesystem::path file, TraceImportOptions options)
        : file_(std::move(file)), options_(options) {}

    ProviderKind kind() const noexcept override { return ProviderKind::external_trace; }

    std::unique_ptr<PowerSession> open_session(double rate_hz) override {
        check_sample_rate(rate_hz);
        return std::make_unique<ExternalTraceSession>(file_, options_);
    }

private:
    std::filesystem::path file_;
    TraceImportOptions options_;
};

// ---------------------------------------------------------------------------
// Subprocess bridge: runs `/bin/sh -c cmd` and reads "t_ns,watts" lines from
// its stdout. Timestamps must be on the host monotonic clock (e.g. Python's
// time.monotonic_ns()); offset_s shifts them otherwise.

std::optional<PowerSample> parse_bridge_line(const std::string& line, std::int64_t offset_ns) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) return std::nullopt;
    std::int64_t t = 0;
    double w = 0.0;
    const char* b = line.data();
    auto r1 = std::from_chars(b, b + comma, t);
    if (r1.ec != std::errc{} || r1.ptr != b + comma) return std::nullopt;
    std::size_t end = line.size();
    while (end > comma + 1 && std::isspace(static_cast<unsigned char>(line[end - 1]))) --end;
    auto r2 = std::from_chars(b + comma + 1, b + end, w);
    if (r2.ec != std::errc{} || r2.ptr != b + end || !std::isfinite(w) || w < 0.0) return std::nullopt;
    return PowerSample{t + offset_ns, w};
}

class BridgeSession final : public PowerSession {
public:
    BridgeSession(std::string cmd, double rate_hz, std::int64_t offset_ns)
        : cmd_(std::move(cmd)), rate_hz_(rate_hz), offset_ns_(offset_ns) {}

    ~BridgeSession() override { shutdown(); }

    void start() override {
        int fds[2];
        if (pipe(fds) != 0) fail(ErrorKind::provider, "bridge: pipe() failed");
        const pid_t pid = fork();
        if (pid < 0) {
            close(fds[0]);
            close(fds[1]);
            fail(ErrorKind::provider, "bridge: fork() failed");
        }
        if (pid == 0) {
            setpgid(0, 0);
            dup2(fds[1], STDOUT_FILENO);
            close(fds[0]);
            close(fds[1]);
            execl("/bin/sh", "sh", "-c", cmd_.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        close(fds[1]);
        pid_ = pid;
        read_fd_ = fds[0];
        reader_ = std::thread([this] { read_loop(); });
        if (!buffer_.wait_first(settle_timeout(rate_hz_) + std::chrono::seconds(1))) {
            shutdown();
            fail(ErrorKind::provider, "bridge command '" + cmd_ + "' produced no sample");
        }
    }

    PowerTrace stop() override {
        const auto req = monotonic_now_ns();
        buffer_.wait_reaching(req, settle_timeout(rate_hz_));
        shutdown();
        auto trace = buffer_.take(ProviderKind::subprocess_bridge, rate_hz_);
        trace.nominal_rate_hz = estimate_rate_hz(trace.samples);
        return trace;
    }

private:
    void read_loop() {
        FILE* in = fdopen(read_fd_, "r");
        if (!in) {
            buffer_.finish(monotonic_now_ns());
            return;
        }
        char* line = nullptr;
        std::size_t cap = 0;
        ssize_t n = 0;
        while ((n = getline(&line, &cap, in)) > 0) {
            std::string text(line, static_cast<std::size_t>(n));
            if (auto s = parse_bridge_line(text, offset_ns_)) {
                buffer_.add_sample(*s);
            } else if (text.find("t_ns") == std::string::npos) {
                buffer_.add_failure(monotonic_now_ns(), "unparseable bridge line");
            }
        }
        free(line);
        fclose(in);
        read_fd_ = -1;
        if (!stopping_.load()) buffer_.add_failure(monotonic_now_ns(), "bridge command exited");
        buffer_.finish(monotonic_now_ns());
    }

    void shutdown() {
        stopping_.store(true);
        if (pid_ > 0) {
            kill(-pid_, SIGTERM);
            int status = 0;
            waitpid(pid_, &status, 0);
            pid_ = -1;
        }
        if (reader_.joinable()) reader_.join();
    }

    std::string cmd_;
    double rate_hz_;
    std::int64_t offset_ns_;
    TraceBuffer buffer_;
    std::thread reader_;
    pid_t pid_ = -1;
    int read_fd_ = -1;
    std::atomic<bool> stopping_{false};
};

class BridgeProvider final : public PowerProvider {
public:
    BridgeProvider(std::string cmd, std::int64_t offset_ns)
        : cmd_(std::move(cmd)), offset_ns_(offset_ns) {}

    ProviderKind kind() const noexcept override { return ProviderKind::subprocess_bridge; }

    std::unique_ptr<PowerSession> open_session(double rate_hz) override {
        check_sample_rate(rate_hz);
        return std::make_unique<BridgeSession>(cmd_, rate_hz, offset_ns_);
    }

private:
    std::string cmd_;
    std::int64_t offset_ns_;
};

class OwningSession final : public PowerSession {
public:
    OwningSession(std::unique_ptr<PowerProvider> provider, std::unique_ptr<PowerSession> session)
        : provider_(std::move(provider)), session_(std::move(session)) {}

    void start() override { session_->start(); }
    PowerTrace stop() override { return session_->stop(); }

private:
    std::unique_ptr<PowerProvider> provider_;
    std::unique_ptr<PowerSession> session_;
};

}  // namespace

std::unique_ptr<PowerProvider> make_provider(const ProviderConfig& config) {
    using K = ProviderConfig::Kind;
    switch (config.kind) {
        case K::none:
            return nullptr;
        case K::counter: {
            read_counter_uj(config.counter_path);  // reachability
            auto src = std::make_shared<CounterSource>(config.counter_path, config.counter_max_range_uj);
            return std::make_unique<PolledProvider>(src, ProviderKind::energy_counter);
        }
        case K::synthetic: {
            auto src = std::make_shared<SyntheticSource>(config.synthetic);
            return std::make_unique<PolledProvider>(src, ProviderKind::synthetic, src);
        }
        case K::trace: {
            if (!std::filesystem::exists(config.trace_file)) {
                fail(ErrorKind::provider, "external trace file " + config.trace_file.string() + " not found");
            }
            TraceImportOptions opts;
            opts.voltage_v = config.trace_voltage_v;
            opts.offset_s = config.trace_offset_s;
            return std::make_unique<ExternalTraceProvider>(config.trace_file, opts);
        }
        case K::bridge: {
            if (config.bridge_cmd.empty()) fail(ErrorKind::usage, "bridge provider needs a command");
            return std::make_unique<BridgeProvider>(
                config.bridge_cmd, static_cast<std::int64_t>(std::llround(config.trace_offset_s * 1e9)));
        }
    }
    fail(ErrorKind::usage, "unknown provider kind");
}

std::unique_ptr<PowerSession> sample_session(const ProviderConfig& config, double rate_hz) {
    auto provider = make_provider(config);
    if (!provider) fail(ErrorKind::usage, "provider 'none' cannot sample");
    auto inner = provider->open_session(rate_hz);
    auto session = std::make_unique<OwningSession>(std::move(provider), std::move(inner));
    session->start();
    return session;
}

// ---------------------------------------------------------------------------
// External trace import

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& text, double& out) {
    const std::string t = trim(text);
    if (t.empty()) return false;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    return ec == std::errc{} && ptr == t.data() + t.size() && std::isfinite(out);
}

}  // namespace

PowerTrace import_external_trace(const std::filesystem::path& path, const TraceImportOptions& options) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open external trace " + path.string());

    std::string line;
    std::size_t line_no = 0;
    std::string header;
    while (header.empty() && std::getline(in, line)) {
        ++line_no;
        header = trim(line);
    }
    if (header.empty()) fail(ErrorKind::validation, "external trace " + path.string() + " is empty");
    std::string lowered = header;
    lowered.erase(std::remove_if(lowered.begin(), lowered.end(), [](char c) { return c == ' '; }),
                  lowered.end());
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    bool amps = false;
    if (lowered == "t_s,amps") {
        amps = true;
        if (!options.voltage_v) {
            fail(ErrorKind::usage, "external trace " + path.string() +
                                       " logs current; a supply voltage is required");
        }
        if (!(*options.voltage_v > 0.0)) fail(ErrorKind::usage, "supply voltage must be positive");
    } else if (lowered != "t_s,watts") {
        fail(ErrorKind::validation, "external trace " + path.string() + ": header must be t_s,amps or t_s,watts, got '" +
                                        header + "'");
    }

    struct Row {
        std::int64_t t_ns;
        double watts;
    };
    std::vector<Row> rows;
    std::vector<std::string> bad;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto comma = line.find(',');
        double t = 0.0;
        double v = 0.0;
        if (comma == std::string::npos || !parse_double(line.substr(0, comma), t) ||
            !parse_double(line.substr(comma + 1), v) || v < 0.0) {
            bad.push_back(std::to_string(line_no));
            continue;
        }
        const double watts = amps ? v * *options.voltage_v : v;
        rows.push_back({static_cast<std::int64_t>(std::llround((t + options.offset_s) * 1e9)), watts});
    }
    if (!bad.empty()) {
        std::string list;
        for (std::size_t i = 0; i < bad.size() && i < 20; ++i) list += (i ? ", " : "") + bad[i];
        if (bad.size() > 20) list += ", ...";
        fail(ErrorKind::validation, "external trace " + path.string() + ": non-numeric rows at line(s) " + list);
    }
    if (rows.empty()) fail(ErrorKind::validation, "external trace " + path.string() + " has no data rows");

    PowerTrace trace;
    trace.provider = ProviderKind::external_trace;
    const bool sorted = std::is_sorted(rows.begin(), rows.end(),
                                       [](const Row& a, const Row& b) { return a.t_ns < b.t_ns; });
    if (!sorted) {
        std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t_ns < b.t_ns; });
        trace.reordered = true;
        warn("external trace " + path.string() + " was not time-ordered; rows sorted");
    }
    for (std::size_t i = 0; i < rows.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < rows.size() && rows[j].t_ns == rows[i].t_ns) sum += rows[j++].watts;
        trace.samples.push_back({rows[i].t_ns, sum / static_cast<double>(j - i)});
        i = j;
    }
    trace.nominal_rate_hz = estimate_rate_hz(trace.samples);
    return trace;
}

// ---------------------------------------------------------------------------
// Baseline

BaselineEstimate baseline_from_trace(const PowerTrace& trace) {
    if (trace.samples.size() < kBaselineMinSamples) {
        fail(ErrorKind::provider, "insufficient baseline data: " + std::to_string(trace.samples.size()) +
                                      " samples, need at least " + std::to_string(kBaselineMinSamples));
    }
    BaselineEstimate b;
    b.sample_count = trace.samples.size();
    double sum = 0.0;
    for (const auto& s : trace.samples) sum += s.watts;
    b.watts = sum / static_cast<double>(b.sample_count);
    double sq = 0.0;
    for (const auto& s : trace.samples) sq += (s.watts - b.watts) * (s.watts - b.watts);
    b.dispersion = std::sqrt(sq / static_cast<double>(b.sample_count));
    b.duration_ns = trace.last_ns() - trace.first_ns();
    b.noisy = b.dispersion > kBaselineNoisyFraction * std::abs(b.watts);
    if (b.noisy) {
        std::ostringstream msg;
        msg << "idle baseline dispersion " << b.dispersion << " W exceeds 10% of mean " << b.watts
            << " W; the system may not be idle";
        warn(msg.str());
    }
    return b;
}

BaselineEstimate measure_baseline(PowerProvider& provider, double rate_hz, double duration_s,
                                  double min_duration_s) {
    check_sample_rate(rate_hz);
    if (!(duration_s >= min_duration_s)) {
        std::ostringstream msg;
        msg << "baseline duration " << duration_s << " s is below the minimum of " << min_duration_s << " s";
        fail(ErrorKind::usage, msg.str());
    }
    provider.notify_phase(BenchmarkPhase::idle);
    auto session = provider.open_session(rate_hz);
    session->start();
    std::this_thread::sleep_for(std::chrono::nanoseconds(static_cast<std::int64_t>(duration_s * 1e9)));
    return baseline_from_trace(session->stop());
}

}  // namespace ergmark
