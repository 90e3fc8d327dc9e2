#include "ergmark/orchestrator.hpp"

#include "ergmark/aggregate.hpp"
#include "ergmark/log.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace ergmark {

namespace {

std::string describe(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

std::int64_t seconds_to_ns(double s) { return static_cast<std::int64_t>(std::llround(s * 1e9)); }

void spin_until(std::int64_t deadline_ns) {
    while (monotonic_now_ns() < deadline_ns) {
    }
}

std::string provider_label(const ProviderConfig& p) { return to_string(p.kind); }

std::optional<EnergyResult> energy_for(const PowerTrace& trace, const TimingRecord& timing,
                                       std::int64_t anchor_start, std::int64_t anchor_stop,
                                       const BundleConfig& cfg, const std::optional<BaselineEstimate>& baseline,
                                       std::string& note) {
    if (trace.samples.empty()) {
        note = "power trace is empty";
        return std::nullopt;
    }
    const auto aligned = align_trace_to_window(trace, timing, anchor_start, anchor_stop, cfg.window_mode, cfg.tail_s);
    const auto chain = build_corrections(cfg.psu_efficiency, cfg.legacy_external);
    try {
        return compute_energy(trace, aligned.window, baseline, chain);
    } catch (const Error& e) {
        note = e.what();
        return std::nullopt;
    }
}

double rel_diff(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace

void validate_config(const RunConfig& cfg) {
    if (cfg.workload.empty()) fail(ErrorKind::usage, "no workload given");
    if (cfg.runs == 0) fail(ErrorKind::usage, "runs must be at least 1");
    if (cfg.runs < kMinRuns && !cfg.allow_fewer_runs) {
        fail(ErrorKind::usage, "runs must be at least 3 (use --allow-fewer-runs for non-conforming results)");
    }
    if (cfg.iterations && *cfg.iterations == 0) fail(ErrorKind::usage, "iterations must be at least 1");
    if (cfg.workers && *cfg.workers == 0) fail(ErrorKind::usage, "workers must be at least 1");
    if (cfg.provider.kind != ProviderConfig::Kind::none) {
        check_sample_rate(cfg.sample_hz);
        if (cfg.baseline_seconds != 0.0 && !(cfg.baseline_seconds >= cfg.baseline_min_seconds)) {
            fail(ErrorKind::usage, "baseline duration " + describe(cfg.baseline_seconds) +
                                       " s is below the minimum of " + describe(cfg.baseline_min_seconds) +
                                       " s (0 skips the baseline)");
        }
    }
    if (cfg.psu_efficiency) build_corrections(cfg.psu_efficiency, false);
    if (!(cfg.tail_s >= 0.0) || !std::isfinite(cfg.tail_s)) fail(ErrorKind::usage, "tail must be a non-negative number of seconds");
    if (cfg.tail_s > 0.0 && cfg.window == WindowMode::kernel) {
        fail(ErrorKind::usage, "a tail needs --window extended");
    }
    for (const auto& [run, fraction] : cfg.slowdown) {
        if (run == 0 || run > cfg.runs) fail(ErrorKind::usage, "slowdown targets run " + std::to_string(run) + ", which does not exist");
        if (!(fraction >= 0.0) || !std::isfinite(fraction)) fail(ErrorKind::usage, "slowdown fraction must be non-negative");
    }
}

Workload load_workload(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (fs::exists(cfg.workload, ec)) return read_workload(cfg.workload);
    WorkloadId id{};
    try {
        id = workload_id_from_string(cfg.workload);
    } catch (const Error&) {
        fail(ErrorKind::io, "workload '" + cfg.workload + "' is neither a container path nor a workload id");
    }
    return materialize(generate_workload({id, cfg.scale, cfg.seed, cfg.precision}));
}

AlignedWindow align_trace_to_window(const PowerTrace& trace, const TimingRecord& timing,
                                    std::int64_t anchor_start_ns, std::int64_t anchor_stop_ns,
                                    WindowMode mode, double tail_s) {
    if (anchor_stop_ns < anchor_start_ns) fail(ErrorKind::usage, "stop anchor precedes start anchor");
    if (anchor_stop_ns - anchor_start_ns < timing.time_to_solution_ns()) {
        fail(ErrorKind::usage, "anchors span less time than the timed kernels");
    }
    if (!(tail_s >= 0.0)) fail(ErrorKind::usage, "tail must be non-negative");
    AlignedWindow out;
    out.window = {anchor_start_ns, anchor_stop_ns};
    if (mode == WindowMode::extended) out.window.end_ns += seconds_to_ns(tail_s);

    const auto length = out.window.length_ns();
    if (trace.samples.empty()) {
        out.span_coverage = 0.0;
    } else if (length > 0) {
        const auto lo = std::max(out.window.start_ns, trace.first_ns());
        const auto hi = std::min(out.window.end_ns, trace.last_ns());
        out.span_coverage = hi > lo ? static_cast<double>(hi - lo) / static_cast<double>(length) : 0.0;
    }
    return out;
}

RunOutcome run_benchmark(const RunConfig& cfg) {
    validate_config(cfg);

    DeviceOptions dev_opts;
    dev_opts.worker_count = cfg.workers;
    const auto devices = enumerate_devices(dev_opts);
    const DeviceDescriptor device = find_device(devices, cfg.device);

    auto provider = make_provider(cfg.provider);

    // Inputs are loaded once and reused by every run.
    const Workload workload = load_workload(cfg);
    if (workload.manifest.precision == Precision::f64 && !device.supports_f64) {
        fail(ErrorKind::device, "device " + device.id + " does not support f64");
    }
    auto executor = open_device(device);
    auto instance = instantiate(workload);

    ResultBundle bundle;
    bundle.manifest_hash = workload.manifest_hash;
    bundle.workload_id = to_string(workload.manifest.workload_id);
    bundle.precision = to_string(workload.manifest.precision);
    bundle.device = device;

    BundleConfig& bc = bundle.config;
    bc.workload = cfg.workload;
    bc.runs = cfg.runs;
    bc.iterations = cfg.iterations.value_or(workload.manifest.iterations);
    bc.warmup_iterations = cfg.warmup.value_or(cfg.scale == Scale::paper ? 0 : 1);
    bc.power_provider = provider_label(cfg.provider);
    bc.sample_hz = cfg.sample_hz;
    bc.baseline_seconds = provider ? cfg.baseline_seconds : 0.0;
    bc.psu_efficiency = cfg.psu_efficiency;
    bc.legacy_external = cfg.legacy_external;
    bc.window_mode = cfg.window;
    bc.tail_s = cfg.tail_s;
    bc.conforming = cfg.runs >= kMinRuns;
    bc.verified = cfg.verify;

    if (provider && cfg.baseline_seconds > 0.0) {
        try {
            bundle.baseline = measure_baseline(*provider, cfg.sample_hz, cfg.baseline_seconds, cfg.baseline_min_seconds);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::usage) throw;
            warn(std::string("baseline unavailable, energies are not baseline-subtracted: ") + e.what());
        }
    }

    const RunKey key{device.id, bundle.workload_id, bundle.precision};
    for (std::size_t k = 1; k <= cfg.runs; ++k) {
        RunRecord rec;
        rec.index = k;
        rec.key = key;
        rec.conforming = bc.conforming;

        if (provider) provider->notify_phase(BenchmarkPhase::warmup);
        for (std::size_t w = 0; w < bc.warmup_iterations; ++w) instance->run_iteration(*executor);

        std::unique_ptr<PowerSession> session;
        if (provider) {
            provider->notify_phase(BenchmarkPhase::measure);
            try {
                session = provider->open_session(cfg.sample_hz);
                session->start();
            } catch (const Error& e) {
                session.reset();
                rec.energy_note = std::string("sampling did not start: ") + e.what();
                warn("run " + std::to_string(k) + ": " + rec.energy_note);
            }
        } else {
            rec.energy_note = "no power provider";
        }

        const auto found = cfg.slowdown.find(k);
        const double slowdown = found == cfg.slowdown.end() ? 0.0 : found->second;
        rec.anchor_start_ns = monotonic_now_ns();
        rec.timing = time_iterations(bc.iterations, [&](std::size_t) {
            const auto t0 = monotonic_now_ns();
            instance->run_iteration(*executor);
            if (slowdown > 0.0) {
                const auto spent = monotonic_now_ns() - t0;
                spin_until(t0 + spent + static_cast<std::int64_t>(static_cast<double>(spent) * slowdown));
            }
        });
        rec.anchor_stop_ns = monotonic_now_ns();

        if (session) {
            if (cfg.window == WindowMode::extended && cfg.tail_s > 0.0) {
                std::this_thread::sleep_until(std::chrono::steady_clock::time_point(
                    std::chrono::nanoseconds(rec.anchor_stop_ns + seconds_to_ns(cfg.tail_s))));
            }
            std::optional<PowerTrace> trace;
            try {
                trace = session->stop();
            } catch (const Error& e) {
                rec.energy_note = std::string("sampling failed: ") + e.what();
                warn("run " + std::to_string(k) + ": " + rec.energy_note);
            }
            if (trace) {
                if (trace->degraded()) warn("run " + std::to_string(k) + ": power trace has gaps");
                rec.energy = energy_for(*trace, rec.timing, rec.anchor_start_ns, rec.anchor_stop_ns, bc,
                                        bundle.baseline, rec.energy_note);
                if (!rec.energy) {
                    warn("run " + std::to_string(k) + ": energy unavailable: " + rec.energy_note);
                } else if (rec.energy->degraded()) {
                    warn("run " + std::to_string(k) + ": power covers only " +
                         describe(100.0 * rec.energy->coverage) + " % of the window");
                }
                if (!trace->samples.empty()) {
                    const std::string file = "trace_" + std::to_string(k) + ".csv";
                    bundle.traces.push_back({file, std::move(*trace)});
                    rec.trace_ref = file;
                }
            }
        }
        if (provider) provider->notify_phase(BenchmarkPhase::idle);

        rec.output_checksum = instance->output_checksum();
        if (cfg.verify) instance->verify();
        if (!bundle.runs.empty() && rec.output_checksum != bundle.runs.front().output_checksum) {
            fail(ErrorKind::numerical, "run " + std::to_string(k) + " produced a different output than run 1");
        }
        bundle.runs.push_back(std::move(rec));
    }

    bundle.aggregate = aggregate_runs(bundle.runs, bc.conforming);
    bundle.valid = bundle.aggregate.valid;

    RunOutcome out;
    if (cfg.out) out.files = write_results(bundle, *cfg.out);
    out.bundle = std::move(bundle);
    return out;
}

Reanalysis analyze_bundle(const ResultBundle& bundle) {
    validate_bundle(bundle);
    Reanalysis out;
    out.bundle = bundle;
    std::vector<RunRecord> runs = bundle.runs;
    for (auto& r : runs) {
        RunReanalysis ra;
        ra.index = r.index;
        ra.stored = r.energy;
        if (r.trace_ref) {
            const StoredTrace* t = bundle.find_trace(*r.trace_ref);
            std::string note;
            ra.recomputed = energy_for(t->trace, r.timing, r.anchor_start_ns, r.anchor_stop_ns, bundle.config,
                                       bundle.baseline, note);
        }
        if (ra.stored.has_value() != ra.recomputed.has_value()) {
            ra.rel_diff = std::numeric_limits<double>::infinity();
        } else if (ra.stored) {
            ra.rel_diff = std::max({rel_diff(ra.stored->joules_raw, ra.recomputed->joules_raw),
                                    rel_diff(ra.stored->joules_net, ra.recomputed->joules_net),
                                    rel_diff(ra.stored->joules_corrected, ra.recomputed->joules_corrected),
                                    rel_diff(ra.stored->coverage, ra.recomputed->coverage)});
        }
        out.max_rel_diff = std::max(out.max_rel_diff, ra.rel_diff);
        r.energy = ra.recomputed;
        out.runs.push_back(std::move(ra));
    }
    out.aggregate = aggregate_runs(runs, bundle.config.conforming);
    return out;
}

Reanalysis analyze_bundle(const std::filesystem::path& dir) { return analyze_bundle(read_results(dir)); }

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage: return kExitUsage;
        case ErrorKind::device:
        case ErrorKind::provider:
        case ErrorKind::numerical:
        case ErrorKind::dispatch: return kExitDevice;
        case ErrorKind::validation:
        case ErrorKind::io: return kExitIo;
    }
    return kExitUsage;
}

int exit_code_for(const ResultBundle& bundle) noexcept {
    if (!bundle.config.conforming) return 0;
    return bundle.valid ? 0 : kExitValidity;
}

std::vector<TrendPoint> read_trend_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    std::ptrdiff_t year_col = -1;
    std::ptrdiff_t eff_col = -1;
    std::vector<TrendPoint> points;

    auto split = [](const std::string& text) {
        std::vector<std::string> cells;
        std::stringstream ss(text);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            const auto b = cell.find_first_not_of(" \t\r");
            const auto e = cell.find_last_not_of(" \t\r");
            cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
        }
        return cells;
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r" || line[0] == '#') continue;
        const auto cells = split(line);
        if (year_col < 0) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (cells[i] == "year") year_col = static_cast<std::ptrdiff_t>(i);
                if (cells[i] == "efficiency") eff_col = static_cast<std::ptrdiff_t>(i);
            }
            if (year_col < 0 || eff_col < 0) {
                fail(ErrorKind::validation, path.string() + ": header must name year and efficiency columns");
            }
            continue;
        }
        const auto need = static_cast<std::size_t>(std::max(year_col, eff_col));
        if (cells.size() <= need) {
            fail(ErrorKind::validation, path.string() + ":" + std::to_string(line_no) + ": missing columns");
        }
        auto parse = [&](const std::string& cell) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size()) {
                fail(ErrorKind::validation,
                     path.string() + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'");
            }
            return v;
        };
        points.push_back({parse(cells[static_cast<std::size_t>(year_col)]),
                          parse(cells[static_cast<std::size_t>(eff_col)])});
    }
    if (year_col < 0) fail(ErrorKind::validation, path.string() + ": empty trend file");
    return points;
}

TrendPoint trend_point_from_bundle(const ResultBundle& bundle, double year) {
    if (!bundle.aggregate.energy_j) {
        fail(ErrorKind::validation, "bundle for " + bundle.workload_id + " has no energy data");
    }
    if (!bundle.valid) {
        fail(ErrorKind::validation, "bundle for " + bundle.workload_id + " did not pass the validity check");
    }
    return {year, efficiency_from_energy(bundle.aggregate.energy_j->mean)};
}

}  // namespace ergmark
