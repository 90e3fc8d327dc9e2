#include "ergmark/checksum.hpp"
#include "ergmark/orchestrator.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct RunFlags {
    ergmark::RunConfig cfg;
    std::string scale = "desk";
    std::string precision;
    std::string provider = "none";
    std::string window = "kernel";
    std::string counter_path;
    std::string trace_file;
    std::optional<double> trace_voltage;
    std::optional<std::uint64_t> counter_max_range;
    std::optional<double> warmup_watts;
    std::optional<double> fail_after_s;
    std::optional<std::size_t> iterations;
    std::optional<std::size_t> warmup;
    std::optional<std::size_t> workers;
    std::optional<double> psu_efficiency;
    std::vector<std::string> slowdown;
    std::string out;
    bool json = false;
};

struct MakeFlags {
    std::vector<std::string> ids;
    std::string scale = "desk";
    std::uint64_t seed = 42;
    std::string precision;
    std::string out = ".";
};

struct TrendFlags {
    std::vector<std::string> inputs;
    std::optional<double> reference_year;
};

ordered_json number_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

fs::path default_out_dir(const std::string& workload_id) {
    if (const char* env = std::getenv("ERGMARK_OUT"); env && *env) return env;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    std::ostringstream name;
    name << "results/" << workload_id << "-" << std::put_time(&tm, "%Y%m%d-%H%M%S");
    return name.str();
}

std::map<std::size_t, double> parse_slowdown(const std::vector<std::string>& specs) {
    std::map<std::size_t, double> out;
    for (const auto& s : specs) {
        const auto colon = s.find(':');
        if (colon == std::string::npos) ergmark::fail(ergmark::ErrorKind::usage, "slowdown must be RUN:FRACTION");
        try {
            out[std::stoul(s.substr(0, colon))] = std::stod(s.substr(colon + 1));
        } catch (const std::logic_error&) {
            ergmark::fail(ergmark::ErrorKind::usage, "slowdown must be RUN:FRACTION, got '" + s + "'");
        }
    }
    return out;
}

ordered_json validity_json(const std::optional<ergmark::ValidityReport>& v) {
    if (!v) return nullptr;
    return {{"valid", v->valid}, {"mean", v->mean}, {"max_rel_dev", number_or_null(v->max_rel_dev)},
            {"diagnostic", v->diagnostic}};
}

void print_validity(const char* label, const std::optional<ergmark::ValidityReport>& v) {
    if (!v) return;
    std::cout << label << ": " << (v->valid ? "valid" : "INVALID");
    if (std::isfinite(v->max_rel_dev)) std::cout << " (max deviation " << 100.0 * v->max_rel_dev << " %)";
    if (!v->valid && !v->diagnostic.empty()) std::cout << ": " << v->diagnostic;
    std::cout << "\n";
}

int cmd_run(RunFlags& f) {
    auto& cfg = f.cfg;
    cfg.scale = ergmark::scale_from_string(f.scale);
    if (!f.precision.empty()) cfg.precision = ergmark::precision_from_string(f.precision);
    cfg.provider.kind = ergmark::provider_config_kind_from_string(f.provider);
    cfg.provider.counter_path = f.counter_path;
    cfg.provider.counter_max_range_uj = f.counter_max_range;
    cfg.provider.trace_file = f.trace_file;
    cfg.provider.trace_voltage_v = f.trace_voltage;
    cfg.provider.synthetic.warmup_watts = f.warmup_watts;
    cfg.provider.synthetic.fail_after_s = f.fail_after_s;
    cfg.window = ergmark::window_mode_from_string(f.window);
    cfg.iterations = f.iterations;
    cfg.warmup = f.warmup;
    cfg.workers = f.workers;
    cfg.psu_efficiency = f.psu_efficiency;
    cfg.slowdown = parse_slowdown(f.slowdown);

    // The workload id is needed for the default directory name only.
    std::string label = fs::path(cfg.workload).filename().string();
    if (label.empty() || label == "workload.json") label = fs::path(cfg.workload).parent_path().filename().string();
    cfg.out = f.out.empty() ? default_out_dir(label) : fs::path(f.out);

    const auto outcome = ergmark::run_benchmark(cfg);
    const auto& b = outcome.bundle;
    if (f.json) {
        ordered_json runs = ordered_json::array();
        for (const auto& r : b.runs) {
            ordered_json e = nullptr;
            if (r.energy) e = {{"joules", r.energy->joules_corrected}, {"coverage", r.energy->coverage}};
            runs.push_back({{"index", r.index}, {"time_s", r.time_to_solution_s()}, {"energy", e},
                            {"checksum", ergmark::to_hex(r.output_checksum)}});
        }
        ordered_json doc = {{"bundle", cfg.out->string()},
                            {"valid", b.valid},
                            {"conforming", b.config.conforming},
                            {"runs", runs},
                            {"time_validity", validity_json(b.aggregate.time_validity)},
                            {"energy_validity", validity_json(b.aggregate.energy_validity)}};
        std::cout << doc.dump(2) << "\n";
    } else {
        std::cout << b.workload_id << "/" << b.precision << " on " << b.device.id << " (" << b.device.worker_count
                  << " workers), " << b.config.iterations << " iterations per run\n";
        if (b.baseline) {
            std::cout << "baseline: " << b.baseline->watts << " W over " << b.baseline->sample_count << " samples\n";
        }
        for (const auto& r : b.runs) {
            std::cout << "run " << r.index << ": " << r.time_to_solution_s() << " s";
            if (r.energy) {
                std::cout << ", " << r.energy->joules_corrected << " J";
                if (r.energy->degraded()) std::cout << " (coverage " << 100.0 * r.energy->coverage << " %)";
            } else {
                std::cout << ", energy unavailable (" << r.energy_note << ")";
            }
            std::cout << ", output " << ergmark::to_hex(r.output_checksum) << "\n";
        }
        print_validity("time", b.aggregate.time_validity);
        print_validity("energy", b.aggregate.energy_validity);
        if (!b.config.conforming) std::cout << "non-conforming: fewer than 3 runs, validity not checked\n";
        std::cout << "bundle: " << cfg.out->string() << "\n";
    }
    return ergmark::exit_code_for(b);
}

int cmd_list_devices(std::optional<std::size_t> workers, bool json) {
    ergmark::DeviceOptions opts;
    opts.worker_count = workers;
    const auto devices = ergmark::enumerate_devices(opts);
    if (json) {
        ordered_json arr = ordered_json::array();
        for (const auto& d : devices) {
            arr.push_back({{"id", d.id}, {"kind", ergmark::to_string(d.kind)}, {"name", d.name},
                           {"workers", d.worker_count}, {"f64", d.supports_f64}});
        }
        std::cout << arr.dump(2) << "\n";
        return 0;
    }
    for (const auto& d : devices) {
        std::cout << d.id << "\t" << ergmark::to_string(d.kind) << "\t" << d.worker_count << " workers\t"
                  << (d.supports_f64 ? "f64" : "no-f64") << "\t" << d.name << "\n";
    }
    return 0;
}

// Stored results are recomputed bit for bit; anything beyond this is a
// corrupted or inconsistent bundle.
constexpr double kReanalysisTolerance = 1e-9;

int cmd_analyze(const std::string& dir, bool json) {
    const auto ra = ergmark::analyze_bundle(fs::path(dir));
    const bool consistent = ra.max_rel_diff <= kReanalysisTolerance;
    if (json) {
        ordered_json runs = ordered_json::array();
        for (const auto& r : ra.runs) {
            runs.push_back({{"index", r.index},
                            {"stored_j", r.stored ? ordered_json(r.stored->joules_corrected) : ordered_json(nullptr)},
                            {"recomputed_j",
                             r.recomputed ? ordered_json(r.recomputed->joules_corrected) : ordered_json(nullptr)},
                            {"rel_diff", number_or_null(r.rel_diff)}});
        }
        ordered_json doc = {{"bundle", dir},
                            {"runs", runs},
                            {"max_rel_diff", number_or_null(ra.max_rel_diff)},
                            {"consistent", consistent},
                            {"valid", ra.aggregate.valid},
                            {"time_validity", validity_json(ra.aggregate.time_validity)},
                            {"energy_validity", validity_json(ra.aggregate.energy_validity)}};
        std::cout << doc.dump(2) << "\n";
    } else {
        for (const auto& r : ra.runs) {
            std::cout << "run " << r.index << ": ";
            if (r.recomputed) {
                std::cout << std::setprecision(17) << r.recomputed->joules_corrected << " J";
            } else {
                std::cout << "no energy";
            }
            std::cout << std::setprecision(6) << " (relative difference " << r.rel_diff << ")\n";
        }
        print_validity("time", ra.aggregate.time_validity);
        print_validity("energy", ra.aggregate.energy_validity);
        std::cout << "recomputation " << (consistent ? "matches" : "DIFFERS FROM") << " stored energies\n";
    }
    if (!consistent) return ergmark::kExitValidity;
    return ra.bundle.config.conforming && !ra.aggregate.valid ? ergmark::kExitValidity : 0;
}

int cmd_trend(const TrendFlags& f) {
    std::vector<ergmark::TrendPoint> points;
    for (const auto& in : f.inputs) {
        // DIR@YEAR names a result bundle; anything else is a CSV file.
        const auto at = in.rfind('@');
        if (at != std::string::npos && fs::is_directory(in.substr(0, at))) {
            double year = 0.0;
            try {
                year = std::stod(in.substr(at + 1));
            } catch (const std::logic_error&) {
                ergmark::fail(ergmark::ErrorKind::usage, "bad year in '" + in + "'");
            }
            points.push_back(ergmark::trend_point_from_bundle(ergmark::read_results(in.substr(0, at)), year));
        } else {
            const auto more = ergmark::read_trend_csv(in);
            points.insert(points.end(), more.begin(), more.end());
        }
    }
    // Without an explicit reference the earliest year keeps a within range.
    double reference = 0.0;
    if (f.reference_year) {
        reference = *f.reference_year;
    } else if (!points.empty()) {
        reference = std::min_element(points.begin(), points.end(), [](const auto& a, const auto& b) {
                        return a.year < b.year;
                    })->year;
    }
    const auto fit = ergmark::fit_trend(points, reference);
    ordered_json doc = {{"n_points", fit.n_points},   {"reference_year", fit.reference_year},
                        {"a", fit.a},                 {"log_a", fit.log_a},
                        {"r", fit.r},                 {"two_year_factor", fit.two_year_factor},
                        {"r_squared", fit.r_squared}, {"mean_year", fit.mean_year}};
    std::cout << std::setprecision(17) << doc.dump(2) << "\n";
    return 0;
}

int cmd_make_workload(const MakeFlags& f) {
    std::vector<ergmark::WorkloadId> ids;
    for (const auto& s : f.ids) {
        if (s == "all") {
            ids = {ergmark::WorkloadId::median2d, ergmark::WorkloadId::dot, ergmark::WorkloadId::xcorr,
                   ergmark::WorkloadId::rk2d};
            break;
        }
        ids.push_back(ergmark::workload_id_from_string(s));
    }
    for (const auto id : ids) {
        ergmark::GenerateOptions opts;
        opts.id = id;
        opts.scale = ergmark::scale_from_string(f.scale);
        opts.seed = f.seed;
        if (!f.precision.empty()) opts.precision = ergmark::precision_from_string(f.precision);
        const auto g = ergmark::generate_workload(opts);
        const fs::path dir = fs::path(f.out) / ergmark::to_string(id);
        const auto hash = ergmark::write_workload(g.manifest, g.blobs, dir);
        std::cout << dir.string() << "\t" << ergmark::to_hex(hash) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ergmark: time- and energy-to-solution benchmarks"};
    app.require_subcommand(1);

    RunFlags rf;
    auto* run = app.add_subcommand("run", "Run the measurement protocol on one workload");
    run->add_option("--workload", rf.cfg.workload, "Workload container directory or canonical id")->required();
    run->add_option("--device", rf.cfg.device, "Device id (see list-devices)");
    run->add_option("--workers", rf.workers, "Worker threads on the host device");
    run->add_option("--runs", rf.cfg.runs, "Repetitions (at least 3)");
    run->add_flag("--allow-fewer-runs", rf.cfg.allow_fewer_runs, "Accept fewer than 3 runs, marking results non-conforming");
    run->add_option("--iterations", rf.iterations, "Back-to-back executions per run");
    run->add_option("--warmup", rf.warmup, "Untimed warm-up executions before each run");
    run->add_option("--power-provider", rf.provider, "counter, trace, bridge, synthetic or none")
        ->check(CLI::IsMember({"counter", "trace", "bridge", "synthetic", "none"}));
    run->add_option("--counter-path", rf.counter_path, "Energy counter file in microjoules");
    run->add_option("--counter-max-range", rf.counter_max_range, "Counter wrap range in microjoules");
    run->add_option("--trace-file", rf.trace_file, "External trace CSV (t_s,amps or t_s,watts)");
    run->add_option("--trace-voltage", rf.trace_voltage, "Supply voltage for current traces");
    run->add_option("--trace-offset-s", rf.cfg.provider.trace_offset_s, "Added to external trace timestamps");
    run->add_option("--bridge-cmd", rf.cfg.provider.bridge_cmd, "Command printing t_ns,watts lines");
    run->add_option("--sample-hz", rf.cfg.sample_hz, "Sampling rate");
    run->add_option("--baseline-seconds", rf.cfg.baseline_seconds, "Idle baseline duration (0 skips it)");
    run->add_option("--psu-efficiency", rf.psu_efficiency, "Wall-to-device efficiency in [0.5, 1]");
    run->add_flag("--legacy-external", rf.cfg.legacy_external, "Subtract 10 % from externally measured power");
    run->add_option("--window", rf.window, "kernel or extended")->check(CLI::IsMember({"kernel", "extended"}));
    run->add_option("--tail-s", rf.cfg.tail_s, "Post-window length in extended mode");
    run->add_flag("--verify", rf.cfg.verify, "Check every run's output against a serial reference");
    run->add_option("--scale", rf.scale, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    run->add_option("--seed", rf.cfg.seed, "Seed when generating a workload from its id");
    run->add_option("--precision", rf.precision, "int16, f32 or f64 when generating from an id");
    run->add_option("--out", rf.out, "Result bundle directory (default $ERGMARK_OUT)");
    run->add_option("--synthetic-idle-watts", rf.cfg.provider.synthetic.idle_watts, "Synthetic idle power");
    run->add_option("--synthetic-load-watts", rf.cfg.provider.synthetic.load_watts, "Synthetic load power");
    run->add_option("--synthetic-warmup-watts", rf.warmup_watts, "Synthetic power during warm-up");
    run->add_option("--synthetic-noise", rf.cfg.provider.synthetic.noise_sigma, "Gaussian noise sigma in watts");
    run->add_option("--synthetic-seed", rf.cfg.provider.synthetic.seed, "Synthetic noise seed");
    run->add_option("--synthetic-fail-after-s", rf.fail_after_s, "Synthetic reads fail after this many seconds");
    run->add_option("--inject-slowdown", rf.slowdown, "RUN:FRACTION busy time added to a run")->group("");
    run->add_option("--baseline-min-seconds", rf.cfg.baseline_min_seconds, "Shortest accepted baseline")->group("");
    run->add_flag("--json", rf.json, "Print a JSON summary");

    std::optional<std::size_t> list_workers;
    bool list_json = false;
    auto* list = app.add_subcommand("list-devices", "List compute devices");
    list->add_option("--workers", list_workers, "Worker threads on the host device");
    list->add_flag("--json", list_json, "Print JSON");

    std::string analyze_dir;
    bool analyze_json = false;
    auto* analyze = app.add_subcommand("analyze", "Recompute energies of a stored result bundle");
    analyze->add_option("bundle", analyze_dir, "Result bundle directory")->required();
    analyze->add_flag("--json", analyze_json, "Print JSON");

    TrendFlags tf;
    auto* trend = app.add_subcommand("trend", "Fit efficiency = a * exp(r * (year - reference))");
    trend->add_option("inputs", tf.inputs, "CSV files (year,efficiency) or bundle directories as DIR@YEAR")
        ->required();
    trend->add_option("--reference-year", tf.reference_year, "Year at which the fitted a applies (default: earliest year)");

    MakeFlags mf;
    auto* make = app.add_subcommand("make-workload", "Generate canonical workload containers");
    make->add_option("workload", mf.ids, "median2d, dot, xcorr, rk2d or all")->required();
    make->add_option("--scale", mf.scale, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
    make->add_option("--seed", mf.seed, "Generator seed");
    make->add_option("--precision", mf.precision, "int16, f32 or f64");
    make->add_option("--out", mf.out, "Parent directory; each container goes to <out>/<id>");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ergmark::kExitUsage;
    }

    try {
        if (*run) return cmd_run(rf);
        if (*list) return cmd_list_devices(list_workers, list_json);
        if (*analyze) return cmd_analyze(analyze_dir, analyze_json);
        if (*trend) return cmd_trend(tf);
        if (*make) return cmd_make_workload(mf);
    } catch (const ergmark::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ergmark::exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ergmark::kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return ergmark::kExitDevice;
    }
    return ergmark::kExitUsage;
}
