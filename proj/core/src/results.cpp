#include "ergmark/results.hpp"

#include "ergmark/checksum.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace ergmark {

using json = nlohmann::ordered_json;

const char* to_string(WindowMode mode) {
    return mode == WindowMode::kernel ? "kernel" : "extended";
}

WindowMode window_mode_from_string(const std::string& text) {
    if (text == "kernel") return WindowMode::kernel;
    if (text == "extended") return WindowMode::extended;
    fail(ErrorKind::usage, "unknown window mode '" + text + "' (expected kernel or extended)");
}

const StoredTrace* ResultBundle::find_trace(const std::string& file) const {
    for (const auto& t : traces) {
        if (t.file == file) return &t;
    }
    return nullptr;
}

void validate_bundle(const ResultBundle& bundle) {
    if (bundle.runs.empty()) fail(ErrorKind::validation, "bundle contains no runs");
    for (const auto& t : bundle.traces) {
        if (t.trace.samples.size() < 2) {
            fail(ErrorKind::validation, "stored trace " + t.file + " has fewer than two samples");
        }
        t.trace.validate();
    }
    for (const auto& r : bundle.runs) {
        if (r.timing.kernel_ns > r.timing.wall_ns || r.timing.kernel_ns < 0 || r.timing.transfer_ns < 0 ||
            r.timing.iterations < 1) {
            fail(ErrorKind::validation, "run " + std::to_string(r.index) + " has inconsistent timing");
        }
        if (!r.energy) continue;
        if (!r.trace_ref) {
            fail(ErrorKind::validation, "run " + std::to_string(r.index) + " has energy but no trace reference");
        }
        const StoredTrace* t = bundle.find_trace(*r.trace_ref);
        if (!t) fail(ErrorKind::validation, "run " + std::to_string(r.index) + " references missing trace " + *r.trace_ref);
        const auto& w = r.energy->window;
        if (w.start_ns < t->trace.first_ns() || w.end_ns > t->trace.last_ns() || w.end_ns <= w.start_ns) {
            fail(ErrorKind::validation, "window/trace mismatch in run " + std::to_string(r.index) +
                                            ": energy window is not contained in " + t->file);
        }
    }
}

// ---------------------------------------------------------------------------
// Trace CSV

std::string format_trace_csv(const PowerTrace& trace) {
    std::string out = "t_ns,watts\n";
    out.reserve(out.size() + trace.samples.size() * 32);
    char buf[64];
    for (const auto& s : trace.samples) {
        auto r1 = std::to_chars(buf, buf + sizeof buf, s.t_ns);
        *r1.ptr++ = ',';
        auto r2 = std::to_chars(r1.ptr, buf + sizeof buf, s.watts);
        *r2.ptr++ = '\n';
        out.append(buf, r2.ptr);
    }
    return out;
}

std::vector<PowerSample> parse_trace_csv(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::validation, "trace " + origin + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "t_ns,watts") fail(ErrorKind::validation, "trace " + origin + ": header must be t_ns,watts");
    std::vector<PowerSample> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        PowerSample s;
        const char* b = line.data();
        const char* e = b + line.size();
        bool ok = comma != std::string::npos;
        if (ok) {
            auto r1 = std::from_chars(b, b + comma, s.t_ns);
            auto r2 = std::from_chars(b + comma + 1, e, s.watts);
            ok = r1.ec == std::errc{} && r1.ptr == b + comma && r2.ec == std::errc{} && r2.ptr == e;
        }
        if (!ok) fail(ErrorKind::validation, "trace " + origin + ": bad row at line " + std::to_string(line_no));
        out.push_back(s);
    }
    return out;
}

namespace {

// ---------------------------------------------------------------------------
// JSON mapping

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

json to_json(const DeviceDescriptor& d) {
    return {{"id", d.id},
            {"kind", to_string(d.kind)},
            {"name", d.name},
            {"worker_count", d.worker_count},
            {"supports_f64", d.supports_f64}};
}

DeviceDescriptor device_from_json(const json& j) {
    DeviceDescriptor d;
    d.id = j.at("id").get<std::string>();
    d.kind = device_kind_from_string(j.at("kind").get<std::string>());
    d.name = j.at("name").get<std::string>();
    d.worker_count = j.at("worker_count").get<std::size_t>();
    d.supports_f64 = j.at("supports_f64").get<bool>();
    return d;
}

json to_json(const TimingRecord& t) {
    return {{"kernel_ns", t.kernel_ns},
            {"transfer_ns", t.transfer_ns},
            {"wall_ns", t.wall_ns},
            {"iterations", t.iterations}};
}

TimingRecord timing_from_json(const json& j) {
    TimingRecord t;
    t.kernel_ns = j.at("kernel_ns").get<std::int64_t>();
    t.transfer_ns = j.at("transfer_ns").get<std::int64_t>();
    t.wall_ns = j.at("wall_ns").get<std::int64_t>();
    t.iterations = j.at("iterations").get<std::int64_t>();
    return t;
}

json to_json(const EnergyResult& e) {
    json corrections = json::array();
    for (const auto& c : e.corrections) corrections.push_back({{"kind", to_string(c.kind)}, {"factor", c.factor}});
    return {{"joules_raw", e.joules_raw},
            {"joules_net", e.joules_net},
            {"joules_corrected", e.joules_corrected},
            {"corrections", corrections},
            {"window", {{"t_start_ns", e.window.start_ns}, {"t_end_ns", e.window.end_ns}}},
            {"coverage", e.coverage},
            {"clamp_count", e.clamp_count},
            {"degraded", e.degraded()}};
}

EnergyResult energy_from_json(const json& j) {
    EnergyResult e;
    e.joules_raw = j.at("joules_raw").get<double>();
    e.joules_net = j.at("joules_net").get<double>();
    e.joules_corrected = j.at("joules_corrected").get<double>();
    for (const auto& c : j.at("corrections")) {
        e.corrections.push_back({correction_kind_from_string(c.at("kind").get<std::string>()),
                                 c.at("factor").get<double>()});
    }
    e.window.start_ns = j.at("window").at("t_start_ns").get<std::int64_t>();
    e.window.end_ns = j.at("window").at("t_end_ns").get<std::int64_t>();
    e.coverage = j.at("coverage").get<double>();
    e.clamp_count = j.at("clamp_count").get<std::size_t>();
    j.at("degraded").get<bool>();
    return e;
}

json to_json(const RunRecord& r) {
    return {{"index", r.index},
            {"device_id", r.key.device_id},
            {"workload_id", r.key.workload_id},
            {"precision", r.key.precision},
            {"timing", to_json(r.timing)},
            {"time_to_solution_s", r.time_to_solution_s()},
            {"anchors", {{"start_ns", r.anchor_start_ns}, {"stop_ns", r.anchor_stop_ns}}},
            {"energy", r.energy ? to_json(*r.energy) : json(nullptr)},
            {"energy_note", r.energy_note},
            {"trace", r.trace_ref ? json(*r.trace_ref) : json(nullptr)},
            {"output_checksum", to_hex(r.output_checksum)},
            {"conforming", r.conforming}};
}

RunRecord run_from_json(const json& j) {
    RunRecord r;
    r.index = j.at("index").get<std::size_t>();
    r.key.device_id = j.at("device_id").get<std::string>();
    r.key.workload_id = j.at("workload_id").get<std::string>();
    r.key.precision = j.at("precision").get<std::string>();
    r.timing = timing_from_json(j.at("timing"));
    r.anchor_start_ns = j.at("anchors").at("start_ns").get<std::int64_t>();
    r.anchor_stop_ns = j.at("anchors").at("stop_ns").get<std::int64_t>();
    if (!j.at("energy").is_null()) r.energy = energy_from_json(j.at("energy"));
    r.energy_note = j.at("energy_note").get<std::string>();
    if (!j.at("trace").is_null()) r.trace_ref = j.at("trace").get<std::string>();
    r.output_checksum = parse_hex64(j.at("output_checksum").get<std::string>());
    r.conforming = j.at("conforming").get<bool>();
    return r;
}

json to_json(const ValidityReport& v) {
    return {{"metric", to_string(v.metric)},
            {"values", v.values},
            {"mean", v.mean},
            {"max_rel_dev", finite_or_null(v.max_rel_dev)},
            {"valid", v.valid},
            {"diagnostic", v.diagnostic}};
}

ValidityReport validity_from_json(const json& j) {
    ValidityReport v;
    const auto metric = j.at("metric").get<std::string>();
    if (metric != "time" && metric != "energy") fail(ErrorKind::validation, "unknown metric '" + metric + "'");
    v.metric = metric == "time" ? Metric::time : Metric::energy;
    v.values = j.at("values").get<std::vector<double>>();
    v.mean = j.at("mean").get<double>();
    v.max_rel_dev = number_or_inf(j.at("max_rel_dev"));
    v.valid = j.at("valid").get<bool>();
    v.diagnostic = j.at("diagnostic").get<std::string>();
    return v;
}

json to_json(const MetricStats& s) {
    return {{"mean", s.mean}, {"stddev", s.stddev}, {"min", s.min}, {"max", s.max}, {"count", s.count}};
}

MetricStats stats_from_json(const json& j) {
    MetricStats s;
    s.mean = j.at("mean").get<double>();
    s.stddev = j.at("stddev").get<double>();
    s.min = j.at("min").get<double>();
    s.max = j.at("max").get<double>();
    s.count = j.at("count").get<std::size_t>();
    return s;
}

json to_json(const RunSummary& a) {
    return {{"time_s", to_json(a.time_s)},
            {"energy_j", a.energy_j ? to_json(*a.energy_j) : json(nullptr)},
            {"time_validity", a.time_validity ? to_json(*a.time_validity) : json(nullptr)},
            {"energy_validity", a.energy_validity ? to_json(*a.energy_validity) : json(nullptr)},
            {"energy_runs", a.energy_runs},
            {"degraded_runs", a.degraded_runs},
            {"valid", a.valid}};
}

RunSummary summary_from_json(const json& j) {
    RunSummary a;
    a.time_s = stats_from_json(j.at("time_s"));
    if (!j.at("energy_j").is_null()) a.energy_j = stats_from_json(j.at("energy_j"));
    if (!j.at("time_validity").is_null()) a.time_validity = validity_from_json(j.at("time_validity"));
    if (!j.at("energy_validity").is_null()) a.energy_validity = validity_from_json(j.at("energy_validity"));
    a.energy_runs = j.at("energy_runs").get<std::size_t>();
    a.degraded_runs = j.at("degraded_runs").get<std::size_t>();
    a.valid = j.at("valid").get<bool>();
    return a;
}

json to_json(const BundleConfig& c) {
    return {{"workload", c.workload},
            {"runs", c.runs},
            {"iterations", c.iterations},
            {"warmup_iterations", c.warmup_iterations},
            {"power_provider", c.power_provider},
            {"sample_hz", c.sample_hz},
            {"baseline_seconds", c.baseline_seconds},
            {"psu_efficiency", c.psu_efficiency ? json(*c.psu_efficiency) : json(nullptr)},
            {"legacy_external", c.legacy_external},
            {"window", to_string(c.window_mode)},
            {"tail_s", c.tail_s},
            {"conforming", c.conforming},
            {"verified", c.verified}};
}

BundleConfig config_from_json(const json& j) {
    BundleConfig c;
    c.workload = j.at("workload").get<std::string>();
    c.runs = j.at("runs").get<std::size_t>();
    c.iterations = j.at("iterations").get<std::size_t>();
    c.warmup_iterations = j.at("warmup_iterations").get<std::size_t>();
    c.power_provider = j.at("power_provider").get<std::string>();
    c.sample_hz = j.at("sample_hz").get<double>();
    c.baseline_seconds = j.at("baseline_seconds").get<double>();
    if (!j.at("psu_efficiency").is_null()) c.psu_efficiency = j.at("psu_efficiency").get<double>();
    c.legacy_external = j.at("legacy_external").get<bool>();
    c.window_mode = window_mode_from_string(j.at("window").get<std::string>());
    c.tail_s = j.at("tail_s").get<double>();
    c.conforming = j.at("conforming").get<bool>();
    c.verified = j.at("verified").get<bool>();
    return c;
}

json to_json(const BaselineEstimate& b) {
    return {{"watts", b.watts},
            {"duration_ns", b.duration_ns},
            {"sample_count", b.sample_count},
            {"dispersion", b.dispersion},
            {"noisy", b.noisy}};
}

BaselineEstimate baseline_from_json(const json& j) {
    BaselineEstimate b;
    b.watts = j.at("watts").get<double>();
    b.duration_ns = j.at("duration_ns").get<std::int64_t>();
    b.sample_count = j.at("sample_count").get<std::size_t>();
    b.dispersion = j.at("dispersion").get<double>();
    b.noisy = j.at("noisy").get<bool>();
    return b;
}

json trace_meta(const StoredTrace& t) {
    json gaps = json::array();
    for (const auto& g : t.trace.gaps) {
        gaps.push_back({{"start_ns", g.start_ns}, {"end_ns", g.end_ns}, {"reason", g.reason}});
    }
    return {{"file", t.file},
            {"provider", to_string(t.trace.provider)},
            {"nominal_rate_hz", t.trace.nominal_rate_hz},
            {"reordered", t.trace.reordered},
            {"gaps", gaps}};
}

std::string run_file_name(std::size_t index) { return "run_" + std::to_string(index) + ".json"; }

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(ErrorKind::io, "missing file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + p.string());
    out << text;
    out.flush();
    if (!out) fail(ErrorKind::io, "short write to " + p.string());
}

bool safe_file_name(const std::string& name) {
    return !name.empty() && name.find('/') == std::string::npos && name.find('\\') == std::string::npos &&
           name != "." && name != "..";
}

}  // namespace

std::vector<std::filesystem::path> write_results(const ResultBundle& bundle, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    validate_bundle(bundle);
    for (const auto& t : bundle.traces) {
        if (!safe_file_name(t.file)) fail(ErrorKind::validation, "bad trace file name '" + t.file + "'");
    }

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
    const fs::path marker = dir / kIncompleteMarker;
    write_file(marker, "bundle write in progress\n");

    std::vector<fs::path> written;
    json run_files = json::array();
    for (const auto& r : bundle.runs) {
        const auto name = run_file_name(r.index);
        write_file(dir / name, to_json(r).dump(2) + "\n");
        written.push_back(dir / name);
        run_files.push_back(name);
    }
    json traces = json::array();
    for (const auto& t : bundle.traces) {
        write_file(dir / t.file, format_trace_csv(t.trace));
        written.push_back(dir / t.file);
        traces.push_back(trace_meta(t));
    }

    json s;
    s["format"] = "ergmark-results/1";
    s["manifest_hash"] = to_hex(bundle.manifest_hash);
    s["workload_id"] = bundle.workload_id;
    s["precision"] = bundle.precision;
    s["device"] = to_json(bundle.device);
    s["config"] = to_json(bundle.config);
    s["baseline"] = bundle.baseline ? to_json(*bundle.baseline) : json(nullptr);
    s["runs"] = run_files;
    s["traces"] = traces;
    s["aggregate"] = to_json(bundle.aggregate);
    s["valid"] = bundle.valid;
    write_file(dir / kSummaryFile, s.dump(2) + "\n");
    written.insert(written.begin(), dir / kSummaryFile);

    fs::remove(marker, ec);
    if (ec) fail(ErrorKind::io, "cannot remove " + marker.string() + ": " + ec.message());
    return written;
}

ResultBundle read_results(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (fs::exists(dir / kIncompleteMarker)) {
        fail(ErrorKind::validation, "bundle " + dir.string() + " is incomplete (interrupted write)");
    }
    const auto summary_path = dir / kSummaryFile;
    if (!fs::exists(summary_path)) fail(ErrorKind::io, "missing file: " + summary_path.string());

    ResultBundle b;
    try {
        const json s = json::parse(read_file(summary_path));
        if (s.at("format").get<std::string>() != "ergmark-results/1") {
            fail(ErrorKind::validation, "summary " + summary_path.string() + " has an unknown format tag");
        }
        b.manifest_hash = parse_hex64(s.at("manifest_hash").get<std::string>());
        b.workload_id = s.at("workload_id").get<std::string>();
        b.precision = s.at("precision").get<std::string>();
        b.device = device_from_json(s.at("device"));
        b.config = config_from_json(s.at("config"));
        if (!s.at("baseline").is_null()) b.baseline = baseline_from_json(s.at("baseline"));
        for (const auto& t : s.at("traces")) {
            StoredTrace st;
            st.file = t.at("file").get<std::string>();
            if (!safe_file_name(st.file)) fail(ErrorKind::validation, "bad trace file name '" + st.file + "'");
            st.trace.provider = provider_kind_from_string(t.at("provider").get<std::string>());
            st.trace.nominal_rate_hz = t.at("nominal_rate_hz").get<double>();
            st.trace.reordered = t.at("reordered").get<bool>();
            for (const auto& g : t.at("gaps")) {
                st.trace.gaps.push_back({g.at("start_ns").get<std::int64_t>(), g.at("end_ns").get<std::int64_t>(),
                                         g.at("reason").get<std::string>()});
            }
            st.trace.samples = parse_trace_csv(read_file(dir / st.file), st.file);
            b.traces.push_back(std::move(st));
        }
        for (const auto& f : s.at("runs")) {
            const auto name = f.get<std::string>();
            if (!safe_file_name(name)) fail(ErrorKind::validation, "bad run file name '" + name + "'");
            b.runs.push_back(run_from_json(json::parse(read_file(dir / name))));
        }
        b.aggregate = summary_from_json(s.at("aggregate"));
        b.valid = s.at("valid").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::validation, "malformed bundle " + dir.string() + ": " + e.what());
    }
    validate_bundle(b);
    return b;
}

}  // namespace ergmark
