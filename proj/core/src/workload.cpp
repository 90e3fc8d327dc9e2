#include "ergmark/workload.hpp"

#include "ergmark/checksum.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ergmark {

using json = nlohmann::ordered_json;

const char* to_string(WorkloadId id) {
    switch (id) {
        case WorkloadId::median2d: return "median2d";
        case WorkloadId::dot: return "dot";
        case WorkloadId::xcorr: return "xcorr";
        case WorkloadId::rk2d: return "rk2d";
    }
    return "dot";
}

const char* to_string(Precision p) {
    switch (p) {
        case Precision::int16: return "int16";
        case Precision::f32: return "f32";
        case Precision::f64: return "f64";
    }
    return "f32";
}

const char* to_string(DType t) {
    switch (t) {
        case DType::u16: return "u16";
        case DType::f32: return "f32";
        case DType::f64: return "f64";
    }
    return "f32";
}

WorkloadId workload_id_from_string(const std::string& text) {
    if (text == "median2d") return WorkloadId::median2d;
    if (text == "dot") return WorkloadId::dot;
    if (text == "xcorr") return WorkloadId::xcorr;
    if (text == "rk2d") return WorkloadId::rk2d;
    fail(ErrorKind::validation, "unknown workload_id '" + text + "'");
}

Precision precision_from_string(const std::string& text) {
    if (text == "int16") return Precision::int16;
    if (text == "f32") return Precision::f32;
    if (text == "f64") return Precision::f64;
    fail(ErrorKind::validation, "unknown precision '" + text + "'");
}

DType dtype_from_string(const std::string& text) {
    if (text == "u16") return DType::u16;
    if (text == "f32") return DType::f32;
    if (text == "f64") return DType::f64;
    fail(ErrorKind::validation, "unknown dtype '" + text + "'");
}

std::size_t dtype_size(DType t) {
    switch (t) {
        case DType::u16: return 2;
        case DType::f32: return 4;
        case DType::f64: return 8;
    }
    return 0;
}

DType dtype_for(Precision p) {
    switch (p) {
        case Precision::int16: return DType::u16;
        case Precision::f32: return DType::f32;
        case Precision::f64: return DType::f64;
    }
    return DType::f32;
}

namespace detail {

void to_little_endian(std::span<std::byte> bytes, std::size_t elem_size) {
    if constexpr (std::endian::native == std::endian::little) {
        (void)bytes;
        (void)elem_size;
    } else {
        for (std::size_t i = 0; i + elem_size <= bytes.size(); i += elem_size) {
            std::reverse(bytes.begin() + static_cast<std::ptrdiff_t>(i),
                         bytes.begin() + static_cast<std::ptrdiff_t>(i + elem_size));
        }
    }
}

}  // namespace detail

std::size_t DataBlob::element_count() const noexcept {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

void DataBlob::validate() const {
    if (shape.empty() || shape.size() > 2) {
        fail(ErrorKind::validation, "blob '" + name + "' must have rank 1 or 2");
    }
    for (auto d : shape) {
        if (d == 0) fail(ErrorKind::validation, "blob '" + name + "' has a zero-length dimension");
    }
    if (payload.size() != element_count() * dtype_size(dtype)) {
        fail(ErrorKind::validation, "blob '" + name + "' payload is " + std::to_string(payload.size()) +
                                        " bytes, shape and dtype require " +
                                        std::to_string(element_count() * dtype_size(dtype)));
    }
}

double WorkloadManifest::param(const std::string& key) const {
    auto it = params.find(key);
    if (it == params.end()) fail(ErrorKind::validation, "missing parameter(s): " + key);
    return it->second;
}

std::size_t WorkloadManifest::size_param(const std::string& key) const {
    return static_cast<std::size_t>(param(key));
}

const DataBlob& Workload::blob(const std::string& name) const {
    for (const auto& b : blobs) {
        if (b.name == name) return b;
    }
    fail(ErrorKind::validation, "workload has no blob '" + name + "'");
}

std::vector<std::string> required_params(WorkloadId id) {
    switch (id) {
        case WorkloadId::median2d: return {"height", "width", "window_n"};
        case WorkloadId::dot: return {"vector_len"};
        case WorkloadId::xcorr: return {"lag_range", "vector_len"};
        case WorkloadId::rk2d: return {"dt", "grid_nx", "grid_ny", "steps", "velocity_x", "velocity_y"};
    }
    return {};
}

bool precision_supported(WorkloadId id, Precision p) {
    switch (id) {
        case WorkloadId::median2d: return p == Precision::int16;
        case WorkloadId::dot: return p == Precision::f32 || p == Precision::f64;
        case WorkloadId::xcorr: return p == Precision::f32;
        case WorkloadId::rk2d: return p == Precision::f32 || p == Precision::f64;
    }
    return false;
}

std::vector<BlobSpec> required_blobs(const WorkloadManifest& m) {
    const DType dt = dtype_for(m.precision);
    switch (m.workload_id) {
        case WorkloadId::median2d:
            return {{"image", dt, {m.size_param("height"), m.size_param("width")}}};
        case WorkloadId::dot:
            return {{"x", dt, {m.size_param("vector_len")}}, {"y", dt, {m.size_param("vector_len")}}};
        case WorkloadId::xcorr:
            return {{"x", dt, {m.size_param("vector_len")}}, {"y", dt, {m.size_param("vector_len")}}};
        case WorkloadId::rk2d:
            return {{"u0", dt, {m.size_param("grid_ny"), m.size_param("grid_nx")}}};
    }
    return {};
}

namespace {

const std::set<std::string> kIntegerParams = {"window_n", "width",   "height",  "vector_len",
                                              "lag_range", "grid_nx", "grid_ny", "steps"};

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
    return out;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "," : "") + std::to_string(shape[i]);
    return out + "]";
}

bool valid_blob_name(const std::string& name) {
    return !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    });
}

void check_params(const WorkloadManifest& m) {
    const auto required = required_params(m.workload_id);
    std::vector<std::string> missing;
    std::vector<std::string> extra;
    for (const auto& k : required) {
        if (!m.params.count(k)) missing.push_back(k);
    }
    for (const auto& [k, v] : m.params) {
        if (std::find(required.begin(), required.end(), k) == required.end()) extra.push_back(k);
    }
    if (!missing.empty()) fail(ErrorKind::validation, "missing parameter(s): " + join(missing));
    if (!extra.empty()) {
        fail(ErrorKind::validation, std::string("unexpected parameter(s) for ") + to_string(m.workload_id) +
                                        ": " + join(extra));
    }
    for (const auto& [k, v] : m.params) {
        if (!std::isfinite(v)) fail(ErrorKind::validation, "parameter " + k + " is not finite");
        if (kIntegerParams.count(k)) {
            const bool zero_ok = (k == "lag_range");
            if (v != std::floor(v) || v < (zero_ok ? 0.0 : 1.0) || v > 9.0e15) {
                fail(ErrorKind::validation, "parameter " + k + " must be a " +
                                                (zero_ok ? "non-negative" : "positive") + " integer");
            }
        }
    }
    if (m.workload_id == WorkloadId::median2d) {
        const auto n = m.size_param("window_n");
        const auto lim = 2 * std::min(m.size_param("width"), m.size_param("height")) - 1;
        if (n < 3 || n % 2 == 0 || n > lim) {
            fail(ErrorKind::validation, "window_n must be odd, >= 3 and <= " + std::to_string(lim));
        }
    }
    if (m.workload_id == WorkloadId::rk2d && !(m.param("dt") > 0.0)) {
        fail(ErrorKind::validation, "parameter dt must be positive");
    }
}

}  // namespace

void validate_manifest(const WorkloadManifest& m) {
    if (!precision_supported(m.workload_id, m.precision)) {
        fail(ErrorKind::validation, std::string("precision unsupported for workload: ") +
                                        to_string(m.workload_id) + " does not run in " + to_string(m.precision));
    }
    if (m.iterations < 1) fail(ErrorKind::validation, "iterations must be at least 1");
    check_params(m);

    const auto specs = required_blobs(m);
    std::set<std::string> seen;
    for (const auto& ref : m.blob_refs) {
        if (!valid_blob_name(ref.name)) fail(ErrorKind::validation, "invalid blob name '" + ref.name + "'");
        if (!seen.insert(ref.name).second) fail(ErrorKind::validation, "duplicate blob '" + ref.name + "'");
        auto spec = std::find_if(specs.begin(), specs.end(), [&](const BlobSpec& s) { return s.name == ref.name; });
        if (spec == specs.end()) fail(ErrorKind::validation, "unexpected blob '" + ref.name + "'");
        if (ref.dtype != spec->dtype) {
            fail(ErrorKind::validation, "blob '" + ref.name + "' dtype mismatch: " + to_string(ref.dtype) +
                                            ", expected " + to_string(spec->dtype));
        }
        if (ref.shape != spec->shape) {
            fail(ErrorKind::validation, "blob '" + ref.name + "' shape mismatch: " + shape_string(ref.shape) +
                                            ", expected " + shape_string(spec->shape));
        }
    }
    for (const auto& s : specs) {
        if (!seen.count(s.name)) fail(ErrorKind::validation, "missing blob '" + s.name + "'");
    }
}

std::string serialize_manifest(const WorkloadManifest& m) {
    json j;
    j["format"] = "ergmark-workload/1";
    j["workload_id"] = to_string(m.workload_id);
    j["precision"] = to_string(m.precision);
    j["iterations"] = m.iterations;
    json params = json::object();
    for (const auto& [k, v] : m.params) {
        if (kIntegerParams.count(k) && v == std::floor(v) && std::abs(v) < 9.0e15) {
            params[k] = static_cast<std::int64_t>(v);
        } else {
            params[k] = v;
        }
    }
    j["params"] = params;
    json blobs = json::array();
    for (const auto& b : m.blob_refs) {
        blobs.push_back({{"name", b.name},
                         {"dtype", to_string(b.dtype)},
                         {"shape", b.shape},
                         {"file", b.file},
                         {"fnv1a64", to_hex(b.checksum)}});
    }
    j["blobs"] = blobs;
    return j.dump(2) + "\n";
}

namespace {

std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(ErrorKind::io, "missing file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_bytes(const std::filesystem::path& p, std::span<const std::byte> bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + p.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io, "short write to " + p.string());
}

WorkloadManifest parse_manifest(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::validation, "malformed manifest " + origin + ": " + e.what());
    }
    try {
        WorkloadManifest m;
        if (j.value("format", std::string{}) != "ergmark-workload/1") {
            fail(ErrorKind::validation, "manifest " + origin + " has an unknown format tag");
        }
        m.workload_id = workload_id_from_string(j.at("workload_id").get<std::string>());
        m.precision = precision_from_string(j.at("precision").get<std::string>());
        const auto& it = j.at("iterations");
        if (!it.is_number_integer() || it.get<std::int64_t>() < 1) {
            fail(ErrorKind::validation, "iterations must be a positive integer");
        }
        m.iterations = it.get<std::size_t>();
        for (const auto& [k, v] : j.at("params").items()) {
            if (!v.is_number()) fail(ErrorKind::validation, "parameter " + k + " is not a number");
            m.params[k] = v.get<double>();
        }
        for (const auto& b : j.at("blobs")) {
            BlobRef ref;
            ref.name = b.at("name").get<std::string>();
            ref.dtype = dtype_from_string(b.at("dtype").get<std::string>());
            for (const auto& d : b.at("shape")) {
                if (!d.is_number_unsigned()) fail(ErrorKind::validation, "blob '" + ref.name + "' has a bad shape");
                ref.shape.push_back(d.get<std::size_t>());
            }
            ref.file = b.at("file").get<std::string>();
            ref.checksum = parse_hex64(b.at("fnv1a64").get<std::string>());
            m.blob_refs.push_back(std::move(ref));
        }
        return m;
    } catch (const json::exception& e) {
        fail(ErrorKind::validation, "malformed manifest " + origin + ": " + e.what());
    }
}

}  // namespace

Workload read_workload(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::is_directory(path) ? path : path.parent_path();
    const fs::path manifest_path = fs::is_directory(path) ? path / kManifestFile : path;
    if (!fs::exists(manifest_path)) fail(ErrorKind::io, "missing file: " + manifest_path.string());

    const std::string text = read_text(manifest_path);
    const fs::path sum_path = dir / kChecksumFile;
    if (!fs::exists(sum_path)) fail(ErrorKind::io, "missing file: " + sum_path.string());
    std::string stored = read_text(sum_path);
    while (!stored.empty() && std::isspace(static_cast<unsigned char>(stored.back()))) stored.pop_back();
    const std::uint64_t hash = fnv1a64(text);
    if (parse_hex64(stored) != hash) {
        fail(ErrorKind::validation, "checksum mismatch for " + manifest_path.string() + ": stored " + stored +
                                        ", computed " + to_hex(hash));
    }

    Workload w;
    w.manifest = parse_manifest(text, manifest_path.string());
    w.manifest_hash = hash;
    validate_manifest(w.manifest);

    for (const auto& ref : w.manifest.blob_refs) {
        if (ref.file != ref.name + ".bin") {
            fail(ErrorKind::validation, "blob '" + ref.name + "' must be stored as " + ref.name + ".bin");
        }
        const std::string raw = read_text(dir / ref.file);
        DataBlob b;
        b.name = ref.name;
        b.dtype = ref.dtype;
        b.shape = ref.shape;
        b.payload.resize(raw.size());
        std::memcpy(b.payload.data(), raw.data(), raw.size());
        b.validate();
        if (fnv1a64(std::span<const std::byte>(b.payload)) != ref.checksum) {
            fail(ErrorKind::validation, "checksum mismatch for blob '" + ref.name + "'");
        }
        w.blobs.push_back(std::move(b));
    }
    return w;
}

std::uint64_t write_workload(const WorkloadManifest& manifest, const std::vector<DataBlob>& blobs,
                             const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    WorkloadManifest m = manifest;
    m.blob_refs.clear();
    for (const auto& b : blobs) {
        b.validate();
        m.blob_refs.push_back({b.name, b.dtype, b.shape, b.name + ".bin",
                               fnv1a64(std::span<const std::byte>(b.payload))});
    }
    validate_manifest(m);

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
    for (const auto& b : blobs) write_bytes(dir / (b.name + ".bin"), b.payload);
    const std::string text = serialize_manifest(m);
    write_bytes(dir / kManifestFile, std::as_bytes(std::span(text.data(), text.size())));
    const std::uint64_t hash = fnv1a64(text);
    const std::string sum = to_hex(hash) + "\n";
    write_bytes(dir / kChecksumFile, std::as_bytes(std::span(sum.data(), sum.size())));
    return hash;
}

}  // namespace ergmark
