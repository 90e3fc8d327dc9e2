#pragma once

#include "ergmark/error.hpp"

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ergmark {

enum class WorkloadId { median2d, dot, xcorr, rk2d };
enum class Precision { int16, f32, f64 };
enum class DType { u16, f32, f64 };

const char* to_string(WorkloadId id);
const char* to_string(Precision p);
const char* to_string(DType t);
WorkloadId workload_id_from_string(const std::string& text);
Precision precision_from_string(const std::string& text);
DType dtype_from_string(const std::string& text);

std::size_t dtype_size(DType t);
DType dtype_for(Precision p);

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<std::uint16_t>() { return DType::u16; }
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

// Raw little-endian array of rank 1 or 2.
struct DataBlob {
    std::string name;
    DType dtype = DType::f32;
    std::vector<std::size_t> shape;
    std::vector<std::byte> payload;

    std::size_t element_count() const noexcept;

    template <typename T>
    static DataBlob from_values(std::string name, std::vector<std::size_t> shape, std::span<const T> values);

    // Copies the payload out; the dtype must match T exactly.
    template <typename T>
    std::vector<T> values() const;

    // Throws when the payload size disagrees with shape x dtype or the rank is not 1 or 2.
    void validate() const;

    bool operator==(const DataBlob&) const = default;
};

struct BlobRef {
    std::string name;
    DType dtype = DType::f32;
    std::vector<std::size_t> shape;
    std::string file;
    std::uint64_t checksum = 0;

    bool operator==(const BlobRef&) const = default;
};

struct WorkloadManifest {
    WorkloadId workload_id = WorkloadId::dot;
    Precision precision = Precision::f32;
    std::map<std::string, double> params;
    std::size_t iterations = 1;
    std::vector<BlobRef> blob_refs;

    double param(const std::string& key) const;
    std::size_t size_param(const std::string& key) const;

    bool operator==(const WorkloadManifest&) const = default;
};

struct Workload {
    WorkloadManifest manifest;
    std::vector<DataBlob> blobs;
    std::uint64_t manifest_hash = 0;  // FNV-1a of the workload.json bytes

    const DataBlob& blob(const std::string& name) const;
};

// Mandatory parameter keys, sorted.
std::vector<std::string> required_params(WorkloadId id);
bool precision_supported(WorkloadId id, Precision p);

struct BlobSpec {
    std::string name;
    DType dtype;
    std::vector<std::size_t> shape;
};

// Blobs a manifest with these params must carry. Params must already be complete.
std::vector<BlobSpec> required_blobs(const WorkloadManifest& manifest);

// Exhaustive manifest check (ids, precision, params, iterations, blob refs).
void validate_manifest(const WorkloadManifest& manifest);

inline constexpr const char* kManifestFile = "workload.json";
inline constexpr const char* kChecksumFile = "workload.fnv1a64";

// `path` is a container directory or its workload.json.
Workload read_workload(const std::filesystem::path& path);

// Writes workload.json, the checksum sidecar and one <name>.bin per blob.
// blob_refs are derived from `blobs`; returns the manifest hash.
std::uint64_t write_workload(const WorkloadManifest& manifest, const std::vector<DataBlob>& blobs,
                             const std::filesystem::path& dir);

// Canonical manifest text, as written to workload.json.
std::string serialize_manifest(const WorkloadManifest& manifest);

// ---------------------------------------------------------------------------

namespace detail {
void to_little_endian(std::span<std::byte> bytes, std::size_t elem_size);
}

template <typename T>
DataBlob DataBlob::from_values(std::string name, std::vector<std::size_t> shape, std::span<const T> values) {
    DataBlob b;
    b.name = std::move(name);
    b.dtype = dtype_of<T>();
    b.shape = std::move(shape);
    b.payload.resize(values.size_bytes());
    if (!values.empty()) std::memcpy(b.payload.data(), values.data(), values.size_bytes());
    detail::to_little_endian(b.payload, sizeof(T));
    b.validate();
    return b;
}

template <typename T>
std::vector<T> DataBlob::values() const {
    if (dtype != dtype_of<T>()) {
        fail(ErrorKind::validation, "blob '" + name + "' holds " + to_string(dtype) + ", requested " +
                                        to_string(dtype_of<T>()));
    }
    std::vector<std::byte> bytes = payload;
    detail::to_little_endian(bytes, sizeof(T));  // the swap is its own inverse
    std::vector<T> out(bytes.size() / sizeof(T));
    if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

}  // namespace ergmark
