#pragma once

#include "ergmark/backend.hpp"
#include "ergmark/workload.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

namespace ergmark {

enum class Scale { desk, paper };

const char* to_string(Scale s);
Scale scale_from_string(const std::string& text);

struct GenerateOptions {
    WorkloadId id = WorkloadId::dot;
    Scale scale = Scale::desk;
    std::uint64_t seed = 42;
    std::optional<Precision> precision;  // default: int16 for median2d, f32 otherwise
};

struct GeneratedWorkload {
    WorkloadManifest manifest;  // blob_refs empty until written or materialized
    std::vector<DataBlob> blobs;
};

// Canonical container contents; identical options give identical bytes.
GeneratedWorkload generate_workload(const GenerateOptions& options);

// In-memory Workload with blob refs and the manifest hash filled in, as if
// written and read back.
Workload materialize(const GeneratedWorkload& generated);

// One loaded test case, ready to execute back to back on the same input.
class WorkloadInstance {
public:
    virtual ~WorkloadInstance() = default;

    // One full execution of the test case (one frame, one dot product, one
    // correlation sweep, one simulation of `steps` steps).
    virtual void run_iteration(Executor& executor) = 0;

    // FNV-1a of the output of the latest iteration.
    virtual std::uint64_t output_checksum() const = 0;

    // Checks the latest output against a serial reference. Throws Error on mismatch.
    virtual void verify() const = 0;

    virtual Extent extent() const = 0;
};

std::unique_ptr<WorkloadInstance> instantiate(const Workload& workload);

}  // namespace ergmark
