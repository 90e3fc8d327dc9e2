#pragma once

#include "ergmark/error.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ergmark {

enum class DeviceKind { cpu_host, gpu_runtime, other };

const char* to_string(DeviceKind kind);
DeviceKind device_kind_from_string(const std::string& text);

struct DeviceDescriptor {
    std::string id;
    DeviceKind kind = DeviceKind::cpu_host;
    std::string name;
    std::size_t worker_count = 1;
    bool supports_f64 = true;

    bool operator==(const DeviceDescriptor&) const = default;
};

// Times are nanoseconds on the monotonic clock. kernel_ns is the sum of
// per-iteration dispatch-to-completion times; transfer_ns is always zero on
// the host backend.
struct TimingRecord {
    std::int64_t kernel_ns = 0;
    std::int64_t transfer_ns = 0;
    std::int64_t wall_ns = 0;
    std::int64_t iterations = 0;

    std::int64_t time_to_solution_ns() const noexcept { return kernel_ns + transfer_ns; }
    bool operator==(const TimingRecord&) const = default;
};

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    bool operator==(const IndexRange&) const = default;
};

// 1D or 2D index space, linearized row-major (x fastest).
struct Extent {
    std::size_t x = 0;
    std::size_t y = 1;

    std::size_t size() const noexcept { return x * y; }
};

// Contiguous blocks; the first (count % parts) blocks get one extra index.
// Returns min(count, parts) non-empty blocks.
std::vector<IndexRange> partition_range(std::size_t count, std::size_t parts);

class DispatchError : public Error {
public:
    DispatchError(IndexRange failed, const std::string& what)
        : Error(ErrorKind::dispatch, what), failed_(failed) {}

    IndexRange failed_range() const noexcept { return failed_; }

private:
    IndexRange failed_;
};

class Executor {
public:
    using PartitionFn = std::function<void(std::size_t part, IndexRange range)>;

    virtual ~Executor() = default;

    virtual std::size_t concurrency() const noexcept = 0;

    // Splits [0, count) with partition_range(count, parts) and runs fn once per
    // block. Returns after every block has completed. A throwing block is
    // rethrown as DispatchError carrying its range.
    virtual void for_each_partition(std::size_t count, std::size_t parts,
                                    const PartitionFn& fn) = 0;

    void parallel_for(std::size_t count, const PartitionFn& fn) {
        for_each_partition(count, concurrency(), fn);
    }
};

class SerialExecutor final : public Executor {
public:
    std::size_t concurrency() const noexcept override { return 1; }
    void for_each_partition(std::size_t count, std::size_t parts,
                            const PartitionFn& fn) override;
};

// Persistent pool. Partition p always runs on worker p % workers; worker 0 is
// the calling thread.
class ThreadPool final : public Executor {
public:
    explicit ThreadPool(std::size_t workers);
    ~ThreadPool() override;

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    std::size_t concurrency() const noexcept override;
    void for_each_partition(std::size_t count, std::size_t parts,
                            const PartitionFn& fn) override;

private:
    struct State;
    std::unique_ptr<State> state_;
};

struct DeviceOptions {
    std::optional<std::size_t> worker_count;
};

std::size_t hardware_threads();

// Always returns the host device first. Runtime devices would follow when a
// runtime backend is compiled in; none is in this build.
std::vector<DeviceDescriptor> enumerate_devices(const DeviceOptions& options = {});

const DeviceDescriptor& find_device(const std::vector<DeviceDescriptor>& devices,
                                    const std::string& id);

std::unique_ptr<Executor> open_device(const DeviceDescriptor& device);

std::int64_t monotonic_now_ns();

// One parallel region over `extent`, timed with a completion barrier.
TimingRecord dispatch(Executor& executor, Extent extent,
                      const std::function<void(IndexRange)>& kernel);

// Runs body(i) for i in [0, iterations) back to back; kernel_ns is the sum of
// the individual iteration times, wall_ns covers the whole loop.
TimingRecord time_iterations(std::size_t iterations,
                             const std::function<void(std::size_t)>& body);

}  // namespace ergmark
