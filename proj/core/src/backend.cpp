#include "ergmark/backend.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

namespace ergmark {

const char* to_string(DeviceKind kind) {
    switch (kind) {
        case DeviceKind::cpu_host: return "cpu_host";
        case DeviceKind::gpu_runtime: return "gpu_runtime";
        case DeviceKind::other: return "other";
    }
    return "other";
}

DeviceKind device_kind_from_string(const std::string& text) {
    if (text == "cpu_host") return DeviceKind::cpu_host;
    if (text == "gpu_runtime") return DeviceKind::gpu_runtime;
    if (text == "other") return DeviceKind::other;
    fail(ErrorKind::validation, "unknown device kind '" + text + "'");
}

std::vector<IndexRange> partition_range(std::size_t count, std::size_t parts) {
    std::vector<IndexRange> out;
    if (count == 0 || parts == 0) return out;
    parts = std::min(parts, count);
    const std::size_t base = count / parts;
    const std::size_t extra = count % parts;
    out.reserve(parts);
    std::size_t begin = 0;
    for (std::size_t p = 0; p < parts; ++p) {
        const std::size_t len = base + (p < extra ? 1 : 0);
        out.push_back({begin, begin + len});
        begin += len;
    }
    return out;
}

namespace {

std::string describe_failure(IndexRange r, const std::exception_ptr& ep) {
    std::string msg = "kernel failed on index range [" + std::to_string(r.begin) + ", " +
                      std::to_string(r.end) + ")";
    try {
        std::rethrow_exception(ep);
    } catch (const std::exception& e) {
        msg += ": ";
        msg += e.what();
    } catch (...) {
        msg += ": unknown exception";
    }
    return msg;
}

}  // namespace

void SerialExecutor::for_each_partition(std::size_t count, std::size_t parts,
                                        const PartitionFn& fn) {
    const auto ranges = partition_range(count, parts);
    for (std::size_t p = 0; p < ranges.size(); ++p) {
        try {
            fn(p, ranges[p]);
        } catch (...) {
            throw DispatchError(ranges[p], describe_failure(ranges[p], std::current_exception()));
        }
    }
}

struct ThreadPool::State {
    std::size_t workers = 1;
    std::vector<std::thread> threads;

    std::mutex mutex;
    std::condition_variable start_cv;
    std::condition_variable done_cv;
    std::uint64_t generation = 0;
    std::size_t pending = 0;
    bool stopping = false;

    // Current job; valid while pending > 0.
    const PartitionFn* fn = nullptr;
    std::vector<IndexRange> ranges;

    std::exception_ptr failure;
    IndexRange failed_range{};

    void run_share(std::size_t worker) {
        for (std::size_t p = worker; p < ranges.size(); p += workers) {
            try {
                (*fn)(p, ranges[p]);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (!failure) {
                    failure = std::current_exception();
                    failed_range = ranges[p];
                }
            }
        }
    }

    void worker_loop(std::size_t worker) {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock lock(mutex);
                start_cv.wait(lock, [&] { return stopping || generation != seen; });
                if (stopping) return;
                seen = generation;
            }
            run_share(worker);
            {
                std::lock_guard lock(mutex);
                if (--pending == 0) done_cv.notify_one();
            }
        }
    }
};

ThreadPool::ThreadPool(std::size_t workers) : state_(std::make_unique<State>()) {
    if (workers == 0) fail(ErrorKind::usage, "thread pool needs at least one worker");
    state_->workers = workers;
    state_->threads.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
        state_->threads.emplace_back([s = state_.get(), w] { s->worker_loop(w); });
    }
}

ThreadPool::~ThreadPool() {
    {
        std::lock_guard lock(state_->mutex);
        state_->stopping = true;
    }
    state_->start_cv.notify_all();
    for (auto& t : state_->threads) t.join();
}

std::size_t ThreadPool::concurrency() const noexcept { return state_->workers; }

void ThreadPool::for_each_partition(std::size_t count, std::size_t parts,
                                    const PartitionFn& fn) {
    auto& s = *state_;
    auto ranges = partition_range(count, parts);
    if (ranges.empty()) return;

    // Not enough work for a second worker: stay on the caller.
    if (s.workers == 1 || ranges.size() == 1) {
        SerialExecutor{}.for_each_partition(count, parts, fn);
        return;
    }

    {
        std::lock_guard lock(s.mutex);
        s.fn = &fn;
        s.ranges = std::move(ranges);
        s.failure = nullptr;
        s.pending = s.workers - 1;
        ++s.generation;
    }
    s.start_cv.notify_all();
    s.run_share(0);
    {
        std::unique_lock lock(s.mutex);
        s.done_cv.wait(lock, [&] { return s.pending == 0; });
        s.fn = nullptr;
        if (s.failure) {
            auto ep = s.failure;
            s.failure = nullptr;
            throw DispatchError(s.failed_range, describe_failure(s.failed_range, ep));
        }
    }
}

std::size_t hardware_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

namespace {

std::string host_cpu_name() {
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("model name", 0) == 0) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                auto name = line.substr(colon + 1);
                name.erase(0, name.find_first_not_of(' '));
                if (!name.empty()) return name;
            }
        }
    }
    return "host CPU";
}

}  // namespace

std::vector<DeviceDescriptor> enumerate_devices(const DeviceOptions& options) {
    DeviceDescriptor host;
    host.id = "host";
    host.kind = DeviceKind::cpu_host;
    host.name = host_cpu_name();
    host.worker_count = options.worker_count.value_or(hardware_threads());
    if (host.worker_count == 0) fail(ErrorKind::usage, "worker count must be at least 1");
    host.supports_f64 = true;
    return {host};
}

const DeviceDescriptor& find_device(const std::vector<DeviceDescriptor>& devices,
                                    const std::string& id) {
    for (const auto& d : devices) {
        if (d.id == id) return d;
    }
    std::string known;
    for (const auto& d : devices) known += (known.empty() ? "" : ", ") + d.id;
    fail(ErrorKind::device, "unknown device '" + id + "' (available: " + known + ")");
}

std::unique_ptr<Executor> open_device(const DeviceDescriptor& device) {
    if (device.kind != DeviceKind::cpu_host) {
        fail(ErrorKind::device, "device '" + device.id + "' needs a runtime backend that is not built");
    }
    if (device.worker_count <= 1) return std::make_unique<SerialExecutor>();
    return std::make_unique<ThreadPool>(device.worker_count);
}

std::int64_t monotonic_now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

TimingRecord dispatch(Executor& executor, Extent extent,
                      const std::function<void(IndexRange)>& kernel) {
    if (extent.size() == 0) fail(ErrorKind::usage, "dispatch over an empty range");
    TimingRecord rec;
    rec.iterations = 1;
    const auto t0 = monotonic_now_ns();
    executor.parallel_for(extent.size(), [&](std::size_t, IndexRange r) { kernel(r); });
    const auto t1 = monotonic_now_ns();
    rec.kernel_ns = t1 - t0;
    rec.wall_ns = rec.kernel_ns;
    return rec;
}

TimingRecord time_iterations(std::size_t iterations,
                             const std::function<void(std::size_t)>& body) {
    if (iterations == 0) fail(ErrorKind::usage, "iterations must be at least 1");
    TimingRecord rec;
    rec.iterations = static_cast<std::int64_t>(iterations);
    const auto wall0 = monotonic_now_ns();
    for (std::size_t i = 0; i < iterations; ++i) {
        const auto t0 = monotonic_now_ns();
        body(i);
        rec.kernel_ns += monotonic_now_ns() - t0;
    }
    rec.wall_ns = std::max(monotonic_now_ns() - wall0, rec.kernel_ns);
    return rec;
}

}  // namespace ergmark
