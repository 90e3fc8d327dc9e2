#include "ergmark/workloads.hpp"

#include "ergmark/checksum.hpp"
#include "ergmark/kernels.hpp"
#include "ergmark/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace ergmark {

const char* to_string(Scale s) { return s == Scale::desk ? "desk" : "paper"; }

Scale scale_from_string(const std::string& text) {
    if (text == "desk") return Scale::desk;
    if (text == "paper") return Scale::paper;
    fail(ErrorKind::usage, "unknown scale '" + text + "' (expected desk or paper)");
}

namespace {

// Uniform [0, 1) from the raw engine output, independent of the standard
// library's distribution implementations.
class Uniform {
public:
    explicit Uniform(std::uint64_t seed) : engine_(seed) {}

    double next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double between(double lo, double hi) { return lo + (hi - lo) * next(); }
    std::uint64_t bits() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

struct Preset {
    std::map<std::string, double> params;
    std::size_t iterations;
};

Preset preset_for(WorkloadId id, Scale scale) {
    const bool desk = scale == Scale::desk;
    switch (id) {
        case WorkloadId::median2d:
            if (desk) return {{{"width", 512}, {"height", 512}, {"window_n", 3}}, 60};
            return {{{"width", 3840}, {"height", 2160}, {"window_n", 3}}, 4000};
        case WorkloadId::dot:
            if (desk) return {{{"vector_len", 1 << 21}}, 1000};
            return {{{"vector_len", 1 << 24}}, 4000};
        case WorkloadId::xcorr:
            if (desk) return {{{"vector_len", 4096}, {"lag_range", 4095}}, 120};
            return {{{"vector_len", 16384}, {"lag_range", 16383}}, 1000};
        case WorkloadId::rk2d: {
            const double n = desk ? 256 : 1024;
            const double vx = 1.0;
            const double vy = 0.5;
            // CFL 0.5 on the unit square.
            const double dt = 0.5 / ((std::abs(vx) + std::abs(vy)) * n);
            if (desk) {
                return {{{"grid_nx", n}, {"grid_ny", n}, {"dt", dt}, {"steps", 100},
                         {"velocity_x", vx}, {"velocity_y", vy}},
                        20};
            }
            return {{{"grid_nx", n}, {"grid_ny", n}, {"dt", dt}, {"steps", 4000},
                     {"velocity_x", vx}, {"velocity_y", vy}},
                    1};
        }
    }
    return {};
}

Precision default_precision(WorkloadId id) {
    return id == WorkloadId::median2d ? Precision::int16 : Precision::f32;
}

template <typename Real>
std::vector<Real> gaussian_bump(std::size_t nx, std::size_t ny) {
    std::vector<Real> u(nx * ny);
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(nx) - 0.5;
            const double y = (static_cast<double>(j) + 0.5) / static_cast<double>(ny) - 0.5;
            u[j * nx + i] = static_cast<Real>(std::exp(-(x * x + y * y) / (2.0 * 0.08 * 0.08)));
        }
    }
    return u;
}

template <typename T>
std::vector<T> uniform_vector(Uniform& rng, std::size_t n) {
    std::vector<T> v(n);
    for (auto& e : v) e = static_cast<T>(rng.between(-1.0, 1.0));
    return v;
}

}  // namespace

GeneratedWorkload generate_workload(const GenerateOptions& options) {
    GeneratedWorkload g;
    const Preset preset = preset_for(options.id, options.scale);
    g.manifest.workload_id = options.id;
    g.manifest.precision = options.precision.value_or(default_precision(options.id));
    g.manifest.params = preset.params;
    g.manifest.iterations = preset.iterations;
    if (!precision_supported(options.id, g.manifest.precision)) {
        fail(ErrorKind::usage, std::string("precision unsupported for workload: ") + to_string(options.id) +
                                   " does not run in " + to_string(g.manifest.precision));
    }
    Uniform rng(options.seed);
    const auto& m = g.manifest;

    switch (options.id) {
        case WorkloadId::median2d: {
            const std::size_t w = m.size_param("width");
            const std::size_t h = m.size_param("height");
            std::vector<std::uint16_t> px(w * h);
            for (std::size_t r = 0; r < h; ++r) {
                for (std::size_t c = 0; c < w; ++c) {
                    // Smooth gradient plus salt-and-pepper style noise.
                    const auto base = static_cast<std::uint32_t>(2048.0 * (double(r) / h + double(c) / w));
                    const auto noise = static_cast<std::uint32_t>(rng.bits() % 512);
                    const bool impulse = rng.next() < 0.02;
                    px[r * w + c] = impulse ? std::uint16_t{65535} : static_cast<std::uint16_t>(base + noise);
                }
            }
            g.blobs.push_back(DataBlob::from_values<std::uint16_t>("image", {h, w}, px));
            break;
        }
        case WorkloadId::dot: {
            const std::size_t n = m.size_param("vector_len");
            if (m.precision == Precision::f64) {
                auto x = uniform_vector<double>(rng, n);
                auto y = uniform_vector<double>(rng, n);
                g.blobs.push_back(DataBlob::from_values<double>("x", {n}, x));
                g.blobs.push_back(DataBlob::from_values<double>("y", {n}, y));
            } else {
                auto x = uniform_vector<float>(rng, n);
                auto y = uniform_vector<float>(rng, n);
                g.blobs.push_back(DataBlob::from_values<float>("x", {n}, x));
                g.blobs.push_back(DataBlob::from_values<float>("y", {n}, y));
            }
            break;
        }
        case WorkloadId::xcorr: {
            const std::size_t n = m.size_param("vector_len");
            auto x = uniform_vector<float>(rng, n);
            // y is x delayed by a seeded shift plus noise.
            const std::size_t shift = static_cast<std::size_t>(rng.bits() % std::max<std::size_t>(n / 4, 1));
            std::vector<float> y(n);
            for (std::size_t i = 0; i < n; ++i) {
                const float src = i >= shift ? x[i - shift] : 0.0f;
                y[i] = src + static_cast<float>(0.1 * rng.between(-1.0, 1.0));
            }
            g.blobs.push_back(DataBlob::from_values<float>("x", {n}, x));
            g.blobs.push_back(DataBlob::from_values<float>("y", {n}, y));
            break;
        }
        case WorkloadId::rk2d: {
            const std::size_t nx = m.size_param("grid_nx");
            const std::size_t ny = m.size_param("grid_ny");
            if (m.precision == Precision::f64) {
                auto u = gaussian_bump<double>(nx, ny);
                g.blobs.push_back(DataBlob::from_values<double>("u0", {ny, nx}, u));
            } else {
                auto u = gaussian_bump<float>(nx, ny);
                g.blobs.push_back(DataBlob::from_values<float>("u0", {ny, nx}, u));
            }
            break;
        }
    }
    return g;
}

Workload materialize(const GeneratedWorkload& generated) {
    Workload w;
    w.manifest = generated.manifest;
    w.manifest.blob_refs.clear();
    for (const auto& b : generated.blobs) {
        b.validate();
        w.manifest.blob_refs.push_back({b.name, b.dtype, b.shape, b.name + ".bin",
                                        fnv1a64(std::span<const std::byte>(b.payload))});
    }
    validate_manifest(w.manifest);
    w.blobs = generated.blobs;
    w.manifest_hash = fnv1a64(serialize_manifest(w.manifest));
    return w;
}

namespace {

template <typename T>
std::uint64_t checksum_of(const std::vector<T>& v) {
    return fnv1a64_of(std::span<const T>(v));
}

class MedianInstance final : public WorkloadInstance {
public:
    explicit MedianInstance(const Workload& w)
        : n_(w.manifest.size_param("window_n")),
          input_(w.manifest.size_param("width"), w.manifest.size_param("height"),
                 w.blob("image").values<std::uint16_t>()) {}

    void run_iteration(Executor& ex) override { output_ = median_filter_2d(input_, n_, ex); }
    std::uint64_t output_checksum() const override { return checksum_of(output_.pixels); }
    Extent extent() const override { return {input_.width, input_.height}; }

    void verify() const override {
        if (!(reference::median_filter(input_, n_) == output_)) {
            fail(ErrorKind::numerical, "median2d output differs from the sort-based reference");
        }
    }

private:
    std::size_t n_;
    Image2D input_;
    Image2D output_;
};

template <typename T>
class DotInstance final : public WorkloadInstance {
public:
    explicit DotInstance(const Workload& w) : x_(w.blob("x").values<T>()), y_(w.blob("y").values<T>()) {}

    void run_iteration(Executor& ex) override {
        result_ = dot_product<T>(std::span<const T>(x_), std::span<const T>(y_), ex);
    }
    std::uint64_t output_checksum() const override {
        return fnv1a64_of(std::span<const T>(&result_, 1));
    }
    Extent extent() const override { return {x_.size()}; }

    void verify() const override {
        const long double ref = reference::dot<T>(x_, y_);
        long double scale = 0.0L;
        for (std::size_t i = 0; i < x_.size(); ++i) scale += std::abs(static_cast<long double>(x_[i]) * y_[i]);
        const long double err = std::abs(static_cast<long double>(result_) - ref);
        if (err > 1e-5L * std::max(std::abs(ref), scale * 1e-3L)) {
            std::ostringstream msg;
            msg << "dot output " << result_ << " differs from the compensated reference " << static_cast<double>(ref);
            fail(ErrorKind::numerical, msg.str());
        }
    }

private:
    std::vector<T> x_;
    std::vector<T> y_;
    T result_{};
};

class XcorrInstance final : public WorkloadInstance {
public:
    explicit XcorrInstance(const Workload& w) : lag_range_(w.manifest.size_param("lag_range")) {
        signals_.x = w.blob("x").values<float>();
        signals_.y = w.blob("y").values<float>();
    }

    void run_iteration(Executor& ex) override {
        output_ = cross_correlate(signals_, CorrelationMode::raw, ex, lag_range_);
    }
    std::uint64_t output_checksum() const override { return checksum_of(output_.values); }
    Extent extent() const override { return {output_.values.empty() ? 2 * lag_range_ + 1 : output_.values.size()}; }

    void verify() const override {
        const auto ref = reference::cross_correlation(signals_.x, signals_.y, output_.min_lag, output_.max_lag(),
                                                      CorrelationMode::raw);
        double peak = 0.0;
        double err = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i) {
            peak = std::max(peak, std::abs(ref[i]));
            err = std::max(err, std::abs(ref[i] - static_cast<double>(output_.values[i])));
        }
        if (ref.size() != output_.values.size() || err > 1e-5 * peak) {
            fail(ErrorKind::numerical, "xcorr output differs from the naive reference");
        }
    }

private:
    std::size_t lag_range_;
    SignalPair signals_;
    Correlation output_;
};

template <typename Real>
class AdvectionInstance final : public WorkloadInstance {
public:
    explicit AdvectionInstance(const Workload& w)
        : steps_(w.manifest.size_param("steps")),
          initial_(make_grid_state<Real>(w.manifest.size_param("grid_nx"), w.manifest.size_param("grid_ny"),
                                         w.manifest.param("velocity_x"), w.manifest.param("velocity_y"),
                                         w.manifest.param("dt"), w.blob("u0").values<Real>())),
          state_(initial_) {}

    void run_iteration(Executor& ex) override {
        state_ = initial_;
        run_simulation(state_, steps_, ex);
    }
    std::uint64_t output_checksum() const override { return checksum_of(state_.u); }
    Extent extent() const override { return {initial_.grid.nx, initial_.grid.ny}; }

    // Upwind with CFL <= 1 conserves mass and never leaves the initial range.
    void verify() const override {
        const double m0 = total_mass<Real>(initial_.u);
        const double m1 = total_mass<Real>(state_.u);
        const double tol = std::is_same_v<Real, double> ? 1e-10 : 1e-4;
        if (std::abs(m1 - m0) > tol * std::abs(m0)) {
            fail(ErrorKind::numerical, "rk2d lost mass beyond tolerance");
        }
        const auto [lo, hi] = std::minmax_element(initial_.u.begin(), initial_.u.end());
        const double slack = std::is_same_v<Real, double> ? 1e-12 : 1e-5;
        for (Real v : state_.u) {
            if (v < *lo - slack || v > *hi + slack) fail(ErrorKind::numerical, "rk2d output left the initial range");
        }
    }

private:
    std::size_t steps_;
    GridState<Real> initial_;
    GridState<Real> state_;
};

}  // namespace

std::unique_ptr<WorkloadInstance> instantiate(const Workload& workload) {
    const auto& m = workload.manifest;
    validate_manifest(m);
    switch (m.workload_id) {
        case WorkloadId::median2d: return std::make_unique<MedianInstance>(workload);
        case WorkloadId::dot:
            if (m.precision == Precision::f64) return std::make_unique<DotInstance<double>>(workload);
            return std::make_unique<DotInstance<float>>(workload);
        case WorkloadId::xcorr: return std::make_unique<XcorrInstance>(workload);
        case WorkloadId::rk2d:
            if (m.precision == Precision::f64) return std::make_unique<AdvectionInstance<double>>(workload);
            return std::make_unique<AdvectionInstance<float>>(workload);
    }
    fail(ErrorKind::validation, "unknown workload");
}

}  // namespace ergmark
