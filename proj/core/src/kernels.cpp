#include "ergmark/kernels.hpp"

#include "ergmark/ssprk.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ergmark {

Image2D::Image2D(std::size_t w, std::size_t h, std::vector<std::uint16_t> px)
    : width(w), height(h), pixels(std::move(px)) {
    if (w == 0 || h == 0) fail(ErrorKind::usage, "image dimensions must be positive");
    if (pixels.size() != w * h) {
        fail(ErrorKind::usage, "image pixel count " + std::to_string(pixels.size()) +
                                   " does not match " + std::to_string(w) + "x" + std::to_string(h));
    }
}

Image2D::Image2D(std::size_t w, std::size_t h, std::uint16_t fill)
    : Image2D(w, h, std::vector<std::uint16_t>(w * h, fill)) {}

namespace {

void check_median_window(const Image2D& image, std::size_t n) {
    if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height) {
        fail(ErrorKind::usage, "median filter: malformed image");
    }
    if (n < 3 || n % 2 == 0) {
        fail(ErrorKind::usage, "median filter: window size must be odd and >= 3, got " + std::to_string(n));
    }
    const std::size_t limit = 2 * std::min(image.width, image.height) - 1;
    if (n > limit) {
        fail(ErrorKind::usage, "median filter: window " + std::to_string(n) + " exceeds limit " +
                                   std::to_string(limit) + " for this image");
    }
}

inline std::size_t clamp_index(std::ptrdiff_t i, std::size_t len) {
    if (i < 0) return 0;
    if (static_cast<std::size_t>(i) >= len) return len - 1;
    return static_cast<std::size_t>(i);
}

}  // namespace

void median_filter_pixels(const Image2D& image, std::size_t n, IndexRange pixels,
                          std::span<std::uint16_t> out) {
    const std::size_t w = image.width;
    const std::size_t h = image.height;
    const auto half = static_cast<std::ptrdiff_t>(n / 2);
    const std::size_t count = n * n;
    const std::size_t mid = count / 2;
    std::vector<std::uint16_t> window(count);

    for (std::size_t idx = pixels.begin; idx < pixels.end; ++idx) {
        const auto row = static_cast<std::ptrdiff_t>(idx / w);
        const auto col = static_cast<std::ptrdiff_t>(idx % w);
        std::size_t k = 0;
        for (std::ptrdiff_t dr = -half; dr <= half; ++dr) {
            const std::size_t rr = clamp_index(row + dr, h);
            const std::uint16_t* line = image.pixels.data() + rr * w;
            for (std::ptrdiff_t dc = -half; dc <= half; ++dc) {
                window[k++] = line[clamp_index(col + dc, w)];
            }
        }
        if (n <= 7) {
            for (std::size_t i = 1; i < count; ++i) {
                const std::uint16_t v = window[i];
                std::size_t j = i;
                while (j > 0 && window[j - 1] > v) {
                    window[j] = window[j - 1];
                    --j;
                }
                window[j] = v;
            }
        } else {
            std::nth_element(window.begin(), window.begin() + static_cast<std::ptrdiff_t>(mid), window.end());
        }
        out[idx] = window[mid];
    }
}

Image2D median_filter_2d(const Image2D& image, std::size_t n, Executor& executor) {
    check_median_window(image, n);
    Image2D out(image.width, image.height);
    std::span<std::uint16_t> dst(out.pixels);
    executor.parallel_for(image.pixels.size(), [&](std::size_t, IndexRange r) {
        median_filter_pixels(image, n, r, dst);
    });
    return out;
}

Image2D median_filter_2d(const Image2D& image, std::size_t n) {
    SerialExecutor serial;
    return median_filter_2d(image, n, serial);
}

template <typename T>
T dot_product(std::span<const T> x, std::span<const T> y, Executor& executor,
              std::size_t partitions) {
    if (x.size() != y.size()) {
        fail(ErrorKind::usage, "dot product: length mismatch (" + std::to_string(x.size()) + " vs " +
                                   std::to_string(y.size()) + ")");
    }
    if (x.empty()) fail(ErrorKind::usage, "dot product: empty input");
    if (partitions == 0) fail(ErrorKind::usage, "dot product: partition count must be positive");

    const std::size_t parts = std::min(partitions, x.size());
    std::vector<double> partial(parts, 0.0);
    executor.for_each_partition(x.size(), parts, [&](std::size_t p, IndexRange r) {
        double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
        std::size_t i = r.begin;
        for (; i + 4 <= r.end; i += 4) {
            acc0 += static_cast<double>(x[i]) * static_cast<double>(y[i]);
            acc1 += static_cast<double>(x[i + 1]) * static_cast<double>(y[i + 1]);
            acc2 += static_cast<double>(x[i + 2]) * static_cast<double>(y[i + 2]);
            acc3 += static_cast<double>(x[i + 3]) * static_cast<double>(y[i + 3]);
        }
        for (; i < r.end; ++i) acc0 += static_cast<double>(x[i]) * static_cast<double>(y[i]);
        partial[p] = (acc0 + acc1) + (acc2 + acc3);
    });
    double sum = 0.0;
    for (double v : partial) sum += v;
    return static_cast<T>(sum);
}

template <typename T>
T dot_product(std::span<const T> x, std::span<const T> y, Executor& executor) {
    return dot_product(x, y, executor, executor.concurrency());
}

template <typename T>
T dot_product(std::span<const T> x, std::span<const T> y) {
    SerialExecutor serial;
    return dot_product(x, y, serial, 1);
}

template float dot_product<float>(std::span<const float>, std::span<const float>, Executor&, std::size_t);
template double dot_product<double>(std::span<const double>, std::span<const double>, Executor&, std::size_t);
template float dot_product<float>(std::span<const float>, std::span<const float>, Executor&);
template double dot_product<double>(std::span<const double>, std::span<const double>, Executor&);
template float dot_product<float>(std::span<const float>, std::span<const float>);
template double dot_product<double>(std::span<const double>, std::span<const double>);

float correlate_lag(std::span<const float> x, std::span<const float> y, std::ptrdiff_t lag,
                    CorrelationMode mode) {
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    const auto m = static_cast<std::ptrdiff_t>(y.size());
    // i in [0, n) and i + lag in [0, m)
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -lag);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, m - lag);
    double sum = 0.0;
    double xx = 0.0;
    double yy = 0.0;
    for (std::ptrdiff_t i = lo; i < hi; ++i) {
        const double a = x[static_cast<std::size_t>(i)];
        const double b = y[static_cast<std::size_t>(i + lag)];
        sum += a * b;
        if (mode == CorrelationMode::normalized) {
            xx += a * a;
            yy += b * b;
        }
    }
    if (mode == CorrelationMode::raw) return static_cast<float>(sum);
    if (xx == 0.0 || yy == 0.0) return 0.0f;
    return static_cast<float>(sum / std::sqrt(xx * yy));
}

namespace {

void check_signals(const SignalPair& s) {
    if (s.x.empty() || s.y.empty()) fail(ErrorKind::usage, "cross-correlation: signals must be non-empty");
    auto finite = [](const std::vector<float>& v) {
        return std::all_of(v.begin(), v.end(), [](float f) { return std::isfinite(f); });
    };
    if (!finite(s.x) || !finite(s.y)) fail(ErrorKind::usage, "cross-correlation: non-finite sample");
}

}  // namespace

Correlation cross_correlate(const SignalPair& signals, CorrelationMode mode, Executor& executor,
                            std::optional<std::size_t> max_abs_lag) {
    check_signals(signals);
    const auto n = static_cast<std::ptrdiff_t>(signals.x.size());
    const auto m = static_cast<std::ptrdiff_t>(signals.y.size());
    std::ptrdiff_t lo = -(n - 1);
    std::ptrdiff_t hi = m - 1;
    if (max_abs_lag) {
        const auto cap = static_cast<std::ptrdiff_t>(*max_abs_lag);
        lo = std::max(lo, -cap);
        hi = std::min(hi, cap);
    }
    Correlation out;
    out.min_lag = lo;
    out.values.assign(static_cast<std::size_t>(hi - lo + 1), 0.0f);
    std::span<const float> x(signals.x);
    std::span<const float> y(signals.y);
    executor.parallel_for(out.values.size(), [&](std::size_t, IndexRange r) {
        for (std::size_t i = r.begin; i < r.end; ++i) {
            out.values[i] = correlate_lag(x, y, lo + static_cast<std::ptrdiff_t>(i), mode);
        }
    });
    return out;
}

Correlation cross_correlate(const SignalPair& signals, CorrelationMode mode) {
    SerialExecutor serial;
    return cross_correlate(signals, mode, serial);
}

double AdvectionGrid::cfl(double dt) const noexcept {
    return std::abs(vx) * dt / dx + std::abs(vy) * dt / dy;
}

template <typename Real>
GridState<Real> make_grid_state(std::size_t nx, std::size_t ny, double vx, double vy, double dt,
                                std::vector<Real> u, std::optional<double> dx,
                                std::optional<double> dy) {
    if (nx == 0 || ny == 0) fail(ErrorKind::usage, "grid dimensions must be positive");
    if (u.size() != nx * ny) {
        fail(ErrorKind::usage, "grid field has " + std::to_string(u.size()) + " values, expected " +
                                   std::to_string(nx * ny));
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::usage, "dt must be positive");
    GridState<Real> s;
    s.grid = AdvectionGrid{nx, ny, dx.value_or(1.0 / static_cast<double>(nx)),
                           dy.value_or(1.0 / static_cast<double>(ny)), vx, vy};
    if (!(s.grid.dx > 0.0) || !(s.grid.dy > 0.0)) fail(ErrorKind::usage, "grid spacing must be positive");
    if (!std::isfinite(vx) || !std::isfinite(vy)) fail(ErrorKind::usage, "velocity must be finite");
    const double cfl = s.grid.cfl(dt);
    if (cfl > 1.0) fail(ErrorKind::usage, "CFL number " + std::to_string(cfl) + " exceeds 1");
    if (!std::all_of(u.begin(), u.end(), [](Real v) { return std::isfinite(v); })) {
        fail(ErrorKind::usage, "initial field contains non-finite values");
    }
    s.dt = dt;
    s.u = std::move(u);
    return s;
}

template <typename Real>
void advect_rhs(const AdvectionGrid& grid, std::span<const Real> u, std::span<Real> out,
                Executor& executor) {
    const std::size_t nx = grid.nx;
    const std::size_t ny = grid.ny;
    // Upwind face fluxes: F = v+ * u_left + v- * u_right.
    const Real vxp = static_cast<Real>(std::max(grid.vx, 0.0));
    const Real vxm = static_cast<Real>(std::min(grid.vx, 0.0));
    const Real vyp = static_cast<Real>(std::max(grid.vy, 0.0));
    const Real vym = static_cast<Real>(std::min(grid.vy, 0.0));
    const Real inv_dx = static_cast<Real>(1.0 / grid.dx);
    const Real inv_dy = static_cast<Real>(1.0 / grid.dy);

    executor.parallel_for(ny, [&](std::size_t, IndexRange rows) {
        for (std::size_t j = rows.begin; j < rows.end; ++j) {
            const std::size_t jm = (j == 0) ? ny - 1 : j - 1;
            const std::size_t jp = (j + 1 == ny) ? 0 : j + 1;
            const Real* row = u.data() + j * nx;
            const Real* below = u.data() + jm * nx;
            const Real* above = u.data() + jp * nx;
            Real* dst = out.data() + j * nx;
            for (std::size_t i = 0; i < nx; ++i) {
                const std::size_t im = (i == 0) ? nx - 1 : i - 1;
                const std::size_t ip = (i + 1 == nx) ? 0 : i + 1;
                const Real fx_east = vxp * row[i] + vxm * row[ip];
                const Real fx_west = vxp * row[im] + vxm * row[i];
                const Real fy_north = vyp * row[i] + vym * above[i];
                const Real fy_south = vyp * below[i] + vym * row[i];
                dst[i] = -((fx_east - fx_west) * inv_dx + (fy_north - fy_south) * inv_dy);
            }
        }
    });
}

template <typename Real>
std::vector<Real> advect_rhs(const GridState<Real>& state) {
    std::vector<Real> out(state.u.size());
    SerialExecutor serial;
    advect_rhs<Real>(state.grid, state.u, out, serial);
    return out;
}

namespace {

template <typename Real>
void advance(GridState<Real>& state, Ssprk33<Real>& stepper, Executor& executor) {
    stepper.step(std::span<Real>(state.u), state.dt,
                 [&](std::span<const Real> in, std::span<Real> out) {
                     advect_rhs<Real>(state.grid, in, out, executor);
                 },
                 executor);
    state.t += state.dt;
}

}  // namespace

template <typename Real>
void ssprk33_advect_step(GridState<Real>& state, Executor& executor) {
    Ssprk33<Real> stepper(state.u.size());
    advance(state, stepper, executor);
}

template <typename Real>
void run_simulation(GridState<Real>& state, std::size_t steps, Executor& executor,
                    std::vector<std::int64_t>* step_ns) {
    if (steps == 0) fail(ErrorKind::usage, "simulation needs at least one step");
    Ssprk33<Real> stepper(state.u.size());
    if (step_ns) step_ns->reserve(step_ns->size() + steps);
    for (std::size_t s = 0; s < steps; ++s) {
        const auto t0 = step_ns ? monotonic_now_ns() : 0;
        try {
            advance(state, stepper, executor);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::numerical) throw;
            fail(ErrorKind::numerical, std::string(e.what()) + " at step " + std::to_string(s));
        }
        if (step_ns) step_ns->push_back(monotonic_now_ns() - t0);
    }
}

template <typename Real>
double total_mass(std::span<const Real> u) {
    long double sum = 0.0L;
    long double comp = 0.0L;
    for (Real v : u) {
        const long double y = static_cast<long double>(v) - comp;
        const long double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return static_cast<double>(sum);
}

#define ERGMARK_INSTANTIATE_GRID(Real)                                                          \
    template GridState<Real> make_grid_state<Real>(std::size_t, std::size_t, double, double,    \
                                                   double, std::vector<Real>,                   \
                                                   std::optional<double>, std::optional<double>); \
    template void advect_rhs<Real>(const AdvectionGrid&, std::span<const Real>, std::span<Real>, \
                                   Executor&);                                                  \
    template std::vector<Real> advect_rhs<Real>(const GridState<Real>&);                        \
    template void ssprk33_advect_step<Real>(GridState<Real>&, Executor&);                       \
    template void run_simulation<Real>(GridState<Real>&, std::size_t, Executor&,                \
                                       std::vector<std::int64_t>*);                             \
    template double total_mass<Real>(std::span<const Real>);

ERGMARK_INSTANTIATE_GRID(float)
ERGMARK_INSTANTIATE_GRID(double)

#undef ERGMARK_INSTANTIATE_GRID

}  // namespace ergmark
