#pragma once

#include "ergmark/backend.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace ergmark {

// Single-channel 16-bit image, row-major.
struct Image2D {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint16_t> pixels;

    Image2D() = default;
    Image2D(std::size_t w, std::size_t h, std::vector<std::uint16_t> px);
    Image2D(std::size_t w, std::size_t h, std::uint16_t fill = 0);

    std::uint16_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
    bool operator==(const Image2D&) const = default;
};

// Median of the n x n window around each pixel, clamp-to-edge borders.
// Integer-only. n must be odd, >= 3, and <= 2 * min(width, height) - 1.
Image2D median_filter_2d(const Image2D& image, std::size_t n, Executor& executor);
Image2D median_filter_2d(const Image2D& image, std::size_t n);

// Per-pixel index space of the median filter: fills out.pixels[range].
void median_filter_pixels(const Image2D& image, std::size_t n, IndexRange pixels,
                          std::span<std::uint16_t> out);

// Two-phase reduction: one partial sum per partition (accumulated in double),
// then the partials are added in ascending partition order. The result only
// depends on the inputs and the partition count.
template <typename T>
T dot_product(std::span<const T> x, std::span<const T> y, Executor& executor,
              std::size_t partitions);
template <typename T>
T dot_product(std::span<const T> x, std::span<const T> y, Executor& executor);
template <typename T>
T dot_product(std::span<const T> x, std::span<const T> y);

enum class CorrelationMode { raw, normalized };

struct SignalPair {
    std::vector<float> x;
    std::vector<float> y;
};

// values[i] holds the lag min_lag + i, with r[k] = sum_i x[i] * y[i + k].
struct Correlation {
    std::ptrdiff_t min_lag = 0;
    std::vector<float> values;

    std::ptrdiff_t max_lag() const noexcept {
        return min_lag + static_cast<std::ptrdiff_t>(values.size()) - 1;
    }
    float at(std::ptrdiff_t lag) const { return values.at(static_cast<std::size_t>(lag - min_lag)); }
};

// Full lag range is [-(N-1), M-1]; max_abs_lag trims it symmetrically.
Correlation cross_correlate(const SignalPair& signals, CorrelationMode mode, Executor& executor,
                            std::optional<std::size_t> max_abs_lag = std::nullopt);
Correlation cross_correlate(const SignalPair& signals,
                            CorrelationMode mode = CorrelationMode::raw);

// Computes one lag; the unit of work of the per-lag index space.
float correlate_lag(std::span<const float> x, std::span<const float> y, std::ptrdiff_t lag,
                    CorrelationMode mode);

// Constant-velocity advection on a periodic nx x ny grid; u is stored with x
// fastest, u[j * nx + i].
struct AdvectionGrid {
    std::size_t nx = 0;
    std::size_t ny = 0;
    double dx = 1.0;
    double dy = 1.0;
    double vx = 0.0;
    double vy = 0.0;

    std::size_t cells() const noexcept { return nx * ny; }
    double cfl(double dt) const noexcept;
};

template <typename Real>
struct GridState {
    AdvectionGrid grid;
    double dt = 0.0;
    double t = 0.0;
    std::vector<Real> u;
};

// Validates shape, finiteness, dt > 0 and CFL <= 1. Unit square domain unless
// dx/dy are given.
template <typename Real>
GridState<Real> make_grid_state(std::size_t nx, std::size_t ny, double vx, double vy, double dt,
                                std::vector<Real> u, std::optional<double> dx = std::nullopt,
                                std::optional<double> dy = std::nullopt);

// First-order upwind flux-difference form of -(vx du/dx + vy du/dy) with
// periodic wraparound. Sums to zero over the grid up to roundoff.
template <typename Real>
void advect_rhs(const AdvectionGrid& grid, std::span<const Real> u, std::span<Real> out,
                Executor& executor);
template <typename Real>
std::vector<Real> advect_rhs(const GridState<Real>& state);

// Advances `steps` SSPRK(3,3) steps of the advection operator. step_ns, when
// non-null, receives one wall time per step.
template <typename Real>
void run_simulation(GridState<Real>& state, std::size_t steps, Executor& executor,
                    std::vector<std::int64_t>* step_ns = nullptr);
template <typename Real>
void ssprk33_advect_step(GridState<Real>& state, Executor& executor);

// Compensated sum in long double.
template <typename Real>
double total_mass(std::span<const Real> u);

}  // namespace ergmark
