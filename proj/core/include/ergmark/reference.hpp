#pragma once

#include "ergmark/kernels.hpp"

#include <span>
#include <vector>

namespace ergmark::reference {

// Straightforward serial versions used by `run --verify`. They share no code
// with the parallel kernels.

Image2D median_filter(const Image2D& image, std::size_t n);

// Kahan-compensated, accumulated in long double.
template <typename T>
long double dot(std::span<const T> x, std::span<const T> y);

// Full O(N*M) double loop over lags [lo, hi].
std::vector<double> cross_correlation(std::span<const float> x, std::span<const float> y,
                                      std::ptrdiff_t lo, std::ptrdiff_t hi, CorrelationMode mode);

}  // namespace ergmark::reference
