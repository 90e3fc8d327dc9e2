#include "ergmark/reference.hpp"

#include <algorithm>
#include <cmath>

namespace ergmark::reference {

Image2D median_filter(const Image2D& image, std::size_t n) {
    const auto w = static_cast<std::ptrdiff_t>(image.width);
    const auto h = static_cast<std::ptrdiff_t>(image.height);
    const auto half = static_cast<std::ptrdiff_t>(n / 2);
    Image2D out(image.width, image.height);
    std::vector<std::uint16_t> window;
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            window.clear();
            for (std::ptrdiff_t dr = -half; dr <= half; ++dr) {
                for (std::ptrdiff_t dc = -half; dc <= half; ++dc) {
                    const auto rr = std::clamp<std::ptrdiff_t>(r + dr, 0, h - 1);
                    const auto cc = std::clamp<std::ptrdiff_t>(c + dc, 0, w - 1);
                    window.push_back(image.pixels[static_cast<std::size_t>(rr * w + cc)]);
                }
            }
            std::sort(window.begin(), window.end());
            out.pixels[static_cast<std::size_t>(r * w + c)] = window[window.size() / 2];
        }
    }
    return out;
}

template <typename T>
long double dot(std::span<const T> x, std::span<const T> y) {
    long double sum = 0.0L;
    long double comp = 0.0L;
    for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
        const long double v = static_cast<long double>(x[i]) * static_cast<long double>(y[i]) - comp;
        const long double t = sum + v;
        comp = (t - sum) - v;
        sum = t;
    }
    return sum;
}

template long double dot<float>(std::span<const float>, std::span<const float>);
template long double dot<double>(std::span<const double>, std::span<const double>);

std::vector<double> cross_correlation(std::span<const float> x, std::span<const float> y,
                                      std::ptrdiff_t lo, std::ptrdiff_t hi, CorrelationMode mode) {
    std::vector<double> out;
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    const auto m = static_cast<std::ptrdiff_t>(y.size());
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
        long double s = 0.0L;
        long double xx = 0.0L;
        long double yy = 0.0L;
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const std::ptrdiff_t j = i + k;
            if (j < 0 || j >= m) continue;
            const long double a = x[static_cast<std::size_t>(i)];
            const long double b = y[static_cast<std::size_t>(j)];
            s += a * b;
            xx += a * a;
            yy += b * b;
        }
        if (mode == CorrelationMode::normalized) {
            out.push_back(xx == 0.0L || yy == 0.0L ? 0.0 : static_cast<double>(s / std::sqrt(xx * yy)));
        } else {
            out.push_back(static_cast<double>(s));
        }
    }
    return out;
}

}  // namespace ergmark::reference
