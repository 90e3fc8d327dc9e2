#pragma once

#include "ergmark/backend.hpp"
#include "ergmark/error.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ergmark {

// Three-stage, third-order strong-stability-preserving Runge-Kutta in
// Shu-Osher form:
//   u1 = u + h L(u)
//   u2 = 3/4 u + 1/4 (u1 + h L(u1))
//   u  = 1/3 u + 2/3 (u2 + h L(u2))
// Rhs is callable as rhs(std::span<const Real> in, std::span<Real> out).
// Stage buffers are owned by the stepper, so one stepper per run.
template <typename Real>
class Ssprk33 {
public:
    explicit Ssprk33(std::size_t size) : u1_(size), u2_(size), rhs_(size) {}

    std::size_t size() const noexcept { return u1_.size(); }

    template <typename Rhs>
    void step(std::span<Real> u, double h, Rhs&& rhs, Executor& executor) {
        if (u.size() != size()) fail(ErrorKind::usage, "ssprk33: state size mismatch");
        const Real hr = static_cast<Real>(h);
        const Real three_quarters = Real(3) / Real(4);
        const Real quarter = Real(1) / Real(4);
        const Real third = Real(1) / Real(3);
        const Real two_thirds = Real(2) / Real(3);

        rhs(std::span<const Real>(u), std::span<Real>(rhs_));
        combine(executor, 1, [&](std::size_t i) { return u[i] + hr * rhs_[i]; }, u1_);

        rhs(std::span<const Real>(u1_), std::span<Real>(rhs_));
        combine(executor, 2,
                [&](std::size_t i) { return three_quarters * u[i] + quarter * (u1_[i] + hr * rhs_[i]); },
                u2_);

        rhs(std::span<const Real>(u2_), std::span<Real>(rhs_));
        combine(executor, 3,
                [&](std::size_t i) { return third * u[i] + two_thirds * (u2_[i] + hr * rhs_[i]); },
                u);
    }

private:
    template <typename Expr, typename Out>
    void combine(Executor& executor, int stage, Expr&& expr, Out& out) {
        const std::size_t parts = executor.concurrency();
        std::vector<unsigned char> finite(parts, 1);
        executor.for_each_partition(size(), parts, [&](std::size_t p, IndexRange r) {
            bool ok = true;
            for (std::size_t i = r.begin; i < r.end; ++i) {
                const Real v = expr(i);
                ok = ok && std::isfinite(v);
                out[i] = v;
            }
            finite[p] = ok ? 1 : 0;
        });
        for (auto f : finite) {
            if (!f) fail(ErrorKind::numerical, "numerical blow-up in SSPRK(3,3) stage " + std::to_string(stage));
        }
    }

    std::vector<Real> u1_;
    std::vector<Real> u2_;
    std::vector<Real> rhs_;
};

}  // namespace ergmark
