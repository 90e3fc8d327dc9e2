#include "ergmark/kernels.hpp"
#include "ergmark/ssprk.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace ergmark;

namespace {

// u' = lambda u, one component.
double step_linear(double u0, double lambda, double h) {
    SerialExecutor ex;
    Ssprk33<double> rk(1);
    std::vector<double> u{u0};
    rk.step(u, h, [&](std::span<const double> in, std::span<double> out) { out[0] = lambda * in[0]; }, ex);
    return u[0];
}

// Rotation u' = A u with A = [[0, 1], [-1, 0]], exact solution cos/sin.
double rotation_error(std::size_t steps, double t_end) {
    SerialExecutor ex;
    Ssprk33<double> rk(2);
    std::vector<double> u{1.0, 0.0};
    const double h = t_end / static_cast<double>(steps);
    auto rhs = [](std::span<const double> in, std::span<double> out) {
        out[0] = in[1];
        out[1] = -in[0];
    };
    for (std::size_t s = 0; s < steps; ++s) rk.step(u, h, rhs, ex);
    return std::hypot(u[0] - std::cos(t_end), u[1] + std::sin(t_end));
}

}  // namespace

TEST_CASE("hand-evaluated Shu-Osher stages for u' = -u, h = 0.1") {
    // Stages 0.9, 0.9525, then 1/3 + 2/3 * 0.85725.
    const double u1 = step_linear(1.0, -1.0, 0.1);
    CHECK(u1 == doctest::Approx(0.9048333333333333).epsilon(1e-15));
}

TEST_CASE("zero operator leaves the state unchanged and advances time") {
    SerialExecutor ex;
    Ssprk33<double> rk(3);
    std::vector<double> u{1.5, -2.0, 0.25};
    const auto before = u;
    rk.step(u, 0.3, [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); }, ex);
    CHECK(u == before);

    auto st = make_grid_state<double>(4, 4, 0.0, 0.0, 0.25, std::vector<double>(16, 2.0));
    const auto u0 = st.u;
    ssprk33_advect_step(st, ex);
    CHECK(st.u == u0);
    CHECK(st.t == 0.25);
}

TEST_CASE("stability function within 4 ulp") {
    std::uint64_t worst = 0;
    for (int k = 0; k <= 200; ++k) {
        const double z = -1.0 + 1.5 * k / 200.0;  // [-1, 0.5]
        const long double zl = z;
        const double expected = static_cast<double>(1.0L + zl + zl * zl / 2 + zl * zl * zl / 6);
        worst = std::max(worst, oracle::ulp_distance(step_linear(1.0, z, 1.0), expected));
    }
    CHECK(worst <= 4);
}

TEST_CASE("temporal order is three") {
    std::vector<double> errors;
    for (std::size_t steps : {20u, 40u, 80u, 160u, 320u}) errors.push_back(rotation_error(steps, 2.0));
    for (std::size_t i = 1; i < errors.size(); ++i) {
        const double order = std::log2(errors[i - 1] / errors[i]);
        CHECK(order >= 2.9);
        CHECK(order <= 3.1);
    }
}

TEST_CASE("non-finite stage is reported as blow-up") {
    SerialExecutor ex;
    Ssprk33<double> rk(1);
    std::vector<double> u{1.0};
    test::check_error(ErrorKind::numerical, "numerical blow-up", [&] {
        rk.step(u, 1.0, [](std::span<const double>, std::span<double> out) { out[0] = INFINITY; }, ex);
    });
}

TEST_CASE("f32 and f64 steppers are the same algorithm") {
    SerialExecutor ex;
    Ssprk33<float> rf(1);
    std::vector<float> uf{1.0f};
    rf.step(uf, 0.1, [](std::span<const float> in, std::span<float> out) { out[0] = -in[0]; }, ex);
    CHECK(uf[0] == doctest::Approx(0.9048333).epsilon(1e-6));
}
