#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bilevel/grid.hpp"
#include "bilevel/mosco.hpp"
#include "bilevel/util.hpp"
#include "oracles.hpp"

using namespace bilevel;

namespace {
const double kPi = 3.14159265358979323846;

GridSignal ramp(const GridPtr& g) {
    return GridSignal::from_function(g, [](double x) { return x; });
}
}  // namespace

TEST_CASE("l2_norm_sq: constants, sine, zero") {
    auto g = make_grid(Interval{0.0, kPi}, 1024);
    CHECK(l2_norm_sq(GridSignal::constant(g, 1.0)) == doctest::Approx(kPi).epsilon(1e-12));
    const GridSignal s = GridSignal::from_function(g, [](double x) { return std::sin(x); });
    CHECK(l2_norm_sq(s) == doctest::Approx(kPi / 2.0).epsilon(1e-4));
    CHECK(l2_norm_sq(GridSignal::constant(g, 0.0)) == 0.0);
}

TEST_CASE("l2_norm_sq converges at second order on sine modes") {
    // On (0,1) the mode is not symmetry-aligned, so the midpoint error is a
    // clean O(h^2): int_0^1 sin^2 = 1/2 - sin(2)/4.
    const double exact = 0.5 - std::sin(2.0) / 4.0;
    double prev_err = 0.0;
    for (int k = 0; k < 3; ++k) {
        const int n = 64 << k;
        auto g = make_grid(Interval{0.0, 1.0}, n);
        const GridSignal s = GridSignal::from_function(g, [](double x) { return std::sin(x); });
        const double err = std::abs(l2_norm_sq(s) - exact);
        if (k > 0) CHECK(prev_err / err == doctest::Approx(4.0).epsilon(0.15));
        prev_err = err;
    }
}

TEST_CASE("l2_inner: symmetry, orthogonality, zero, mismatch") {
    auto g = make_grid(Interval{0.0, kPi}, 1024);
    const GridSignal s1 = GridSignal::from_function(g, [](double x) { return std::sin(x); });
    const GridSignal s2 = GridSignal::from_function(g, [](double x) { return std::sin(2.0 * x); });
    CHECK(l2_inner(s1, s1) == doctest::Approx(l2_norm_sq(s1)).epsilon(1e-14));
    CHECK(std::abs(l2_inner(s1, s2)) <= 1e-6);
    CHECK(l2_inner(s1, GridSignal::constant(g, 0.0)) == 0.0);
    auto g2 = make_grid(Interval{0.0, kPi}, 512);
    CHECK_THROWS_AS((void)l2_inner(s1, GridSignal::constant(g2, 0.0)), std::invalid_argument);
}

TEST_CASE("Cauchy-Schwarz on random signals") {
    auto g = make_grid(Interval{-1.0, 1.0}, 257);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        GridSignal u(g, oracles::random_signal(g->node_count(), seed));
        GridSignal v(g, oracles::random_signal(g->node_count(), seed + 1000));
        const double lhs = l2_inner(u, v) * l2_inner(u, v);
        const double rhs = l2_norm_sq(u) * l2_norm_sq(v);
        CHECK(lhs <= rhs * (1.0 + 1e-12));
    }
}

TEST_CASE("mean_value examples") {
    auto g1 = make_grid(Interval{-1.0, 1.0}, 512);
    CHECK(mean_value(GridSignal::constant(g1, 3.25)) == doctest::Approx(3.25).epsilon(1e-15));
    CHECK(std::abs(mean_value(ramp(g1))) <= 1e-12);
    auto g2 = make_grid(Interval{0.0, 1.0}, 1000);
    CHECK(mean_value(ramp(g2)) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("double_integral: measure, |x-y| moments, failure reporting") {
    auto g = make_grid(Interval{0.0, 1.0}, 512);
    const GridSignal u = ramp(g);
    const double one = double_integral(
        [](std::array<double, 2>, std::array<double, 2>, double, double) { return 1.0; }, u);
    CHECK(std::abs(one - 1.0) <= 2.0 / 512.0);  // diagonal-cell omission is O(1/N)

    const double first = double_integral(
        [](std::array<double, 2>, std::array<double, 2>, double xi, double zeta) {
            return std::abs(xi - zeta);
        },
        u);
    CHECK(first == doctest::Approx(1.0 / 3.0).epsilon(1e-2));

    const double second = double_integral(
        [](std::array<double, 2>, std::array<double, 2>, double xi, double zeta) {
            return (xi - zeta) * (xi - zeta);
        },
        u);
    CHECK(second == doctest::Approx(1.0 / 6.0).epsilon(1e-2));

    CHECK_THROWS_AS(
        (void)double_integral(
            [](std::array<double, 2> x, std::array<double, 2> y, double, double) {
                return (x[0] > 0.5 && y[0] > 0.5) ? std::nan("") : 1.0;
            },
            u),
        std::runtime_error);
}

TEST_CASE("double_integral is bit-identical across thread counts") {
    auto g = make_grid(Interval{0.0, 1.0}, 257);
    GridSignal u(g, oracles::random_signal(g->node_count(), 42));
    auto kernel = [](std::array<double, 2> x, std::array<double, 2> y, double xi, double zeta) {
        return std::abs(xi - zeta) / (1.0 + std::abs(x[0] - y[0]));
    };
    set_thread_count(1);
    const double v1 = double_integral(kernel, u);
    set_thread_count(2);
    const double v2 = double_integral(kernel, u);
    set_thread_count(4);
    const double v4 = double_integral(kernel, u);
    set_thread_count(1);
    CHECK(v1 == v2);
    CHECK(v1 == v4);
}

TEST_CASE("tv_discrete: constants, exact affine variation, single jump") {
    for (int n : {64, 511, 1024}) {
        auto g = make_grid(Interval{-1.0, 1.0}, n);
        CHECK(tv_discrete(GridSignal::constant(g, 7.0)) == 0.0);
        CHECK(tv_discrete(ramp(g)) == doctest::Approx(2.0).epsilon(1e-10));
        const GridSignal step =
            GridSignal::from_function(g, [](double x) { return x < 0.0 ? 0.0 : 1.0; });
        CHECK(tv_discrete(step) == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("tv_discrete: homogeneity and triangle inequality on random pairs") {
    auto g = make_grid(Interval{0.0, 1.0}, 129);
    for (std::uint64_t seed = 1; seed <= 15; ++seed) {
        GridSignal u(g, oracles::random_signal(g->node_count(), seed));
        GridSignal v(g, oracles::random_signal(g->node_count(), seed + 77));
        const double tu = tv_discrete(u), tvv = tv_discrete(v);
        std::vector<double> scaled(u.values().begin(), u.values().end());
        for (double& x : scaled) x *= 3.5;
        CHECK(tv_discrete(GridSignal(g, scaled)) == doctest::Approx(3.5 * tu).epsilon(1e-12));
        std::vector<double> sum(u.values().begin(), u.values().end());
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += v[i];
        CHECK(tv_discrete(GridSignal(g, sum)) <= tu + tvv + 1e-10);
    }
}

TEST_CASE("tv_discrete in 2D: anisotropic variation of an affine sheet") {
    auto g = make_grid(Rect{0.0, 2.0, 0.0, 1.0}, 48);
    const GridSignal u = GridSignal::from_function_2d(g, [](double x, double) { return x; });
    // |Du|(rect) for u = x is the area of the rectangle
    CHECK(tv_discrete(u) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("lipschitz_constant: sawtooth slopes, shift invariance, constants") {
    auto g = make_grid(Interval{0.0, 1.0}, 504);  // divisible by 12
    const double eps = 0.1;
    const GridSignal ue = sawtooth_noisy(g, eps);
    const GridSignal uc = sawtooth_clean(g);
    CHECK(lipschitz_constant(ue) == doctest::Approx(30.0 - 3.0 * eps).epsilon(1e-9));
    std::vector<double> mirror(ue.size());
    for (std::size_t i = 0; i < mirror.size(); ++i) mirror[i] = 2.0 * ue[i] - uc[i];
    CHECK(lipschitz_constant(GridSignal(g, mirror)) ==
          doctest::Approx(30.0 - 6.0 * eps).epsilon(1e-9));
    CHECK(lipschitz_constant(GridSignal::constant(g, -2.0)) == 0.0);

    GridSignal u(g, oracles::random_signal(g->node_count(), 5));
    std::vector<double> shifted(u.values().begin(), u.values().end());
    for (double& x : shifted) x += 11.0;
    CHECK(lipschitz_constant(GridSignal(g, shifted)) ==
          doctest::Approx(lipschitz_constant(u)).epsilon(1e-13));
}

TEST_CASE("lipschitz_constant in 2D uses all pairs") {
    auto g = make_grid(Rect{0.0, 1.0, 0.0, 1.0}, 12);
    const GridSignal u = GridSignal::from_function_2d(g, [](double x, double y) { return x + y; });
    // steepest direction is the diagonal: |grad| = sqrt(2)
    CHECK(lipschitz_constant(u) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("gagliardo_seminorm examples and p=1 identity") {
    auto g = make_grid(Interval{0.0, 1.0}, 512);
    CHECK(gagliardo_seminorm(GridSignal::constant(g, 4.0), 2.0, 0.5) == 0.0);
    const GridSignal u = ramp(g);
    CHECK(gagliardo_seminorm(u, 2.0, 0.0) == doctest::Approx(std::sqrt(1.0 / 6.0)).epsilon(1e-2));
    CHECK(gagliardo_seminorm(u, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-2));

    GridSignal r(g, oracles::random_signal(g->node_count(), 9));
    const double direct = double_integral(
        [](std::array<double, 2>, std::array<double, 2>, double xi, double zeta) {
            return std::abs(xi - zeta);
        },
        r);
    CHECK(gagliardo_seminorm(r, 1.0, 0.0) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("grid and signal invariants") {
    CHECK_THROWS_AS(make_grid(Interval{1.0, 0.0}, 8), std::invalid_argument);
    CHECK_THROWS_AS(make_grid(Interval{0.0, 1.0}, 0), std::invalid_argument);
    auto g = make_grid(Interval{0.0, 1.0}, 4);
    CHECK(g->spacing(0) == doctest::Approx(0.25));
    CHECK(g->coord(0, 0) == doctest::Approx(0.125));
    CHECK(g->coord(3, 0) == doctest::Approx(0.875));
    CHECK_THROWS_AS(GridSignal(g, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(GridSignal(g, {1.0, 2.0, std::nan(""), 4.0}), std::invalid_argument);

    auto g2 = make_grid(Rect{0.0, 2.0, 0.0, 4.0}, 8);
    CHECK(g2->node_count() == 64);
    CHECK(g2->cell_measure() == doctest::Approx(0.25 * 0.5));
    CHECK(g2->domain().measure() == doctest::Approx(8.0));
}

TEST_CASE("training set validates shared grid and non-emptiness") {
    auto g = make_grid(Interval{0.0, 1.0}, 16);
    auto g2 = make_grid(Interval{0.0, 1.0}, 32);
    GridSignal a = GridSignal::constant(g, 0.0);
    GridSignal b = GridSignal::constant(g2, 0.0);
    CHECK_THROWS_AS(TrainingSet({}), std::invalid_argument);
    CHECK_THROWS_AS(TrainingSet({{a, b}}), std::invalid_argument);
    TrainingSet ok({{a, a}});
    CHECK(ok.size() == 1);
}
