#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bilevel/grid.hpp"
#include "bilevel/spectral.hpp"
#include "oracles.hpp"

using namespace bilevel;

namespace {
const double kPi = 3.14159265358979323846;

TrainingSet two_mode_training(const GridPtr& grid, const BasisPtr& basis) {
    GridSignal uc = basis->eigenfunction_signal(basis->mode_position(1, 1), grid);
    GridSignal noise = basis->eigenfunction_signal(basis->mode_position(10, 10), grid);
    std::vector<double> eta(uc.size());
    for (std::size_t i = 0; i < eta.size(); ++i) eta[i] = uc[i] + 0.1 * noise[i];
    return TrainingSet({{uc, GridSignal(grid, std::move(eta))}});
}

SpectralCoeffs coeffs_from(const BasisPtr& basis, std::vector<double> c, const GridPtr& grid) {
    c.resize(basis->size(), 0.0);
    return SpectralCoeffs{basis, std::move(c), grid};
}
}  // namespace

TEST_CASE("build_basis: eigenvalues and normalization") {
    auto b1 = build_basis(Domain(Interval{0.0, kPi}), 3);
    CHECK(b1->eigenvalues() == std::vector<double>{1.0, 4.0, 9.0});

    auto b2 = build_basis(Domain(Rect{0.0, kPi, 0.0, kPi}), 10);
    CHECK(b2->eigenvalue(b2->mode_position(1, 1)) == 2.0);
    CHECK(b2->eigenvalue(b2->mode_position(10, 10)) == 200.0);
    // sorted non-decreasing
    for (std::size_t k = 1; k < b2->size(); ++k)
        CHECK(b2->eigenvalue(k) >= b2->eigenvalue(k - 1));

    auto grid = make_grid(Rect{0.0, kPi, 0.0, kPi}, 256);
    const GridSignal psi = b2->eigenfunction_signal(b2->mode_position(1, 1), grid);
    CHECK(l2_inner(psi, psi) == doctest::Approx(1.0).epsilon(1e-8));

    CHECK_THROWS_AS(build_basis(Domain(Interval{0.0, 1.0}), 4), std::invalid_argument);
}

TEST_CASE("analyze/synthesize: orthonormality round trips") {
    auto grid = make_grid(Interval{0.0, kPi}, 128);
    auto basis = build_basis(grid->domain(), 8);

    const GridSignal psi1 = basis->eigenfunction_signal(0, grid);
    auto c = analyze(psi1, basis);
    for (std::size_t k = 0; k < c.coeffs.size(); ++k)
        CHECK(std::abs(c.coeffs[k] - (k == 0 ? 1.0 : 0.0)) <= 1e-8);

    auto zero = analyze(GridSignal::constant(grid, 0.0), basis);
    for (double v : zero.coeffs) CHECK(v == 0.0);

    // u = psi_1 + 0.1 psi_3
    std::vector<double> vals(grid->node_count());
    const GridSignal psi3 = basis->eigenfunction_signal(2, grid);
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = psi1[i] + 0.1 * psi3[i];
    auto mix = analyze(GridSignal(grid, vals), basis);
    CHECK(mix.coeffs[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(mix.coeffs[1] == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(mix.coeffs[2] == doctest::Approx(0.1).epsilon(1e-8));

    // span round trip and Parseval
    const GridSignal back = synthesize(mix);
    for (std::size_t i = 0; i < vals.size(); ++i) CHECK(std::abs(back[i] - vals[i]) <= 1e-8);
    double coeff_energy = 0.0;
    for (double v : mix.coeffs) coeff_energy += v * v;
    CHECK(l2_norm_sq(back) == doctest::Approx(coeff_energy).epsilon(1e-8));
}

TEST_CASE("analyze rejects a signal from a foreign domain") {
    auto basis = build_basis(Domain(Interval{0.0, kPi}), 4);
    auto wrong = make_grid(Interval{0.0, 1.0}, 32);
    CHECK_THROWS_AS((void)analyze(GridSignal::constant(wrong, 1.0), basis),
                    std::invalid_argument);
}

TEST_CASE("2D analyze/synthesize: mixed-mode round trip and Parseval") {
    auto grid = make_grid(Rect{0.0, kPi, 0.0, kPi}, 48);
    auto basis = build_basis(grid->domain(), 6);
    std::vector<double> c(basis->size(), 0.0);
    c[basis->mode_position(1, 2)] = 0.8;
    c[basis->mode_position(3, 3)] = -0.25;
    c[basis->mode_position(5, 1)] = 0.1;
    const GridSignal u = synthesize(SpectralCoeffs{basis, c, grid});
    const auto back = analyze(u, basis);
    for (std::size_t k = 0; k < c.size(); ++k)
        CHECK(std::abs(back.coeffs[k] - c[k]) <= 1e-8);
    double energy = 0.0;
    for (double v : c) energy += v * v;
    CHECK(l2_norm_sq(u) == doctest::Approx(energy).epsilon(1e-8));
}

TEST_CASE("frac_seminorm_sq at the edges and half order") {
    auto grid = make_grid(Interval{0.0, kPi}, 128);
    auto basis = build_basis(grid->domain(), 8);
    const double mu = 0.7;
    auto c1 = analyze(basis->eigenfunction_signal(0, grid), basis);
    CHECK(frac_seminorm_sq(c1, 0.0, mu) == doctest::Approx(mu).epsilon(1e-8));
    CHECK(frac_seminorm_sq(c1, 1.0, mu) == doctest::Approx(mu * 1.0).epsilon(1e-8));

    auto c2 = coeffs_from(basis, {0.0, 1.0}, grid);  // single mode with lambda = 4
    CHECK(frac_seminorm_sq(c2, 0.5, mu) == doctest::Approx(2.0 * mu).epsilon(1e-12));
}

TEST_CASE("frac_minimizer: mode-wise damping and the two-mode example") {
    auto grid = make_grid(Rect{0.0, kPi, 0.0, kPi}, 32);
    auto basis = build_basis(grid->domain(), 10);
    std::vector<double> c(basis->size(), 0.0);
    c[basis->mode_position(1, 1)] = 1.0;
    c[basis->mode_position(10, 10)] = 0.1;
    auto c_eta = SpectralCoeffs{basis, c, grid};

    auto w = frac_minimizer(c_eta, 1.0, 0.05);
    CHECK(w.coeffs[basis->mode_position(1, 1)] == doctest::Approx(1.0 / 1.1).epsilon(1e-12));
    CHECK(w.coeffs[basis->mode_position(10, 10)] == doctest::Approx(0.1 / 11.0).epsilon(1e-12));

    auto s0 = frac_minimizer(c_eta, 0.0, 0.05);
    for (std::size_t k = 0; k < c.size(); ++k)
        CHECK(s0.coeffs[k] == doctest::Approx(c[k] / 1.05).epsilon(1e-14));

    auto tiny = frac_minimizer(c_eta, 0.6, 1e-14);
    for (std::size_t k = 0; k < c.size(); ++k)
        CHECK(tiny.coeffs[k] == doctest::Approx(c[k]).epsilon(1e-10));

    // monotone damping: |w_m| <= |eta_m|
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (double& x : c) x = dist(rng);
    auto cr = SpectralCoeffs{basis, c, grid};
    for (double s : {0.0, 0.3, 0.9, 1.0})
        for (double mu : {0.01, 0.5, 10.0}) {
            auto wm = frac_minimizer(cr, s, mu);
            for (std::size_t k = 0; k < c.size(); ++k)
                CHECK(std::abs(wm.coeffs[k]) <= std::abs(c[k]) + 1e-15);
        }
}

TEST_CASE("per-mode optimality of the closed-form minimizer") {
    auto grid = make_grid(Interval{0.0, kPi}, 64);
    auto basis = build_basis(grid->domain(), 6);
    auto c_eta = coeffs_from(basis, oracles::random_signal(6, 123), grid);
    const double s = 0.37, mu = 0.2;
    auto w = frac_minimizer(c_eta, s, mu);
    for (std::size_t k = 0; k < basis->size(); ++k) {
        const double lam_s = std::pow(basis->eigenvalue(k), s);
        auto scalar = [&](double t) {
            return (t - c_eta.coeffs[k]) * (t - c_eta.coeffs[k]) + mu * lam_s * t * t;
        };
        const double at = scalar(w.coeffs[k]);
        CHECK(at <= scalar(w.coeffs[k] + 1e-6) + 1e-18);
        CHECK(at <= scalar(w.coeffs[k] - 1e-6) + 1e-18);
    }
}

TEST_CASE("frac_minimizer_derivative: log-zero mode, finite differences, zero data") {
    auto grid = make_grid(Interval{0.0, kPi}, 64);
    auto basis = build_basis(grid->domain(), 6);
    auto c_eta = coeffs_from(basis, {0.8, -0.5, 0.3, 0.1, -0.2, 0.05}, grid);
    const double mu = 0.4;

    auto d = frac_minimizer_derivative(c_eta, 0.5, mu);
    CHECK(d.coeffs[0] == 0.0);  // lambda_1 = 1, log term vanishes

    const double eps = 1e-5;
    auto plus = frac_minimizer(c_eta, 0.5 + eps, mu);
    auto minus = frac_minimizer(c_eta, 0.5 - eps, mu);
    for (std::size_t k = 0; k < basis->size(); ++k) {
        const double fd = (plus.coeffs[k] - minus.coeffs[k]) / (2.0 * eps);
        CHECK(d.coeffs[k] == doctest::Approx(fd).epsilon(1e-6));
    }

    auto zero = frac_minimizer_derivative(coeffs_from(basis, {}, grid), 0.3, mu);
    for (double v : zero.coeffs) CHECK(v == 0.0);
}

TEST_CASE("upper_value and upper_derivative on the two-mode data") {
    auto grid = make_grid(Rect{0.0, kPi, 0.0, kPi}, 64);
    auto basis = build_basis(grid->domain(), 12);
    const TrainingSet training = two_mode_training(grid, basis);

    // identical clean and noisy data, vanishing weight: the value tends to 0
    {
        GridSignal uc = basis->eigenfunction_signal(basis->mode_position(1, 1), grid);
        TrainingSet same({{uc, uc}});
        for (double s : {0.0, 0.5, 1.0})
            CHECK(upper_value(s, 1e-12, same, basis) <= 1e-12);
    }

    // interior window at mu = 0.05: descending at 0, ascending at 1
    CHECK(upper_derivative(0.0, 0.05, training, basis) < 0.0);
    CHECK(upper_derivative(1.0, 0.05, training, basis) > 0.0);

    // derivative against central differences
    const SpectralTraining st = project_training(training, basis);
    for (double s : {0.1, 0.35, 0.62, 0.9}) {
        const double eps = 1e-5;
        const double fd = (upper_value(s + eps, 0.05, st) - upper_value(s - eps, 0.05, st)) /
                          (2.0 * eps);
        const double an = upper_derivative(s, 0.05, st);
        CHECK(an == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("gradient consistency on random coefficient data") {
    auto grid = make_grid(Interval{0.0, kPi}, 96);
    auto basis = build_basis(grid->domain(), 10);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::uniform_real_distribution<double> mus(0.02, 0.8);
    std::uniform_real_distribution<double> ss(0.1, 0.9);
    for (int rep = 0; rep < 50; ++rep) {
        SpectralTraining st;
        st.basis = basis;
        st.grid = grid;
        std::vector<double> eta(basis->size()), clean(basis->size());
        for (double& v : eta) v = dist(rng);
        for (double& v : clean) v = dist(rng);
        st.eta.push_back(eta);
        st.clean.push_back(clean);
        const double mu = mus(rng), s = ss(rng);
        const double eps = 1e-5;
        const double fd = (upper_value(s + eps, mu, st) - upper_value(s - eps, mu, st)) / (2.0 * eps);
        const double an = upper_derivative(s, mu, st);
        if (std::abs(an) < 1e-3) continue;  // relative comparison needs signal
        CHECK(std::abs(fd - an) / std::abs(an) <= 1e-5);
    }
}

TEST_CASE("check_conditions: window membership and sign equivalences") {
    auto grid = make_grid(Rect{0.0, kPi, 0.0, kPi}, 64);
    auto basis = build_basis(grid->domain(), 12);
    const TrainingSet training = two_mode_training(grid, basis);

    const auto inside = check_conditions(training, 0.05, basis);
    CHECK(inside.h1_holds);
    CHECK(inside.h2_holds);
    const auto below = check_conditions(training, 0.023, basis);
    const bool below_both = below.h1_holds && below.h2_holds;
    CHECK_FALSE(below_both);
    const auto above = check_conditions(training, 0.11, basis);
    const bool above_both = above.h1_holds && above.h2_holds;
    CHECK_FALSE(above_both);

    // sign equivalences against the derivative, on random data
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int rep = 0; rep < 30; ++rep) {
        SpectralTraining st;
        st.basis = basis;
        st.grid = grid;
        std::vector<double> eta(basis->size()), clean(basis->size());
        for (double& v : eta) v = dist(rng);
        for (double& v : clean) v = dist(rng);
        st.eta.push_back(eta);
        st.clean.push_back(clean);
        const double mu = 0.02 + 0.3 * (rep / 30.0);
        const auto rep_cond = check_conditions(st, mu);
        const double d0 = upper_derivative(0.0, mu, st);
        const double d1 = upper_derivative(1.0, mu, st);
        CHECK((rep_cond.h1_value > 0.0) == (d0 < 0.0));
        CHECK((rep_cond.h2_value < 0.0) == (d1 > 0.0));
    }
}

TEST_CASE("mu_window: closed-form root and bracket validation") {
    auto grid = make_grid(Rect{0.0, kPi, 0.0, kPi}, 64);
    auto basis = build_basis(grid->domain(), 12);
    const TrainingSet training = two_mode_training(grid, basis);

    const auto [mu_minus, mu_plus] = mu_window(training, basis, {0.005, 0.3});
    CHECK(mu_plus == doctest::Approx(std::log(200.0) / (100.0 * std::log(2.0))).epsilon(1e-6));
    CHECK(mu_minus == doctest::Approx(0.0236).epsilon(5e-4 / 0.0236));
    CHECK(mu_minus < mu_plus);

    CHECK_THROWS_AS(mu_window(training, basis, {1.0, 2.0}), std::runtime_error);
}

TEST_CASE("learn_s: interior window, boundary regimes, tie rule") {
    auto grid = make_grid(Rect{0.0, kPi, 0.0, kPi}, 64);
    auto basis = build_basis(grid->domain(), 12);
    const TrainingSet training = two_mode_training(grid, basis);

    const auto inside = learn_s(training, 0.05, basis);
    CHECK_FALSE(inside.boundary);
    CHECK(inside.s_hat > 0.0);
    CHECK(inside.s_hat < 1.0);

    CHECK(learn_s(training, 0.023, basis).s_hat == 1.0);
    CHECK(learn_s(training, 0.11, basis).s_hat == 0.0);

    // single unit-eigenvalue mode: the value is constant in s; smallest s wins
    auto grid1 = make_grid(Interval{0.0, kPi}, 64);
    auto basis1 = build_basis(grid1->domain(), 4);
    GridSignal psi1 = basis1->eigenfunction_signal(0, grid1);
    TrainingSet flat({{psi1, psi1}});
    const auto tie = learn_s(flat, 0.3, basis1);
    CHECK(tie.s_hat == 0.0);
    CHECK(tie.boundary);
}
