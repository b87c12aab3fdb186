#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bilevel/learn.hpp"
#include "bilevel/mosco.hpp"
#include "bilevel/spectral.hpp"
#include "oracles.hpp"

using namespace bilevel;

namespace {
const double kPi = 3.14159265358979323846;

GridSignal ramp(const GridPtr& g) {
    return GridSignal::from_function(g, [](double x) { return x; });
}

// clean smooth image plus high-frequency noise, scaled so the mean-distance
// condition (noise below the clean image's spread) holds with slack
TrainingSet smooth_noise_training(int n, std::uint64_t seed, double noise_scale) {
    auto g = make_grid(Interval{0.0, 1.0}, n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> amp(0.7, 1.3);
    const double a = amp(rng), b = amp(rng);
    GridSignal uc = GridSignal::from_function(g, [a, b](double x) {
        return a * std::sin(2.0 * kPi * x) + 0.4 * b * std::cos(2.0 * kPi * 3.0 * x);
    });
    std::normal_distribution<double> gauss(0.0, noise_scale);
    std::vector<double> noisy(uc.values().begin(), uc.values().end());
    for (double& v : noisy) v += gauss(rng);
    return TrainingSet({{uc, GridSignal(g, std::move(noisy))}});
}
}  // namespace

TEST_CASE("param grid transforms") {
    ParamGrid lin{"linear", 0.0, 1.0, 5, true};
    auto p = lin.interior_points();
    CHECK(p.front() == 0.0);
    CHECK(p.back() == 1.0);
    CHECK(p[2] == doctest::Approx(0.5));

    ParamGrid lg{"log", 0.01, 100.0, 5, true};
    auto q = lg.interior_points();
    CHECK(q[2] == doctest::Approx(1.0).epsilon(1e-12));

    ParamGrid ip{"invp", 1.0, 64.0, 4, true};
    auto r = ip.interior_points();
    CHECK(r.front() == doctest::Approx(1.0));
    CHECK(r.back() == doctest::Approx(64.0));
    CHECK(r[1] > 1.0);

    const ParamGrid too_few{"linear", 0.0, 1.0, 2, true};
    CHECK_THROWS_AS((void)too_few.interior_points(), std::invalid_argument);
    const ParamGrid bad{"banana", 0.0, 1.0, 5, true};
    CHECK_THROWS_AS((void)bad.interior_points(), std::invalid_argument);
}

TEST_CASE("extended_upper: quadratic weight closed form and edge table") {
    auto g = make_grid(Interval{0.0, kPi}, 256);
    const GridSignal uc = GridSignal::from_function(g, [](double x) { return std::sin(x); });
    TrainingSet training({{uc, uc}});
    auto family = FamilySpec::weight(BaseRegularizer::quadratic_l2());

    const double norm_sq = l2_norm_sq(uc);
    for (double a : {0.1, 1.0, 7.5}) {
        auto [value, results] = extended_upper(family, ExtendedParam::interior(a), training);
        CHECK(value == doctest::Approx(std::pow(a / (1.0 + a), 2) * norm_sq).epsilon(1e-10));
        CHECK(results.size() == 1);
    }

    // upper edge: distance from the mean reconstruction
    auto [up, up_res] = extended_upper(family, ExtendedParam::upper_edge(), training);
    GridSignal mean_sig = GridSignal::constant(g, mean_value(uc));
    CHECK(up == doctest::Approx(l2_dist_sq(mean_sig, uc)).epsilon(1e-12));
    CHECK(up_res.front().method == "edge_mean_constant");

    // lower edge: identity reconstruction
    auto [low, low_res] = extended_upper(family, ExtendedParam::lower_edge(), training);
    CHECK(low == 0.0);
    CHECK(low_res.front().method == "edge_identity");

    // quotient family upper edge: identity as well
    auto ak = FamilySpec::aubert_kornprobst(RhoSpec::ball_indicator(1));
    auto g2 = make_grid(Interval{-1.0, 1.0}, 128);
    TrainingSet t2({{GridSignal::constant(g2, 0.0), ramp(g2)}});
    auto [akv, akr] = extended_upper(ak, ExtendedParam::upper_edge(), t2);
    CHECK(akv == doctest::Approx(l2_dist_sq(ramp(g2), GridSignal::constant(g2, 0.0))));
    CHECK(akr.front().method == "edge_identity");
}

TEST_CASE("learn: quadratic-weight family selects the vanishing-weight edge") {
    auto g = make_grid(Interval{0.0, kPi}, 256);
    const GridSignal uc = GridSignal::from_function(g, [](double x) { return std::sin(x); });
    TrainingSet training({{uc, uc}});
    auto family = FamilySpec::weight(BaseRegularizer::quadratic_l2());
    LearnReport rep = learn(family, training, ParamGrid{"log", 1e-3, 1e3, 20, true}, 0);
    CHECK(rep.argmin.is_lower());
    CHECK_FALSE(rep.interior);
    CHECK(rep.argmin_value == 0.0);
    // samples sorted: lower edge first, upper edge last
    CHECK(rep.samples.front().param.is_lower());
    CHECK(rep.samples.back().param.is_upper());
    // consistency: each interior sample value equals a fresh evaluation
    for (const auto& s : rep.samples) {
        if (!s.param.is_interior()) continue;
        auto [value, res] = extended_upper(family, s.param, training);
        CHECK(value == doctest::Approx(s.I_bar).epsilon(1e-12));
    }
}

TEST_CASE("learn: quotient family prefers the edge matching the data") {
    SolverConfig cfg;
    cfg.max_iters = 250;
    cfg.tol = 1e-7;
    auto family = FamilySpec::aubert_kornprobst(RhoSpec::ball_indicator(1));

    // identical pair: vanishing regularization wins
    auto g = make_grid(Interval{-1.0, 1.0}, 128);
    const GridSignal u = ramp(g);
    TrainingSet same({{u, u}});
    LearnReport a = learn(family, same, ParamGrid{"log", 0.15, 1.0, 4, true}, 0, cfg);
    CHECK(a.argmin.is_upper());
    CHECK(a.argmin_value == 0.0);

    // clean zero, noisy ramp: the TV edge reconstructs exactly
    auto g2 = make_grid(Interval{-1.0, 1.0}, 512);
    TrainingSet rampdata({{GridSignal::constant(g2, 0.0), ramp(g2)}});
    LearnReport b = learn(family, rampdata, ParamGrid{"log", 0.15, 1.0, 4, true}, 0, cfg);
    CHECK(b.argmin.is_lower());
    CHECK(b.argmin_value <= 1e-4);
}

TEST_CASE("learn: golden-section refinement improves the interior sample") {
    auto g = make_grid(Interval{0.0, 1.0}, 128);
    // clean not equal noisy: an interior weight beats both edges for the
    // quadratic base when the noise is a pure scaling
    const GridSignal uc = GridSignal::from_function(g, [](double x) { return std::sin(2.0 * kPi * x); });
    std::vector<double> noisy(uc.values().begin(), uc.values().end());
    for (double& v : noisy) v *= 1.5;  // optimal alpha = 0.5 exactly
    TrainingSet training({{uc, GridSignal(g, std::move(noisy))}});
    auto family = FamilySpec::weight(BaseRegularizer::quadratic_l2());

    LearnReport coarse = learn(family, training, ParamGrid{"log", 0.05, 5.0, 7, true}, 0);
    LearnReport fine = learn(family, training, ParamGrid{"log", 0.05, 5.0, 7, true}, 25);
    CHECK(fine.interior);
    CHECK(fine.argmin_value <= coarse.argmin_value + 1e-15);
    CHECK(fine.argmin.value() == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(fine.argmin_value <= 1e-10);
    bool any_refined = false;
    for (const auto& s : fine.samples) any_refined = any_refined || s.refined;
    CHECK(any_refined);
}

TEST_CASE("learn determinism: identical inputs give byte-identical reports") {
    TrainingSet training = smooth_noise_training(96, 5, 0.05);
    auto family = FamilySpec::weight(BaseRegularizer::tv());
    SolverConfig cfg;
    cfg.seed = 42;
    LearnReport r1 = learn(family, training, ParamGrid{"log", 1e-3, 1.0, 9, true}, 8, cfg);
    LearnReport r2 = learn(family, training, ParamGrid{"log", 1e-3, 1.0, 9, true}, 8, cfg);
    CHECK(report_to_json(r1).dump() == report_to_json(r2).dump());
}

TEST_CASE("check_weight_conditions: noisy data penalized more, strictness") {
    TrainingSet training = smooth_noise_training(256, 7, 0.05);
    auto conds = check_weight_conditions(training, BaseRegularizer::tv());
    CHECK(conds["h3_weight"].holds);  // high-frequency noise raises the variation
    CHECK(conds["h4_weight"].holds);  // small noise: closer than the mean image

    // identical data fail the strict inequalities
    auto g = make_grid(Interval{0.0, 1.0}, 64);
    GridSignal u = GridSignal::from_function(g, [](double x) { return std::sin(6.0 * x); });
    TrainingSet same({{u, u}});
    auto conds_same = check_weight_conditions(same, BaseRegularizer::tv());
    CHECK_FALSE(conds_same["h3_weight"].holds);
    CHECK(conds_same["h3_weight"].value == 0.0);
}

TEST_CASE("sufficient smallness bound implies the mean-distance condition") {
    // property test: noise bounded by d, clean spread above d (1 + 1/sqrt|O|)
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> pick(0.0, 1.0);
    for (int rep = 0; rep < 25; ++rep) {
        auto g = make_grid(Interval{0.0, 1.0}, 128);
        const double freq = 1.0 + 3.0 * pick(rng);
        GridSignal uc = GridSignal::from_function(
            g, [freq](double x) { return std::sin(2.0 * kPi * freq * x); });
        GridSignal mean_sig = GridSignal::constant(g, mean_value(uc));
        const double spread = std::sqrt(l2_dist_sq(mean_sig, uc));
        const double measure = g->domain().measure();
        const double d = 0.9 * spread / (1.0 + 1.0 / std::sqrt(measure));

        // noise with l2 norm exactly <= d
        auto noise = oracles::random_signal(g->node_count(), 100 + rep);
        GridSignal noise_sig(g, noise);
        const double scale = d / (std::sqrt(l2_norm_sq(noise_sig)) + 1e-12) * pick(rng);
        std::vector<double> noisy(uc.values().begin(), uc.values().end());
        for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += scale * noise[i];
        TrainingSet training({{uc, GridSignal(g, std::move(noisy))}});

        auto conds = check_weight_conditions(training, BaseRegularizer::tv());
        CHECK(conds["h4_weight"].holds);
    }
}

TEST_CASE("check_exponent_conditions on the sawtooth pair") {
    auto g = make_grid(Interval{0.0, 1.0}, 504);
    TrainingSet training({{sawtooth_clean(g), sawtooth_noisy(g, 0.1)}});
    auto conds =
        check_exponent_conditions(training, DoubleIntegrand::diff_quotient(1.0), 2.0, 1.0);
    CHECK(conds["h4_exponent"].holds);
    CHECK(conds["h5_exponent"].holds);

    TrainingSet same({{sawtooth_clean(g), sawtooth_clean(g)}});
    auto conds_same =
        check_exponent_conditions(same, DoubleIntegrand::diff_quotient(1.0), 2.0, 1.0);
    CHECK_FALSE(conds_same["h4_exponent"].holds);
    CHECK_FALSE(conds_same["h5_exponent"].holds);
}

TEST_CASE("check_delta_conditions: scaled-clean construction and consistency") {
    auto family = FamilySpec::aubert_kornprobst(RhoSpec::ball_indicator(1));
    auto g = make_grid(Interval{-1.0, 1.0}, 256);
    const GridSignal uc = ramp(g);
    std::vector<double> noisy(uc.values().begin(), uc.values().end());
    for (double& v : noisy) v *= 1.05;  // u_eta = (1+eps) u_c with w0 != u_c
    TrainingSet training({{uc, GridSignal(g, std::move(noisy))}});
    auto conds = check_delta_conditions(training, family);
    CHECK(conds["h7_delta"].holds);
    CHECK(conds["h8_delta"].holds);

    // identical pair with w0 != u_c: the first condition needs strictness
    TrainingSet same({{uc, uc}});
    auto conds_same = check_delta_conditions(same, family);
    CHECK_FALSE(conds_same["h8_delta"].holds);

    // scale-free form matches delta^n R_delta for large delta (flat kernel zone)
    const GridSignal probe = ramp(g);
    const double delta = 10.0;  // delta * support = 5 > diam = 2
    const double direct = eval_ak(ExtendedParam::interior(delta), RhoSpec::ball_indicator(1), probe);
    const double scale_free = double_integral(
        [](std::array<double, 2> x, std::array<double, 2> y, double xi, double zeta) {
            return std::abs(xi - zeta) / std::hypot(x[0] - y[0], x[1] - y[1]);
        },
        probe);
    CHECK(direct * delta == doctest::Approx(scale_free).epsilon(1e-8));
}

TEST_CASE("bn delta conditions use the quadratic power law near zero") {
    auto bn = FamilySpec::brezis_nguyen(PhiSpec::quad_cap(1), 1.0);
    auto g = make_grid(Interval{-1.0, 1.0}, 128);
    const GridSignal uc = ramp(g);
    std::vector<double> noisy(uc.values().begin(), uc.values().end());
    for (double& v : noisy) v *= 1.05;
    TrainingSet training({{uc, GridSignal(g, std::move(noisy))}});
    auto conds = check_delta_conditions(training, bn);
    CHECK(conds.count("h7_delta") == 1);
    CHECK(conds["h8_delta"].holds);

    auto bn_step = FamilySpec::brezis_nguyen(PhiSpec::step(1), 1.0);
    CHECK_THROWS_AS(check_delta_conditions(training, bn_step), std::invalid_argument);
}

TEST_CASE("conditions-imply-interior on generated small-noise data") {
    SolverConfig cfg;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        TrainingSet training = smooth_noise_training(128, seed, 0.04);
        auto conds = check_weight_conditions(training, BaseRegularizer::tv());
        REQUIRE(conds["h3_weight"].holds);
        REQUIRE(conds["h4_weight"].holds);
        auto family = FamilySpec::weight(BaseRegularizer::tv());
        LearnReport rep = learn(family, training, ParamGrid{"log", 1e-4, 10.0, 13, true}, 10, cfg);
        CHECK(rep.interior);
    }
}

TEST_CASE("edge samples respect the relaxation lower-bound proxy") {
    // the edge value never exceeds the trend of the nearest interior samples
    auto g = make_grid(Interval{0.0, kPi}, 128);
    const GridSignal uc = GridSignal::from_function(g, [](double x) { return std::sin(x); });
    TrainingSet training({{uc, uc}});
    auto family = FamilySpec::weight(BaseRegularizer::quadratic_l2());
    LearnReport rep = learn(family, training, ParamGrid{"log", 1e-4, 1e4, 17, true}, 0);

    std::vector<const LearnSample*> interior;
    for (const auto& s : rep.samples)
        if (s.param.is_interior()) interior.push_back(&s);
    const double lower_edge = rep.samples.front().I_bar;
    const double upper_edge = rep.samples.back().I_bar;
    double liminf_low = 1e300, liminf_up = 1e300;
    for (int k = 0; k < 5; ++k) {
        liminf_low = std::min(liminf_low, interior[k]->I_bar);
        liminf_up = std::min(liminf_up, interior[interior.size() - 1 - k]->I_bar);
    }
    CHECK(lower_edge <= liminf_low + 1e-6);
    CHECK(upper_edge <= liminf_up + 1e-6);
}

TEST_CASE("structure_report verdicts") {
    // interior argmin with all conditions holding
    TrainingSet training = smooth_noise_training(128, 2, 0.04);
    auto family = FamilySpec::weight(BaseRegularizer::tv());
    LearnReport rep = learn(family, training, ParamGrid{"log", 1e-4, 10.0, 13, true}, 8);
    auto sr = structure_report(rep);
    if (rep.interior && sr["conditions_failed"].empty())
        CHECK(sr["verdict"] == "structure preserved");

    // boundary argmin names the violated conditions
    auto g = make_grid(Interval{-1.0, 1.0}, 128);
    const GridSignal u = ramp(g);
    TrainingSet same({{u, u}});
    SolverConfig cfg;
    cfg.max_iters = 200;
    auto ak = FamilySpec::aubert_kornprobst(RhoSpec::ball_indicator(1));
    LearnReport bd = learn(ak, same, ParamGrid{"log", 0.15, 1.0, 4, true}, 0, cfg);
    auto sbd = structure_report(bd);
    const std::string verdict = sbd["verdict"];
    CHECK(verdict.find("boundary upper_edge") == 0);
    CHECK(verdict.find("h8_delta") != std::string::npos);

    // family without checkers: unclassified
    LearnReport empty_rep = bd;
    empty_rep.conditions.clear();
    CHECK(structure_report(empty_rep)["verdict"] == "unclassified");
}

TEST_CASE("learn drives the exponent family across interior and sup models") {
    auto g = make_grid(Interval{0.0, 1.0}, 60);  // divisible by 12
    TrainingSet training({{sawtooth_clean(g), sawtooth_noisy(g, 0.1)}});
    auto family = FamilySpec::exponent(DoubleIntegrand::diff_quotient(0.05));
    SolverConfig cfg;
    cfg.max_iters = 400;
    cfg.tol = 1e-7;
    LearnReport rep = learn(family, training, ParamGrid{"invp", 1.0, 8.0, 4, true}, 0, cfg);
    // lower edge absent (p = 1 is part of the interval), upper edge present
    CHECK(rep.samples.front().param.is_interior());
    CHECK(rep.samples.back().param.is_upper());
    CHECK(rep.samples.size() == 5);
    CHECK(rep.conditions.count("h4_exponent") == 1);
    CHECK(rep.conditions.at("h4_exponent").holds);
    CHECK(rep.conditions.at("h5_exponent").holds);
    for (const auto& smp : rep.samples) CHECK(std::isfinite(smp.I_bar));
}

TEST_CASE("learn drives the phi family with a supplied variation constant") {
    auto g = make_grid(Interval{0.0, 1.0}, 48);
    const GridSignal u = GridSignal::from_function(g, [](double x) { return std::sin(5.0 * x); });
    TrainingSet same({{u, u}});
    auto family = FamilySpec::brezis_nguyen(PhiSpec::quad_cap(1), 0.8);
    SolverConfig cfg;
    cfg.max_iters = 120;
    cfg.restarts = 2;
    cfg.tol = 1e-6;
    LearnReport rep = learn(family, same, ParamGrid{"log", 0.4, 2.0, 3, true}, 0, cfg);
    // identical pair: the vanishing-regularizer edge reconstructs exactly
    CHECK(rep.argmin.is_upper());
    CHECK(rep.argmin_value == 0.0);
    CHECK(rep.stats.any_best_effort);  // interior solves are local-descent only
}

TEST_CASE("phi family: large delta beats the vanishing-regularizer edge when h8 holds") {
    // In the weak-kernel regime the regularizer behaves like a small weight on
    // its scale-free form, so a little denoising must beat no regularization
    // at all once the noise raises the scale-free value of the data.
    TrainingSet training = smooth_noise_training(96, 11, 0.06);
    auto family = FamilySpec::brezis_nguyen(PhiSpec::quad_cap(1), 0.9);
    auto conds = check_delta_conditions(training, family);
    REQUIRE(conds["h8_delta"].holds);

    SolverConfig cfg;
    cfg.max_iters = 400;
    cfg.restarts = 2;
    auto [edge_value, edge_res] = extended_upper(family, ExtendedParam::upper_edge(), training, cfg);
    (void)edge_res;
    auto [large_delta_value, res] = extended_upper(family, ExtendedParam::interior(400.0), training, cfg);
    (void)res;
    CHECK(large_delta_value < edge_value);
}

TEST_CASE("learn attaches fractional conditions") {
    auto grid = make_grid(Rect{0.0, kPi, 0.0, kPi}, 32);
    auto basis = build_basis(grid->domain(), 10);
    GridSignal uc = basis->eigenfunction_signal(basis->mode_position(1, 1), grid);
    GridSignal noise = basis->eigenfunction_signal(basis->mode_position(10, 10), grid);
    std::vector<double> eta(uc.size());
    for (std::size_t i = 0; i < eta.size(); ++i) eta[i] = uc[i] + 0.1 * noise[i];
    TrainingSet training({{uc, GridSignal(grid, std::move(eta))}});

    auto family = FamilySpec::spectral_fractional(0.05, 10);
    LearnReport rep = learn(family, training, ParamGrid{"linear", 0.05, 0.95, 7, true}, 6);
    CHECK(rep.interior);
    CHECK(rep.conditions.at("h1_fractional").holds);
    CHECK(rep.conditions.at("h2_fractional").holds);
}
