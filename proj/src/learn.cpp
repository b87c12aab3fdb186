#include "bilevel/learn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "bilevel/spectral.hpp"
#include "bilevel/util.hpp"

namespace bilevel {

std::vector<double> ParamGrid::interior_points() const {
    if (count < 3) throw std::invalid_argument("ParamGrid: count >= 3 required");
    if (!(lo < hi)) throw std::invalid_argument("ParamGrid: lo < hi required");
    std::vector<double> pts(count);
    for (int k = 0; k < count; ++k) {
        const double t = static_cast<double>(k) / (count - 1);
        if (transform == "linear") {
            pts[k] = lo + t * (hi - lo);
        } else if (transform == "log") {
            if (!(lo > 0.0)) throw std::invalid_argument("ParamGrid: log scale needs lo > 0");
            pts[k] = std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)));
        } else if (transform == "invp") {
            // linear in 1/p from 1/lo down to 1/hi
            const double inv = 1.0 / lo + t * (1.0 / hi - 1.0 / lo);
            pts[k] = 1.0 / inv;
        } else {
            throw std::invalid_argument("ParamGrid: unknown transform '" + transform + "'");
        }
    }
    return pts;
}

namespace {

SolveResult lower_solve(const FamilySpec& family, const ExtendedParam& param,
                        const GridSignal& u_eta, const SolverConfig& cfg) {
    using K = FamilySpec::Kind;
    if (family.kind() == K::kSpectralFractional) {
        // closed form in the sine basis, edges included (s = 0 and s = 1)
        const double s = param.is_lower() ? 0.0 : (param.is_upper() ? 1.0 : param.value());
        auto basis = build_basis(u_eta.grid().domain(),
                                 std::min(family.m_max(), u_eta.grid().points_per_axis() - 1));
        const auto c_eta = analyze(u_eta, basis);
        auto c_w = frac_minimizer(c_eta, s, family.mu());
        GridSignal w = synthesize(c_w);
        const double obj = l2_dist_sq(w, u_eta) + frac_seminorm_sq(c_w, s, family.mu());
        return SolveResult{std::move(w), obj, "spectral_closed_form", 0, 0.0, true, false};
    }
    if (!param.is_interior()) return boundary_solve(family, param, u_eta);
    switch (family.kind()) {
        case K::kWeight:
            return solve_weight_interior(param.value(), family.base(), u_eta, cfg);
        case K::kExponent:
            return solve_exponent(param, family.integrand(), u_eta, cfg);
        case K::kBrezisNguyen:
            return solve_bn_local(param.value(), family.phi(), u_eta, cfg);
        case K::kAubertKornprobst:
            return solve_ak(param.value(), family.rho(), u_eta, cfg);
        default:
            throw std::logic_error("lower_solve: unhandled family");
    }
}

}  // namespace

std::pair<double, std::vector<SolveResult>> extended_upper(const FamilySpec& family,
                                                           const ExtendedParam& param,
                                                           const TrainingSet& training,
                                                           const SolverConfig& cfg) {
    std::vector<SolveResult> results;
    results.reserve(training.size());
    std::vector<double> dists(training.size());
    for (std::size_t j = 0; j < training.size(); ++j) {
        const auto& pr = training.pair(j);
        SolveResult r = lower_solve(family, param, pr.noisy, cfg);
        dists[j] = l2_dist_sq(r.minimizer, pr.clean);
        results.push_back(std::move(r));
    }
    return {pairwise_sum(dists), std::move(results)};
}

namespace {

LearnSample make_sample(const FamilySpec& family, const ExtendedParam& param,
                        const TrainingSet& training, const SolverConfig& cfg, SolverStats& stats,
                        bool refined) {
    auto [value, results] = extended_upper(family, param, training, cfg);
    LearnSample s;
    s.param = param;
    s.I_bar = value;
    s.refined = refined;
    s.per_pair.reserve(results.size());
    for (std::size_t j = 0; j < results.size(); ++j) {
        s.per_pair.push_back(l2_dist_sq(results[j].minimizer, training.pair(j).clean));
        stats.solves += 1;
        stats.total_iterations += results[j].iterations;
        if (!results[j].converged) stats.failures += 1;
        stats.any_best_effort = stats.any_best_effort || results[j].best_effort;
    }
    return s;
}

ConditionMap conditions_for(const FamilySpec& family, const TrainingSet& training) {
    using K = FamilySpec::Kind;
    switch (family.kind()) {
        case K::kWeight:
            return check_weight_conditions(training, family.base());
        case K::kExponent:
            return check_exponent_conditions(training, family.integrand(), 2.0, 1.0);
        case K::kBrezisNguyen:
        case K::kAubertKornprobst:
            return check_delta_conditions(training, family);
        case K::kSpectralFractional: {
            auto basis = build_basis(training.grid().domain(),
                                     std::min(family.m_max(), training.grid().points_per_axis() - 1));
            const auto rep = check_conditions(training, family.mu(), basis);
            ConditionMap m;
            m["h1_fractional"] = {rep.h1_value, rep.h1_holds};
            m["h2_fractional"] = {rep.h2_value, rep.h2_holds};
            return m;
        }
    }
    return {};
}

}  // namespace

LearnReport learn(const FamilySpec& family, const TrainingSet& training, const ParamGrid& grid,
                  int refine_iters, const SolverConfig& cfg) {
    LearnReport report;
    report.family = family.describe();
    report.seed = cfg.seed;

    const auto pts = grid.interior_points();
    if (grid.include_edges && family.kind() != FamilySpec::Kind::kExponent)
        report.samples.push_back(
            make_sample(family, ExtendedParam::lower_edge(), training, cfg, report.stats, false));
    for (double t : pts)
        report.samples.push_back(
            make_sample(family, ExtendedParam::interior(t), training, cfg, report.stats, false));
    if (grid.include_edges)
        report.samples.push_back(
            make_sample(family, ExtendedParam::upper_edge(), training, cfg, report.stats, false));

    // Golden-section refinement around the best interior sample.
    if (refine_iters > 0) {
        int best_idx = -1;
        for (std::size_t k = 0; k < report.samples.size(); ++k) {
            const auto& s = report.samples[k];
            if (!s.param.is_interior()) continue;
            if (best_idx < 0 || s.I_bar < report.samples[best_idx].I_bar)
                best_idx = static_cast<int>(k);
        }
        if (best_idx >= 0) {
            // bracket between the interior neighbors of the best sample
            const double center = report.samples[best_idx].param.value();
            double left = grid.lo, right = grid.hi;
            for (const auto& s : report.samples) {
                if (!s.param.is_interior()) continue;
                const double t = s.param.value();
                if (t < center) left = std::max(left, t);
                if (t > center) right = std::min(right, t);
            }
            const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
            double a = left, b = right;
            double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
            auto eval_at = [&](double t) {
                report.samples.push_back(
                    make_sample(family, ExtendedParam::interior(t), training, cfg, report.stats, true));
                return report.samples.back().I_bar;
            };
            double fc = eval_at(c), fd = eval_at(d);
            for (int k = 1; k < refine_iters; ++k) {
                if (fc < fd) {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - inv_phi * (b - a);
                    fc = eval_at(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + inv_phi * (b - a);
                    fd = eval_at(d);
                }
            }
        }
    }

    std::stable_sort(report.samples.begin(), report.samples.end(),
                     [](const LearnSample& a, const LearnSample& b) { return a.param < b.param; });

    std::size_t best = 0;
    for (std::size_t k = 1; k < report.samples.size(); ++k)
        if (report.samples[k].I_bar < report.samples[best].I_bar) best = k;
    report.argmin = report.samples[best].param;
    report.argmin_value = report.samples[best].I_bar;
    report.interior = report.argmin.is_interior();
    try {
        report.conditions = conditions_for(family, training);
    } catch (const std::exception&) {
        // family without applicable checkers: leave the map empty (verdict
        // "unclassified") rather than failing the whole run
        report.conditions.clear();
    }
    return report;
}

ConditionMap check_weight_conditions(const TrainingSet& training, const BaseRegularizer& base) {
    double r_clean = 0.0, r_noisy = 0.0, dist = 0.0, mean_dist = 0.0;
    for (const auto& pr : training.pairs()) {
        r_clean += base(pr.clean);
        r_noisy += base(pr.noisy);
        dist += l2_dist_sq(pr.noisy, pr.clean);
        GridSignal mean_const =
            GridSignal::constant(pr.noisy.grid_ptr(), mean_value(pr.noisy));
        mean_dist += l2_dist_sq(mean_const, pr.clean);
    }
    ConditionMap m;
    m["h3_weight"] = {r_noisy - r_clean, r_clean < r_noisy};
    m["h4_weight"] = {mean_dist - dist, dist < mean_dist};
    return m;
}

ConditionMap check_exponent_conditions(const TrainingSet& training, const DoubleIntegrand& f,
                                       double q, double alpha) {
    if (q < 1.0) throw std::invalid_argument("check_exponent_conditions: q >= 1 required");
    double rq_clean = 0.0, rq_noisy = 0.0, rinf_mirror = 0.0, rinf_noisy = 0.0;
    const auto q_param = ExtendedParam::interior(q);
    const auto sup_param = ExtendedParam::upper_edge();
    for (const auto& pr : training.pairs()) {
        rq_clean += alpha * eval_exponent(q_param, f, pr.clean);
        rq_noisy += alpha * eval_exponent(q_param, f, pr.noisy);
        // mirrored image 2*noisy - clean
        std::vector<double> mv(pr.noisy.size());
        for (std::size_t i = 0; i < mv.size(); ++i) mv[i] = 2.0 * pr.noisy[i] - pr.clean[i];
        GridSignal mirror(pr.noisy.grid_ptr(), std::move(mv));
        rinf_mirror += alpha * eval_exponent(sup_param, f, mirror);
        rinf_noisy += alpha * eval_exponent(sup_param, f, pr.noisy);
    }
    ConditionMap m;
    m["h4_exponent"] = {rq_noisy - rq_clean, rq_clean < rq_noisy};
    m["h5_exponent"] = {rinf_noisy - rinf_mirror, rinf_mirror < rinf_noisy};
    return m;
}

ConditionMap check_delta_conditions(
    const TrainingSet& training, const FamilySpec& family,
    const std::function<GridSignal(const GridSignal&)>& tv_solver_hook) {
    using K = FamilySpec::Kind;
    const bool is_ak = family.kind() == K::kAubertKornprobst;
    if (!is_ak && family.kind() != K::kBrezisNguyen)
        throw std::invalid_argument("check_delta_conditions: delta family expected");

    // The scale-free regularizer entering the large-delta comparison.
    std::function<double(const GridSignal&)> r_tilde;
    if (is_ak) {
        if (family.rho().kind() != RhoSpec::Kind::kBallIndicator || !family.rho().unit_near_zero())
            throw std::invalid_argument(
                "check_delta_conditions: the quotient family needs the unit ball kernel");
        r_tilde = [](const GridSignal& u) {
            return double_integral(
                [](std::array<double, 2> x, std::array<double, 2> y, double xi, double zeta) {
                    return std::abs(xi - zeta) / std::hypot(x[0] - y[0], x[1] - y[1]);
                },
                u);
        };
    } else {
        const auto power = family.phi().power_near_zero();
        if (!power)
            throw std::invalid_argument(
                "check_delta_conditions: the phi family needs a power law near zero (quad_cap)");
        const double c = power->first, r = power->second;
        r_tilde = [c, r](const GridSignal& u) {
            const double expn = u.grid().dim() + 1;
            return c * double_integral(
                           [r, expn](std::array<double, 2> x, std::array<double, 2> y, double xi,
                                     double zeta) {
                               const double diff = std::abs(xi - zeta);
                               if (diff == 0.0) return 0.0;
                               return std::pow(diff, r) /
                                      std::pow(std::hypot(x[0] - y[0], x[1] - y[1]), expn);
                           },
                           u);
        };
    }

    auto tv_solve = tv_solver_hook;
    if (!tv_solve) {
        double weight;
        if (is_ak) {
            weight = kappa_n(training.grid().dim());
        } else {
            if (!family.k_phi())
                throw std::invalid_argument("check_delta_conditions: phi family needs k_phi");
            weight = *family.k_phi();
        }
        tv_solve = [weight](const GridSignal& noisy) { return solve_tv(weight, noisy).minimizer; };
    }

    double dist = 0.0, w0_dist = 0.0, rt_clean = 0.0, rt_noisy = 0.0;
    for (const auto& pr : training.pairs()) {
        dist += l2_dist_sq(pr.noisy, pr.clean);
        const GridSignal w0 = tv_solve(pr.noisy);
        w0_dist += l2_dist_sq(w0, pr.clean);
        rt_clean += r_tilde(pr.clean);
        rt_noisy += r_tilde(pr.noisy);
    }
    ConditionMap m;
    m["h7_delta"] = {w0_dist - dist, dist < w0_dist};
    m["h8_delta"] = {rt_noisy - rt_clean, rt_clean < rt_noisy};
    return m;
}

nlohmann::ordered_json structure_report(const LearnReport& report) {
    nlohmann::ordered_json out;
    out["family"] = report.family;
    out["argmin"] = report.argmin.describe();
    out["argmin_value"] = report.argmin_value;
    out["interior"] = report.interior;

    std::vector<std::string> held, failed;
    for (const auto& [name, check] : report.conditions)
        (check.holds ? held : failed).push_back(name);

    std::string verdict;
    if (report.conditions.empty()) {
        verdict = "unclassified";
    } else if (report.interior && failed.empty()) {
        verdict = "structure preserved";
    } else if (report.interior) {
        verdict = "interior argmin; unmet conditions: ";
        for (std::size_t k = 0; k < failed.size(); ++k)
            verdict += (k ? ", " : "") + failed[k];
    } else {
        verdict = "boundary " + report.argmin.describe();
        if (!failed.empty()) {
            verdict += "; violated: ";
            for (std::size_t k = 0; k < failed.size(); ++k) verdict += (k ? ", " : "") + failed[k];
        }
    }
    out["verdict"] = verdict;
    out["conditions_held"] = held;
    out["conditions_failed"] = failed;
    return out;
}

nlohmann::ordered_json report_to_json(const LearnReport& report) {
    nlohmann::ordered_json out;
    out["family"] = report.family;
    out["seed"] = report.seed;
    nlohmann::ordered_json samples = nlohmann::ordered_json::array();
    for (const auto& s : report.samples) {
        nlohmann::ordered_json js;
        js["param"] = s.param.describe();
        js["I_bar"] = s.I_bar;
        js["per_pair"] = s.per_pair;
        js["refined"] = s.refined;
        samples.push_back(std::move(js));
    }
    out["samples"] = std::move(samples);
    out["argmin"] = report.argmin.describe();
    out["argmin_value"] = report.argmin_value;
    out["interior"] = report.interior;
    nlohmann::ordered_json conds;
    for (const auto& [name, check] : report.conditions) {
        conds[name] = {{"value", check.value}, {"holds", check.holds}};
    }
    out["conditions"] = std::move(conds);
    out["solver_stats"] = {{"solves", report.stats.solves},
                           {"total_iterations", report.stats.total_iterations},
                           {"failures", report.stats.failures},
                           {"any_best_effort", report.stats.any_best_effort}};
    out["structure"] = structure_report(report);
    return out;
}

}  // namespace bilevel
