#include "bilevel/mosco.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "bilevel/util.hpp"

namespace bilevel {

namespace {

// Linear least squares of value = limit + C * g_k for fixed regressor g.
// Returns (limit, C, sse, sstot).
struct LinFit {
    double limit, coeff, sse, sstot;
};

LinFit linear_fit(std::span<const double> values, const std::vector<double>& g) {
    const std::size_t n = values.size();
    double sg = 0.0, sv = 0.0, sgg = 0.0, sgv = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sg += g[k];
        sv += values[k];
        sgg += g[k] * g[k];
        sgv += g[k] * values[k];
    }
    const double det = n * sgg - sg * sg;
    double coeff = 0.0, limit = sv / n;
    if (std::abs(det) > 1e-300) {
        coeff = (n * sgv - sg * sv) / det;
        limit = (sv - coeff * sg) / n;
    }
    double sse = 0.0, sstot = 0.0;
    const double mean = sv / n;
    for (std::size_t k = 0; k < n; ++k) {
        const double fit = limit + coeff * g[k];
        sse += (values[k] - fit) * (values[k] - fit);
        sstot += (values[k] - mean) * (values[k] - mean);
    }
    return {limit, coeff, sse, sstot};
}

}  // namespace

FitResult extrapolate(std::span<const double> values, std::span<const double> params,
                      const std::string& model) {
    if (values.size() < 4) throw std::invalid_argument("extrapolate: need >= 4 points");
    if (model != "power-law" && model != "linear-in-1/k")
        throw std::invalid_argument("extrapolate: unknown model " + model);

    double vmin = values[0], vmax = values[0];
    for (double v : values) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    if (vmax - vmin <= 1e-13 * (1.0 + std::abs(vmax)))
        return FitResult{values.back(), 0.0, 1.0};

    if (model == "linear-in-1/k") {
        std::vector<double> g(values.size());
        for (std::size_t k = 0; k < g.size(); ++k) g[k] = 1.0 / static_cast<double>(k + 1);
        const auto fit = linear_fit(values, g);
        return FitResult{fit.limit, -1.0, fit.sstot > 0.0 ? 1.0 - fit.sse / fit.sstot : 1.0};
    }
    if (params.size() != values.size())
        throw std::invalid_argument("extrapolate: params/values size mismatch");

    auto sse_at = [&](double rate) {
        std::vector<double> g(params.size());
        for (std::size_t k = 0; k < g.size(); ++k) g[k] = std::pow(std::abs(params[k]), rate);
        return linear_fit(values, g).sse;
    };
    // golden section over the rate
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = 0.05, b = 4.0;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = sse_at(c), fd = sse_at(d);
    for (int it = 0; it < 120; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = sse_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = sse_at(d);
        }
    }
    const double rate = 0.5 * (a + b);
    std::vector<double> g(params.size());
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = std::pow(std::abs(params[k]), rate);
    const auto fit = linear_fit(values, g);
    return FitResult{fit.limit, rate, fit.sstot > 0.0 ? 1.0 - fit.sse / fit.sstot : 1.0};
}

namespace {

double eval_family_interior(const FamilySpec& family, double t, const GridSignal& u) {
    using K = FamilySpec::Kind;
    const auto p = ExtendedParam::interior(t);
    switch (family.kind()) {
        case K::kWeight: return eval_weight(p, family.base(), u);
        case K::kExponent: return eval_exponent(p, family.integrand(), u);
        case K::kBrezisNguyen: return eval_bn(p, family.phi(), u, family.k_phi());
        case K::kAubertKornprobst: return eval_ak(p, family.rho(), u);
        default:
            throw std::invalid_argument("scan: the fractional family is evaluated spectrally");
    }
}

double eval_family_at(const FamilySpec& family, const ExtendedParam& p, const GridSignal& u) {
    using K = FamilySpec::Kind;
    if (p.is_interior()) return eval_family_interior(family, p.value(), u);
    switch (family.kind()) {
        case K::kWeight: return eval_weight(p, family.base(), u);
        case K::kExponent: return eval_exponent(p, family.integrand(), u);
        case K::kBrezisNguyen: return eval_bn(p, family.phi(), u, family.k_phi());
        case K::kAubertKornprobst: return eval_ak(p, family.rho(), u);
        default:
            throw std::invalid_argument("scan: the fractional family is evaluated spectrally");
    }
}

bool is_delta_family(const FamilySpec& family) {
    return family.kind() == FamilySpec::Kind::kBrezisNguyen ||
           family.kind() == FamilySpec::Kind::kAubertKornprobst;
}

// distance-to-target regressor for the power-law extrapolation
std::vector<double> regressors(const ExtendedParam& target, std::span<const double> params) {
    std::vector<double> x(params.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (target.is_lower()) {
            x[k] = params[k];
        } else if (target.is_upper()) {
            x[k] = 1.0 / params[k];
        } else {
            x[k] = std::abs(params[k] - target.value());
        }
    }
    return x;
}

}  // namespace

SequenceScan scan_constant(const FamilySpec& family, const ExtendedParam& target,
                           std::span<const double> params, const GridSignal& u) {
    SequenceScan scan;
    scan.family = family.describe();
    scan.target = target;
    scan.recovery = "constant";

    std::vector<double> kept(params.begin(), params.end());
    if (is_delta_family(family) && (target.is_lower() || target.is_interior())) {
        const double floor = 8.0 * u.grid().spacing(0);
        const std::size_t before = kept.size();
        kept.erase(std::remove_if(kept.begin(), kept.end(), [&](double d) { return d < floor; }),
                   kept.end());
        if (kept.size() != before) scan.note = "deltas below 8h dropped (grid resolution rule)";
        else scan.note = "delta >= 8h rule in force";
    }
    if (kept.size() < 4) throw std::invalid_argument("scan_constant: need >= 4 usable parameters");

    scan.params = kept;
    scan.values.reserve(kept.size());
    for (double t : kept) scan.values.push_back(eval_family_interior(family, t, u));
    scan.expected_limit = eval_family_at(family, target, u);

    const auto x = regressors(target, scan.params);
    scan.extrapolated_limit = extrapolate(scan.values, x, "power-law").limit;
    const double denom = std::max(std::abs(scan.expected_limit), 1e-12);
    scan.rel_gap = std::abs(scan.extrapolated_limit - scan.expected_limit) / denom;
    return scan;
}

SequenceScan scan_scaled_bn(double delta_target, std::span<const double> deltas,
                            const PhiSpec& phi, const GridSignal& u) {
    if (!(delta_target > 0.0))
        throw std::invalid_argument("scan_scaled_bn: interior delta target required");
    SequenceScan scan;
    scan.family = "brezis_nguyen";
    scan.target = ExtendedParam::interior(delta_target);
    scan.recovery = "scaled";
    scan.expected_limit = eval_bn(ExtendedParam::interior(delta_target), phi, u);

    scan.params.assign(deltas.begin(), deltas.end());
    scan.values.reserve(deltas.size());
    for (double dk : deltas) {
        std::vector<double> scaled(u.values().begin(), u.values().end());
        const double factor = dk / delta_target;
        for (double& v : scaled) v *= factor;
        GridSignal uk(u.grid_ptr(), std::move(scaled));
        scan.values.push_back(eval_bn(ExtendedParam::interior(dk), phi, uk));
    }
    // identity: values_k / expected = delta_k / delta_target, so the scan
    // converges exactly at the sequence rate; record the terminal value.
    scan.extrapolated_limit = scan.values.back() * delta_target / deltas.back();
    const double denom = std::max(std::abs(scan.expected_limit), 1e-12);
    scan.rel_gap = std::abs(scan.extrapolated_limit - scan.expected_limit) / denom;
    return scan;
}

SequenceScan scan_bn_vanishing(std::span<const double> deltas, const PhiSpec& phi,
                               const GridSignal& u) {
    SequenceScan scan;
    scan.family = "brezis_nguyen";
    scan.target = ExtendedParam::upper_edge();
    scan.recovery = "constant";
    scan.expected_limit = 0.0;

    const double lip = lipschitz_constant(u);
    const double a = phi.quad_bound();
    const int n = u.grid().dim();
    const double kernel_mass = double_integral(
        [n](std::array<double, 2> x, std::array<double, 2> y, double, double) {
            return std::pow(std::hypot(x[0] - y[0], x[1] - y[1]), 1.0 - n);
        },
        u);

    scan.params.assign(deltas.begin(), deltas.end());
    for (double dk : deltas) {
        if (!(dk > 0.0)) throw std::invalid_argument("scan_bn_vanishing: deltas must be positive");
        scan.values.push_back(eval_bn(ExtendedParam::interior(dk), phi, u));
        scan.bounds.push_back(a * lip * lip / dk * kernel_mass);
    }
    scan.extrapolated_limit = extrapolate(scan.values, regressors(scan.target, scan.params),
                                          "power-law")
                                  .limit;
    scan.rel_gap = std::abs(scan.extrapolated_limit);
    for (std::size_t k = 0; k < scan.values.size(); ++k) {
        if (scan.values[k] > scan.bounds[k] * (1.0 + 1e-12) + 1e-300) {
            scan.note = "certified bound violated";
            return scan;
        }
    }
    scan.note = "all values within the quadratic-cap bound";
    return scan;
}

std::vector<MonotonicityCase> certify_monotonicity(
    const FamilySpec& family, std::span<const std::pair<double, double>> param_pairs,
    std::span<const GridSignal> samples) {
    using K = FamilySpec::Kind;
    if (family.kind() != K::kExponent && family.kind() != K::kAubertKornprobst)
        throw std::invalid_argument(
            "certify_monotonicity: comparison inequalities exist for the exponent and quotient families");
    std::vector<MonotonicityCase> cases;
    cases.reserve(param_pairs.size() * samples.size());
    const double slack = 1e-10;
    for (const auto& [small, large] : param_pairs) {
        if (!(small <= large))
            throw std::invalid_argument("certify_monotonicity: pairs must be ordered");
        for (const auto& u : samples) {
            MonotonicityCase c;
            c.param_small = small;
            c.param_large = large;
            if (family.kind() == K::kExponent) {
                // non-decreasing in p under the measure normalization
                c.lhs = eval_exponent(ExtendedParam::interior(small), family.integrand(), u);
                c.rhs = eval_exponent(ExtendedParam::interior(large), family.integrand(), u);
                c.pass = c.rhs >= c.lhs - slack * (1.0 + std::abs(c.lhs));
            } else {
                const int n = u.grid().dim();
                c.lhs = eval_ak(ExtendedParam::interior(small), family.rho(), u);
                c.rhs = std::pow(large / small, n) *
                        eval_ak(ExtendedParam::interior(large), family.rho(), u);
                c.pass = c.lhs <= c.rhs + slack * (1.0 + std::abs(c.rhs));
            }
            cases.push_back(c);
        }
    }
    return cases;
}

GridSignal sawtooth_clean(const GridPtr& grid) {
    auto v = [](double x) {
        if (x <= 0.0 || x > 1.0) return 0.0;
        if (x <= 0.25) return x;
        if (x <= 0.75) return -x + 0.5;
        return x - 1.0;
    };
    return GridSignal::from_function(grid, [v](double x) {
        if (x > 1.0 / 3.0 && x <= 2.0 / 3.0) return 10.0 * v(3.0 * x - 1.0);
        return 0.0;
    });
}

GridSignal sawtooth_noisy(const GridPtr& grid, double eps) {
    auto v = [](double x) {
        if (x <= 0.0 || x > 1.0) return 0.0;
        if (x <= 0.25) return x;
        if (x <= 0.75) return -x + 0.5;
        return x - 1.0;
    };
    return GridSignal::from_function(grid, [v, eps](double x) {
        if (x <= 1.0 / 3.0) return v(3.0 * x);
        if (x <= 2.0 / 3.0) return (10.0 - eps) * v(3.0 * x - 1.0);
        return v(3.0 * x - 2.0);
    });
}

ProbeSet make_probes(const GridPtr& grid, std::uint64_t seed) {
    if (grid->dim() != 1)
        throw std::invalid_argument("make_probes: the probe battery is one-dimensional");
    ProbeSet probes;
    const double a = grid->domain().lower(0);
    const double len = grid->domain().side(0);

    probes.names.push_back("ramp");
    probes.signals.push_back(GridSignal::from_function(grid, [](double x) { return x; }));

    probes.names.push_back("sawtooth_noisy");
    if (std::abs(a) < 1e-14 && std::abs(len - 1.0) < 1e-14) {
        probes.signals.push_back(sawtooth_noisy(grid, 0.1));
    } else {
        // generic domain: rescale the unit sawtooth
        auto unit = sawtooth_noisy(make_grid(Interval{0.0, 1.0}, grid->points_per_axis()), 0.1);
        probes.signals.push_back(GridSignal(grid, std::vector<double>(unit.values().begin(),
                                                                      unit.values().end())));
    }

    probes.names.push_back("sine");
    const double pi = 3.14159265358979323846;
    probes.signals.push_back(GridSignal::from_function(
        grid, [a, len, pi](double x) { return std::sin(2.0 * pi * (x - a) / len); }));

    probes.names.push_back("step");
    const double mid = a + 0.5 * len;
    probes.signals.push_back(
        GridSignal::from_function(grid, [mid](double x) { return x < mid ? 0.0 : 1.0; }));

    probes.names.push_back("random_lipschitz");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> slope(-2.0, 2.0);
    std::vector<double> vals(grid->node_count());
    double cur = 0.0;
    const double h = grid->spacing(0);
    for (std::size_t i = 0; i < vals.size(); ++i) {
        vals[i] = cur;
        cur += slope(rng) * h;
    }
    probes.signals.push_back(GridSignal(grid, std::move(vals)));
    return probes;
}

void write_scan_csv(const SequenceScan& scan, std::ostream& os) {
    os << "param,value,bound,expected\r\n";
    char buf[128];
    for (std::size_t k = 0; k < scan.params.size(); ++k) {
        const double bound = k < scan.bounds.size() ? scan.bounds[k] : 0.0;
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\r\n", scan.params[k],
                      scan.values[k], bound, scan.expected_limit);
        os << buf;
    }
}

}  // namespace bilevel
