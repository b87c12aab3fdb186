#include "bilevel/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "bilevel/util.hpp"

namespace bilevel {

namespace {

// ---------------------------------------------------------------------------
// Piecewise-linear non-decreasing derivative of a convex chain message.
// Linear between breakpoints xs (values vs), slope slo before xs.front() and
// shi after xs.back().
// ---------------------------------------------------------------------------
struct PwlDerivative {
    std::vector<double> xs, vs;
    double slo = 0.0, shi = 0.0;

    static PwlDerivative quadratic(double y, double two_w) {
        PwlDerivative d;
        d.xs = {y};
        d.vs = {0.0};
        d.slo = d.shi = two_w;
        return d;
    }

    // Smallest x with value(x) = target; slopes must be positive outside the
    // breakpoint range whenever the target lies there.
    double solve(double target) const {
        if (target <= vs.front()) {
            if (vs.front() == target) {
                // walk left over a possible flat prefix
                std::size_t k = 0;
                while (k + 1 < vs.size() && vs[k + 1] == target) ++k;
                return xs.front();
            }
            return xs.front() - (vs.front() - target) / slo;
        }
        if (target > vs.back()) return xs.back() + (target - vs.back()) / shi;
        auto it = std::lower_bound(vs.begin(), vs.end(), target);
        std::size_t k = static_cast<std::size_t>(it - vs.begin());
        if (vs[k] == target) return xs[k];
        // vs[k-1] < target < vs[k]
        const double t = (target - vs[k - 1]) / (vs[k] - vs[k - 1]);
        return xs[k - 1] + t * (xs[k] - xs[k - 1]);
    }

    void add_quadratic(double y, double two_w) {
        for (std::size_t k = 0; k < xs.size(); ++k) vs[k] += two_w * (xs[k] - y);
        slo += two_w;
        shi += two_w;
    }

    // Soft message for an |.|-penalty edge of weight lam: clamp the derivative
    // to [-lam, lam]. Returns the clamp interval [blo, bhi].
    void clip_soft(double lam, double& blo, double& bhi) {
        blo = solve(-lam);
        bhi = solve(lam);
        std::vector<double> nxs, nvs;
        nxs.reserve(xs.size() + 2);
        nvs.reserve(xs.size() + 2);
        nxs.push_back(blo);
        nvs.push_back(-lam);
        for (std::size_t k = 0; k < xs.size(); ++k) {
            if (xs[k] > blo && xs[k] < bhi && vs[k] > -lam && vs[k] < lam) {
                nxs.push_back(xs[k]);
                nvs.push_back(vs[k]);
            }
        }
        if (bhi > nxs.back()) {
            nxs.push_back(bhi);
            nvs.push_back(lam);
        } else {
            nvs.back() = lam;
        }
        xs = std::move(nxs);
        vs = std::move(nvs);
        slo = shi = 0.0;
    }

    // Hard message for a window constraint |u_i - u_{i+1}| <= c: the new
    // derivative is 0 on [r-c, r+c] around the argmin r, with the negative
    // branch shifted left by c and the positive branch right by c.
    void shift_hard(double c, double& root) {
        root = solve(0.0);
        std::vector<double> nxs, nvs;
        nxs.reserve(xs.size() + 2);
        nvs.reserve(xs.size() + 2);
        for (std::size_t k = 0; k < xs.size(); ++k) {
            if (vs[k] < 0.0) {
                nxs.push_back(xs[k] - c);
                nvs.push_back(vs[k]);
            }
        }
        nxs.push_back(root - c);
        nvs.push_back(0.0);
        if (c > 0.0) {
            nxs.push_back(root + c);
            nvs.push_back(0.0);
        }
        for (std::size_t k = 0; k < xs.size(); ++k) {
            if (vs[k] > 0.0) {
                nxs.push_back(xs[k] + c);
                nvs.push_back(vs[k]);
            }
        }
        xs = std::move(nxs);
        vs = std::move(nvs);
    }
};

// Exact minimizer of sum_i w (u_i - y_i)^2 + sum_e lam_e |u_{e+1} - u_e|.
std::vector<double> chain_tv_exact(std::span<const double> y, double w,
                                   std::span<const double> lam) {
    const std::size_t n = y.size();
    std::vector<double> u(n);
    if (n == 1) {
        u[0] = y[0];
        return u;
    }
    PwlDerivative d = PwlDerivative::quadratic(y[0], 2.0 * w);
    std::vector<double> blo(n - 1), bhi(n - 1);
    for (std::size_t i = 1; i < n; ++i) {
        d.clip_soft(lam[i - 1], blo[i - 1], bhi[i - 1]);
        d.add_quadratic(y[i], 2.0 * w);
    }
    u[n - 1] = d.solve(0.0);
    for (std::size_t i = n - 1; i-- > 0;) u[i] = std::clamp(u[i + 1], blo[i], bhi[i]);
    return u;
}

// Exact Euclidean projection onto {|u_{i+1} - u_i| <= c} (w > 0 only rescales).
std::vector<double> chain_band_project(std::span<const double> y, double w, double c) {
    const std::size_t n = y.size();
    std::vector<double> u(n);
    if (n == 1) {
        u[0] = y[0];
        return u;
    }
    PwlDerivative d = PwlDerivative::quadratic(y[0], 2.0 * w);
    std::vector<double> roots(n - 1);
    for (std::size_t i = 1; i < n; ++i) {
        d.shift_hard(c, roots[i - 1]);
        d.add_quadratic(y[i], 2.0 * w);
    }
    u[n - 1] = d.solve(0.0);
    for (std::size_t i = n - 1; i-- > 0;)
        u[i] = std::clamp(roots[i], u[i + 1] - c, u[i + 1] + c);
    return u;
}

// Per-edge multipliers matching tv_discrete: the end cells extrapolate, so the
// first and last differences carry an extra half weight.
std::vector<double> tv_edge_weights(std::size_t n, double weight) {
    std::vector<double> lam(n >= 1 ? n - 1 : 0, weight);
    if (lam.empty()) return lam;
    if (lam.size() == 1) {
        lam[0] = 2.0 * weight;
        return lam;
    }
    lam.front() = 1.5 * weight;
    lam.back() = 1.5 * weight;
    return lam;
}

void require_1d(const GridSignal& u, const char* who) {
    if (u.grid().dim() != 1)
        throw std::invalid_argument(std::string(who) + ": 1D grids only");
}

double golden_min(const std::function<double(double)>& f, double a, double b, int iters,
                  double* fbest, int* used) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    int k = 0;
    for (; k < iters && (b - a) > 1e-14 * (1.0 + std::abs(a) + std::abs(b)); ++k) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if (used) *used = k;
    const double x = 0.5 * (a + b);
    if (fbest) *fbest = f(x);
    return x;
}

// ---------------------------------------------------------------------------
// Pair-L1 objectives  h*sum (u_i-f_i)^2 + sum_e lam_e |u_i - u_j|:
// accelerated primal-dual iteration with a duality-gap certificate.
// ---------------------------------------------------------------------------
struct PairTerm {
    std::uint32_t i, j;
    double lam;
};

SolveResult primal_dual_pair_l1(const GridSignal& u_eta, const std::vector<PairTerm>& terms,
                                const SolverConfig& cfg, std::string method, bool best_effort) {
    const std::size_t n = u_eta.size();
    const double w = u_eta.grid().cell_measure();
    const auto f = u_eta.values();

    auto objective = [&](const std::vector<double>& x) {
        double fid = 0.0;
        for (std::size_t i = 0; i < n; ++i) fid += (x[i] - f[i]) * (x[i] - f[i]);
        double reg = 0.0;
        for (const auto& t : terms) reg += t.lam * std::abs(x[t.i] - x[t.j]);
        return w * fid + reg;
    };

    std::vector<double> u(f.begin(), f.end());
    if (terms.empty()) {
        GridSignal m(u_eta.grid_ptr(), std::move(u));
        return SolveResult{std::move(m), 0.0, std::move(method), 0, 0.0, true, best_effort};
    }

    std::vector<std::size_t> degree(n, 0);
    for (const auto& t : terms) {
        ++degree[t.i];
        ++degree[t.j];
    }
    std::size_t max_deg = 1;
    for (std::size_t d : degree) max_deg = std::max(max_deg, d);
    const double L = std::sqrt(2.0 * static_cast<double>(max_deg));

    std::vector<double> z(terms.size(), 0.0), ubar = u, uprev(n), btz(n);
    double tau = 1.0 / L, sigma = 1.0 / L;
    const double gamma = 2.0 * w;  // strong-convexity modulus of the fidelity

    double J = objective(u), gap = J;
    auto dual_gap = [&](const std::vector<double>& x) {
        std::fill(btz.begin(), btz.end(), 0.0);
        for (std::size_t e = 0; e < terms.size(); ++e) {
            btz[terms[e].i] += z[e];
            btz[terms[e].j] -= z[e];
        }
        double dual = 0.0;
        for (std::size_t i = 0; i < n; ++i) dual += btz[i] * f[i] - btz[i] * btz[i] / (4.0 * w);
        return objective(x) - dual;
    };

    int it = 0;
    bool converged = false;
    std::vector<double> ubest = u;
    double Jbest = J;
    for (; it < cfg.max_iters; ++it) {
        for (std::size_t e = 0; e < terms.size(); ++e) {
            const auto& t = terms[e];
            z[e] = std::clamp(z[e] + sigma * (ubar[t.i] - ubar[t.j]), -t.lam, t.lam);
        }
        std::fill(btz.begin(), btz.end(), 0.0);
        for (std::size_t e = 0; e < terms.size(); ++e) {
            btz[terms[e].i] += z[e];
            btz[terms[e].j] -= z[e];
        }
        uprev = u;
        for (std::size_t i = 0; i < n; ++i)
            u[i] = (u[i] - tau * btz[i] + 2.0 * tau * w * f[i]) / (1.0 + 2.0 * tau * w);
        const double theta = 1.0 / std::sqrt(1.0 + gamma * tau);
        tau *= theta;
        sigma /= theta;
        for (std::size_t i = 0; i < n; ++i) ubar[i] = u[i] + theta * (u[i] - uprev[i]);

        if ((it + 1) % 25 == 0 || it + 1 == cfg.max_iters) {
            J = objective(u);
            if (J < Jbest) {
                Jbest = J;
                ubest = u;
            }
            gap = dual_gap(ubest);
            if (gap <= std::max(cfg.tol, 1e-12) * (1.0 + std::abs(Jbest))) {
                converged = true;
                ++it;
                break;
            }
        }
    }
    gap = std::max(dual_gap(ubest), 0.0);
    GridSignal m(u_eta.grid_ptr(), std::move(ubest));
    return SolveResult{std::move(m), Jbest, std::move(method), it, gap, converged, best_effort};
}

// ---------------------------------------------------------------------------
// Smooth convex objectives: Armijo-backtracked gradient descent.
// ---------------------------------------------------------------------------
SolveResult smooth_descent(const GridSignal& u_eta,
                           const std::function<double(const std::vector<double>&)>& reg_value,
                           const std::function<void(const std::vector<double>&,
                                                    std::vector<double>&)>& reg_grad,
                           const SolverConfig& cfg, std::string method, bool best_effort) {
    const std::size_t n = u_eta.size();
    const double w = u_eta.grid().cell_measure();
    const auto f = u_eta.values();
    auto objective = [&](const std::vector<double>& x) {
        double fid = 0.0;
        for (std::size_t i = 0; i < n; ++i) fid += (x[i] - f[i]) * (x[i] - f[i]);
        return w * fid + reg_value(x);
    };

    std::vector<double> u(f.begin(), f.end()), g(n);
    double J = objective(u);
    double step = 1.0;
    double gn = 0.0;
    bool converged = false;
    int it = 0;
    for (; it < cfg.max_iters; ++it) {
        reg_grad(u, g);
        double gn2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            g[i] += 2.0 * w * (u[i] - f[i]);
            gn2 += g[i] * g[i];
        }
        gn = std::sqrt(gn2);
        if (gn <= std::max(cfg.tol, 1e-12) * (1.0 + std::abs(J))) {
            converged = true;
            break;
        }
        double t = step;
        bool moved = false;
        for (int bt = 0; bt < 50; ++bt) {
            std::vector<double> cand(u);
            for (std::size_t i = 0; i < n; ++i) cand[i] -= t * g[i];
            const double Jc = objective(cand);
            if (Jc <= J - 0.25 * t * gn2) {
                u = std::move(cand);
                J = Jc;
                step = 1.6 * t;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if (!moved) {
            converged = true;  // stationary at line-search resolution
            break;
        }
    }
    GridSignal m(u_eta.grid_ptr(), std::move(u));
    return SolveResult{std::move(m), J, std::move(method), it, gn, converged, best_effort};
}

}  // namespace

SolveResult solve_quadratic_weight(double alpha, const GridSignal& u_eta) {
    if (alpha < 0.0) throw std::invalid_argument("solve_quadratic_weight: alpha >= 0 required");
    std::vector<double> v(u_eta.values().begin(), u_eta.values().end());
    for (double& x : v) x /= (1.0 + alpha);
    GridSignal w(u_eta.grid_ptr(), std::move(v));
    const double obj = l2_dist_sq(w, u_eta) + alpha * l2_norm_sq(w);
    return SolveResult{std::move(w), obj, "closed_form", 0, 0.0, true, false};
}

SolveResult solve_tv(double weight, const GridSignal& u_eta) {
    require_1d(u_eta, "solve_tv");
    if (weight < 0.0) throw std::invalid_argument("solve_tv: weight >= 0 required");
    const std::size_t n = u_eta.size();
    const double h = u_eta.grid().cell_measure();
    const auto f = u_eta.values();

    if (weight == 0.0 || n == 1) {
        GridSignal w = u_eta;
        return SolveResult{std::move(w), 0.0, "taut_chain_dp", 0, 0.0, true, false};
    }

    const auto lam = tv_edge_weights(n, weight);
    std::vector<double> u = chain_tv_exact(f, h, lam);

    GridSignal w(u_eta.grid_ptr(), u);
    const double obj = l2_dist_sq(w, u_eta) + weight * tv_discrete(w);

    // Dual certificate: z from the stationarity telescope, clamped into the box.
    std::vector<double> z(n - 1, 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        acc += 2.0 * h * (u[i] - f[i]);
        z[i] = std::clamp(acc, -lam[i], lam[i]);
    }
    double dual = 0.0;
    for (std::size_t e = 0; e + 1 < n; ++e) dual += z[e] * (f[e + 1] - f[e]);
    for (std::size_t i = 0; i < n; ++i) {
        const double dtz = (i > 0 ? z[i - 1] : 0.0) - (i + 1 < n ? z[i] : 0.0);
        dual -= dtz * dtz / (4.0 * h);
    }
    const double gap = std::max(obj - dual, 0.0);
    const bool ok = gap <= 1e-8 * (1.0 + std::abs(obj));
    return SolveResult{std::move(w), obj, "taut_chain_dp", static_cast<int>(n), gap, ok, false};
}

SolveResult solve_lipschitz(double alpha, const GridSignal& u_eta, const SolverConfig& cfg) {
    require_1d(u_eta, "solve_lipschitz");
    if (alpha < 0.0) throw std::invalid_argument("solve_lipschitz: alpha >= 0 required");
    const double h = u_eta.grid().spacing(0);
    const double lip_f = lipschitz_constant(u_eta);

    auto finish = [&](GridSignal w, int iters, double resid, bool conv) {
        const double obj = l2_dist_sq(w, u_eta) + alpha * lipschitz_constant(w);
        return SolveResult{std::move(w), obj, "golden_band_dp", iters, resid, conv, false};
    };

    if (alpha == 0.0 || lip_f == 0.0) return finish(u_eta, 0, 0.0, true);

    const auto f = u_eta.values();
    auto project = [&](double lip_bound) {
        if (lip_bound >= lip_f) return std::vector<double>(f.begin(), f.end());
        if (lip_bound <= 0.0) {
            const double m = mean_value(u_eta);
            return std::vector<double>(f.size(), m);
        }
        return chain_band_project(f, h, lip_bound * h);
    };
    auto phi = [&](double lip_bound) {
        GridSignal proj(u_eta.grid_ptr(), project(lip_bound));
        return l2_dist_sq(proj, u_eta) + alpha * lip_bound;
    };

    int used = 0;
    double fbest = 0.0;
    const int iters = std::max(cfg.max_iters, 90);
    const double L = golden_min(phi, 0.0, lip_f, iters, &fbest, &used);
    // candidate endpoints: fully constant and untouched
    double best_L = L, best_phi = fbest;
    for (double cand : {0.0, lip_f}) {
        const double v = phi(cand);
        if (v < best_phi) {
            best_phi = v;
            best_L = cand;
        }
    }
    GridSignal w(u_eta.grid_ptr(), project(best_L));
    const double resid = lip_f * std::pow((std::sqrt(5.0) - 1.0) / 2.0, used);
    return finish(std::move(w), used, resid, resid <= std::max(cfg.tol, 1e-12) * (1.0 + lip_f));
}

SolveResult solve_ak(double delta, const RhoSpec& rho, const GridSignal& u_eta,
                     const SolverConfig& cfg) {
    if (!(delta > 0.0)) throw std::invalid_argument("solve_ak: delta > 0 required");
    const Grid& grid = u_eta.grid();
    const std::size_t n = grid.node_count();
    const double w2 = grid.cell_measure() * grid.cell_measure();
    const double scale = std::pow(delta, -grid.dim());

    // Interacting pairs; rho with compact support keeps the list banded.
    std::vector<PairTerm> terms;
    const double cutoff = rho.support_radius() * delta;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j_end = n;
        if (grid.dim() == 1 && std::isfinite(cutoff)) {
            const std::size_t window = static_cast<std::size_t>(cutoff / grid.spacing(0)) + 2;
            j_end = std::min(n, i + window);
        }
        for (std::size_t j = i + 1; j < j_end; ++j) {
            const double dist = grid.distance(i, j);
            const double r = rho(dist / delta);
            if (r != 0.0)
                terms.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                                 scale * 2.0 * w2 * r / dist});
        }
    }
    return primal_dual_pair_l1(u_eta, terms, cfg, "primal_dual", false);
}

SolveResult solve_exponent(const ExtendedParam& p, const DoubleIntegrand& f,
                           const GridSignal& u_eta, const SolverConfig& cfg) {
    const Grid& grid = u_eta.grid();
    if (p.is_lower())
        throw std::invalid_argument("solve_exponent: the exponent interval starts at p = 1");

    if (p.is_upper()) {
        if (f.kind() == DoubleIntegrand::Kind::kDiffQuotient) {
            SolveResult r = solve_lipschitz(f.diff_quotient_scale(), u_eta, cfg);
            r.method = "sup_edge_lipschitz";
            return r;
        }
        // Oscillation-type sup kernel: exact for constant kernels via an
        // independent two-sided clip, best-effort otherwise.
        require_1d(u_eta, "solve_exponent(upper edge)");
        const auto vals = u_eta.values();
        const double fmin = *std::min_element(vals.begin(), vals.end());
        const double fmax = *std::max_element(vals.begin(), vals.end());
        const double w = grid.cell_measure();
        const double a = f.constant_kernel().value_or(
            f({0.0, 0.0}, {grid.spacing(0), 0.0}, 1.0, 0.0));  // sampled scale
        auto lower_cost = [&](double t) {
            double s = 0.0;
            for (double v : vals)
                if (v < t) s += (t - v) * (t - v);
            return w * s - a * t;
        };
        auto upper_cost = [&](double t) {
            double s = 0.0;
            for (double v : vals)
                if (v > t) s += (v - t) * (v - t);
            return w * s + a * t;
        };
        int used1 = 0, used2 = 0;
        double th1 = golden_min(lower_cost, fmin, fmax, 200, nullptr, &used1);
        double th2 = golden_min(upper_cost, fmin, fmax, 200, nullptr, &used2);
        std::vector<double> u(vals.begin(), vals.end());
        if (th1 > th2) {
            const double m = mean_value(u_eta);
            std::fill(u.begin(), u.end(), m);
        } else {
            for (double& v : u) v = std::clamp(v, th1, th2);
        }
        GridSignal wsig(u_eta.grid_ptr(), std::move(u));
        const double obj = l2_dist_sq(wsig, u_eta) + eval_exponent(p, f, wsig);
        const bool exact = f.constant_kernel().has_value();
        return SolveResult{std::move(wsig), obj,  "sup_edge_clip", used1 + used2,
                           0.0,             true, !exact};
    }

    const double pv = p.value();
    if (pv < 1.0) throw std::invalid_argument("solve_exponent: p >= 1 required");
    const std::size_t n = grid.node_count();
    const double w2 = grid.cell_measure() * grid.cell_measure();
    const double msq = grid.domain().measure() * grid.domain().measure();

    if (pv == 1.0 && f.kind() != DoubleIntegrand::Kind::kCustom) {
        // pair-separable L1 objective: (1/msq) sum w^2 f = sum_e lam_e |du|
        std::vector<PairTerm> terms;
        terms.reserve(n * (n - 1) / 2);
        for (std::size_t i = 0; i < n; ++i) {
            const auto xi = grid.point(i);
            for (std::size_t j = i + 1; j < n; ++j) {
                const double kernel = f(xi, grid.point(j), 1.0, 0.0);  // f is |du|-homogeneous
                if (kernel != 0.0)
                    terms.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                                     2.0 * w2 / msq * kernel});
            }
        }
        return primal_dual_pair_l1(u_eta, terms, cfg, "primal_dual", false);
    }

    // p > 1 (or custom integrand): C1 composite, Armijo gradient descent.
    auto power_sum = [&, pv](const std::vector<double>& u) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto xi = grid.point(i);
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double v = f(xi, grid.point(j), u[i], u[j]);
                if (v > 0.0) s += std::pow(v, pv);
            }
        }
        return s * w2 / msq;
    };
    auto value = [power_sum, pv](const std::vector<double>& u) {
        const double s = power_sum(u);
        return s <= 0.0 ? 0.0 : std::pow(s, 1.0 / pv);
    };
    auto gradient = [&, pv, power_sum](const std::vector<double>& u, std::vector<double>& g) {
        std::fill(g.begin(), g.end(), 0.0);
        const double s = power_sum(u);
        if (s <= 0.0) return;
        const double outer = std::pow(s, 1.0 / pv - 1.0) / pv;
        for (std::size_t i = 0; i < n; ++i) {
            const auto xi = grid.point(i);
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const auto xj = grid.point(j);
                const double v = f(xi, xj, u[i], u[j]);
                if (v <= 0.0) continue;
                acc += pv * std::pow(v, pv - 1.0) * f.dxi(xi, xj, u[i], u[j]);
            }
            g[i] = outer * (2.0 * w2 / msq) * acc;
        }
    };
    return smooth_descent(u_eta, value, gradient, cfg, "gradient_descent", !f.convex());
}

SolveResult solve_bn_local(double delta, const PhiSpec& phi, const GridSignal& u_eta,
                           const SolverConfig& cfg) {
    if (!(delta > 0.0)) throw std::invalid_argument("solve_bn_local: delta > 0 required");
    const Grid& grid = u_eta.grid();
    const std::size_t n = grid.node_count();
    const double w = grid.cell_measure();
    const double w2 = w * w;
    const double expo = grid.dim() + 1;
    const auto f = u_eta.values();

    // kernel table over ordered pairs is symmetric; keep i<j with factor 2
    struct Pair {
        std::uint32_t i, j;
        double kern;  // 2 * w^2 / dist^{n+1}
    };
    std::vector<Pair> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            pairs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                             2.0 * w2 / std::pow(grid.distance(i, j), expo)});

    auto reg_value = [&](const std::vector<double>& u) {
        double s = 0.0;
        for (const auto& p : pairs) s += p.kern * phi(std::abs(u[p.i] - u[p.j]) / delta);
        return delta * s;
    };
    auto objective = [&](const std::vector<double>& u) {
        double fid = 0.0;
        for (std::size_t i = 0; i < n; ++i) fid += (u[i] - f[i]) * (u[i] - f[i]);
        return w * fid + reg_value(u);
    };
    auto gradient = [&](const std::vector<double>& u, std::vector<double>& g) {
        for (std::size_t i = 0; i < n; ++i) g[i] = 2.0 * w * (u[i] - f[i]);
        if (phi.differentiable()) {
            for (const auto& p : pairs) {
                const double d = u[p.i] - u[p.j];
                if (d == 0.0) continue;
                const double s = p.kern * phi.derivative(std::abs(d) / delta) * (d > 0.0 ? 1.0 : -1.0);
                g[p.i] += s;
                g[p.j] -= s;
            }
        } else {
            // row-local central differences of the pair sum
            const double eps = 1e-6 * delta;
            for (std::size_t i = 0; i < n; ++i) {
                double plus = 0.0, minus = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (j == i) continue;
                    const double kern = 2.0 * w2 / std::pow(grid.distance(i, j), expo);
                    plus += kern * phi(std::abs(u[i] + eps - u[j]) / delta);
                    minus += kern * phi(std::abs(u[i] - eps - u[j]) / delta);
                }
                g[i] += delta * (plus - minus) / (2.0 * eps);
            }
        }
    };

    const double osc = *std::max_element(f.begin(), f.end()) -
                       *std::min_element(f.begin(), f.end());
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, 0.1 * osc + 1e-3);

    std::vector<double> best;
    double best_obj = 0.0, best_gn = 0.0;
    bool best_conv = false;
    int total_iters = 0;
    const int restarts = std::max(1, cfg.restarts);
    for (int r = 0; r < restarts; ++r) {
        std::vector<double> u(f.begin(), f.end());
        if (r > 0)
            for (double& v : u) v += noise(rng);
        std::vector<double> g(n);
        double J = objective(u);
        double step = 1.0;
        bool conv = false;
        int it = 0;
        const int per_start = std::max(20, cfg.max_iters / restarts);
        for (; it < per_start; ++it) {
            gradient(u, g);
            double gn2 = 0.0;
            for (double v : g) gn2 += v * v;
            const double gn = std::sqrt(gn2);
            if (gn <= cfg.tol) {
                conv = true;
                break;
            }
            // backtracking Armijo
            double t = step;
            bool moved = false;
            for (int bt = 0; bt < 40; ++bt) {
                std::vector<double> cand(u);
                for (std::size_t i = 0; i < n; ++i) cand[i] -= t * g[i];
                const double Jc = objective(cand);
                if (Jc <= J - 0.25 * t * gn2) {
                    u = std::move(cand);
                    J = Jc;
                    step = t * 1.6;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if (!moved) {
                conv = true;  // no descent direction at line-search resolution
                break;
            }
        }
        total_iters += it;
        gradient(u, g);
        double gn = 0.0;
        for (double v : g) gn += v * v;
        gn = std::sqrt(gn);
        if (best.empty() || J < best_obj) {
            best = u;
            best_obj = J;
            best_gn = gn;
            best_conv = conv && gn <= std::max(cfg.tol, 1e-6 * (1.0 + std::abs(J)));
        }
    }
    GridSignal minimizer(u_eta.grid_ptr(), std::move(best));
    return SolveResult{std::move(minimizer), best_obj, "multistart_descent_local",
                       total_iters,          best_gn,  best_conv,
                       true};
}

SolveResult solve_weight_interior(double alpha, const BaseRegularizer& base,
                                  const GridSignal& u_eta, const SolverConfig& cfg) {
    if (!(alpha >= 0.0)) throw std::invalid_argument("solve_weight_interior: alpha >= 0 required");
    using K = BaseRegularizer::Kind;
    switch (base.kind()) {
        case K::kQuadraticL2:
            return solve_quadratic_weight(alpha, u_eta);
        case K::kTV:
            return solve_tv(alpha, u_eta);
        case K::kGagliardo: {
            // alpha * ( sum w^2 |du|^p / dist^{beta p} )^{1/p}: pair-L1 at p = 1,
            // a C1 composite otherwise.
            if (alpha == 0.0) {
                GridSignal w = u_eta;
                return SolveResult{std::move(w), 0.0, "identity", 0, 0.0, true, false};
            }
            const Grid& grid = u_eta.grid();
            const std::size_t n = grid.node_count();
            const double w2 = grid.cell_measure() * grid.cell_measure();
            const double p = base.gagliardo_p();
            const double bp = base.gagliardo_beta() * p;
            if (p == 1.0) {
                std::vector<PairTerm> terms;
                terms.reserve(n * (n - 1) / 2);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = i + 1; j < n; ++j)
                        terms.push_back({static_cast<std::uint32_t>(i),
                                         static_cast<std::uint32_t>(j),
                                         alpha * 2.0 * w2 / std::pow(grid.distance(i, j), bp)});
                return primal_dual_pair_l1(u_eta, terms, cfg, "primal_dual", false);
            }
            auto power_sum = [&, p, bp](const std::vector<double>& u) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = i + 1; j < n; ++j) {
                        const double diff = std::abs(u[i] - u[j]);
                        if (diff == 0.0) continue;
                        s += 2.0 * std::pow(diff, p) / std::pow(grid.distance(i, j), bp);
                    }
                return s * w2;
            };
            auto value = [power_sum, alpha, p](const std::vector<double>& u) {
                const double s = power_sum(u);
                return s <= 0.0 ? 0.0 : alpha * std::pow(s, 1.0 / p);
            };
            auto gradient = [&, power_sum, alpha, p, bp](const std::vector<double>& u,
                                                         std::vector<double>& g) {
                std::fill(g.begin(), g.end(), 0.0);
                const double s = power_sum(u);
                if (s <= 0.0) return;
                const double outer = alpha * std::pow(s, 1.0 / p - 1.0) / p;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = i + 1; j < n; ++j) {
                        const double d = u[i] - u[j];
                        if (d == 0.0) continue;
                        const double t = 2.0 * w2 * p * std::pow(std::abs(d), p - 1.0) /
                                         std::pow(grid.distance(i, j), bp) *
                                         (d > 0.0 ? 1.0 : -1.0);
                        g[i] += outer * t;
                        g[j] -= outer * t;
                    }
            };
            return smooth_descent(u_eta, value, gradient, cfg, "gradient_descent", false);
        }
        default:
            throw std::invalid_argument(
                "solve_weight_interior: custom bases evaluate only; no solver is attached");
    }
}

SolveResult boundary_solve(const FamilySpec& family, const ExtendedParam& edge,
                           const GridSignal& u_eta) {
    if (edge.is_interior())
        throw std::invalid_argument("boundary_solve: edge parameter expected");
    using K = FamilySpec::Kind;
    auto identity = [&](const char* tag) {
        GridSignal w = u_eta;
        return SolveResult{std::move(w), 0.0, tag, 0, 0.0, true, false};
    };
    switch (family.kind()) {
        case K::kWeight: {
            if (edge.is_lower()) return identity("edge_identity");
            const double m = mean_value(u_eta);
            GridSignal w = GridSignal::constant(u_eta.grid_ptr(), m);
            const double obj = l2_dist_sq(w, u_eta);
            return SolveResult{std::move(w), obj, "edge_mean_constant", 0, 0.0, true, false};
        }
        case K::kExponent: {
            if (edge.is_upper()) return solve_exponent(edge, family.integrand(), u_eta);
            throw std::invalid_argument("boundary_solve: exponent family has no lower edge model");
        }
        case K::kBrezisNguyen: {
            if (edge.is_upper()) return identity("edge_identity");
            if (!family.k_phi())
                throw std::invalid_argument(
                    "boundary_solve: lower edge of the phi family needs k_phi (supply or estimate)");
            SolveResult r = solve_tv(*family.k_phi(), u_eta);
            r.method = "edge_tv_model";
            return r;
        }
        case K::kAubertKornprobst: {
            if (edge.is_upper()) return identity("edge_identity");
            SolveResult r = solve_tv(kappa_n(u_eta.grid().dim()), u_eta);
            r.method = "edge_tv_model";
            return r;
        }
        default:
            throw std::invalid_argument(
                "boundary_solve: fractional edges are handled by the spectral module");
    }
}

}  // namespace bilevel
