#include "bilevel/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bilevel/util.hpp"

namespace bilevel {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_zero_pi(double a, double b) {
    return std::abs(a) < 1e-12 && std::abs(b - kPi) < 1e-12;
}

void require_spectral_domain(const Domain& d) {
    if (d.dim() == 1) {
        const auto& iv = std::get<Interval>(d.kind());
        if (is_zero_pi(iv.a, iv.b)) return;
    } else {
        const auto& r = std::get<Rect>(d.kind());
        if (is_zero_pi(r.a1, r.b1) && is_zero_pi(r.a2, r.b2)) return;
    }
    throw std::invalid_argument("EigenBasis: domain must be (0,pi) or (0,pi)^2");
}

}  // namespace

EigenBasis::EigenBasis(Domain domain, int m_max) : domain_(std::move(domain)), m_max_(m_max) {
    require_spectral_domain(domain_);
    if (m_max_ < 1) throw std::invalid_argument("EigenBasis: m_max >= 1 required");
    axis_norm_ = std::sqrt(2.0 / kPi);
    if (domain_.dim() == 1) {
        for (int m = 1; m <= m_max_; ++m) {
            indices_.push_back({m, 0});
            eigenvalues_.push_back(static_cast<double>(m) * m);
        }
    } else {
        for (int m1 = 1; m1 <= m_max_; ++m1)
            for (int m2 = 1; m2 <= m_max_; ++m2) {
                indices_.push_back({m1, m2});
                eigenvalues_.push_back(static_cast<double>(m1) * m1 + static_cast<double>(m2) * m2);
            }
    }
    std::vector<std::size_t> order(indices_.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (eigenvalues_[a] != eigenvalues_[b]) return eigenvalues_[a] < eigenvalues_[b];
        return indices_[a] < indices_[b];
    });
    std::vector<std::array<int, 2>> idx;
    std::vector<double> ev;
    idx.reserve(order.size());
    ev.reserve(order.size());
    for (std::size_t k : order) {
        idx.push_back(indices_[k]);
        ev.push_back(eigenvalues_[k]);
    }
    indices_ = std::move(idx);
    eigenvalues_ = std::move(ev);
}

double EigenBasis::eigenfunction(std::size_t k, std::array<double, 2> x) const {
    const auto& m = indices_[k];
    if (domain_.dim() == 1) return axis_norm_ * std::sin(m[0] * x[0]);
    return axis_norm_ * axis_norm_ * std::sin(m[0] * x[0]) * std::sin(m[1] * x[1]);
}

GridSignal EigenBasis::eigenfunction_signal(std::size_t k, const GridPtr& grid) const {
    if (!(grid->domain() == domain_))
        throw std::invalid_argument("eigenfunction_signal: grid domain mismatch");
    std::vector<double> v(grid->node_count());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = eigenfunction(k, grid->point(i));
    return GridSignal(grid, std::move(v));
}

std::size_t EigenBasis::mode_position(int m1, int m2) const {
    for (std::size_t k = 0; k < indices_.size(); ++k)
        if (indices_[k][0] == m1 && indices_[k][1] == m2) return k;
    throw std::invalid_argument("EigenBasis: mode not in basis");
}

BasisPtr build_basis(const Domain& domain, int m_max) {
    return std::make_shared<EigenBasis>(domain, m_max);
}

namespace {

// Per-axis sine table: sines[m-1][i] = sin(m * x_i), m = 1..m_max.
std::vector<std::vector<double>> sine_table(const Grid& grid, int axis, int m_max) {
    const int p = grid.points_per_axis();
    std::vector<double> coords(p);
    const double lower = 0.0;  // spectral domains start at 0
    const double h = grid.spacing(axis);
    for (int i = 0; i < p; ++i) coords[i] = lower + (i + 0.5) * h;
    std::vector<std::vector<double>> table(m_max, std::vector<double>(p));
    for (int m = 1; m <= m_max; ++m)
        for (int i = 0; i < p; ++i) table[m - 1][i] = std::sin(m * coords[i]);
    return table;
}

}  // namespace

SpectralCoeffs analyze(const GridSignal& u, const BasisPtr& basis) {
    if (!(u.grid().domain() == basis->domain()))
        throw std::invalid_argument("analyze: signal grid does not match the basis domain");
    const Grid& g = u.grid();
    const double w = g.cell_measure();
    const int p = g.points_per_axis();
    std::vector<double> coeffs(basis->size(), 0.0);

    if (g.dim() == 1) {
        const auto sx = sine_table(g, 0, basis->m_max());
        const double nrm = basis->axis_normalization();
        for (std::size_t k = 0; k < basis->size(); ++k) {
            const int m = basis->indices()[k][0];
            std::vector<double> terms(p);
            for (int i = 0; i < p; ++i) terms[i] = u[i] * sx[m - 1][i];
            coeffs[k] = w * nrm * pairwise_sum(terms);
        }
    } else {
        const auto sx = sine_table(g, 0, basis->m_max());
        const auto sy = sine_table(g, 1, basis->m_max());
        const double nrm = basis->axis_normalization() * basis->axis_normalization();
        // collapse rows against the y-sines first, then the x-sines
        for (std::size_t k = 0; k < basis->size(); ++k) {
            const int m1 = basis->indices()[k][0];
            const int m2 = basis->indices()[k][1];
            std::vector<double> rows(p);
            for (int iy = 0; iy < p; ++iy) {
                std::vector<double> terms(p);
                for (int ix = 0; ix < p; ++ix)
                    terms[ix] = u[static_cast<std::size_t>(iy) * p + ix] * sx[m1 - 1][ix];
                rows[iy] = pairwise_sum(terms) * sy[m2 - 1][iy];
            }
            coeffs[k] = w * nrm * pairwise_sum(rows);
        }
    }
    return SpectralCoeffs{basis, std::move(coeffs), u.grid_ptr()};
}

GridSignal synthesize(const SpectralCoeffs& c) {
    if (!c.grid) throw std::invalid_argument("synthesize: coefficients carry no grid");
    const Grid& g = *c.grid;
    const int p = g.points_per_axis();
    std::vector<double> v(g.node_count(), 0.0);
    const auto sx = sine_table(g, 0, c.basis->m_max());
    if (g.dim() == 1) {
        const double nrm = c.basis->axis_normalization();
        for (std::size_t k = 0; k < c.coeffs.size(); ++k) {
            const double a = c.coeffs[k] * nrm;
            if (a == 0.0) continue;
            const int m = c.basis->indices()[k][0];
            for (int i = 0; i < p; ++i) v[i] += a * sx[m - 1][i];
        }
    } else {
        const auto sy = sine_table(g, 1, c.basis->m_max());
        const double nrm = c.basis->axis_normalization() * c.basis->axis_normalization();
        for (std::size_t k = 0; k < c.coeffs.size(); ++k) {
            const double a = c.coeffs[k] * nrm;
            if (a == 0.0) continue;
            const int m1 = c.basis->indices()[k][0];
            const int m2 = c.basis->indices()[k][1];
            for (int iy = 0; iy < p; ++iy) {
                const double ay = a * sy[m2 - 1][iy];
                for (int ix = 0; ix < p; ++ix) v[static_cast<std::size_t>(iy) * p + ix] += ay * sx[m1 - 1][ix];
            }
        }
    }
    return GridSignal(c.grid, std::move(v));
}

double frac_seminorm_sq(const SpectralCoeffs& c, double s, double mu) {
    if (s < 0.0 || s > 1.0) throw std::invalid_argument("frac_seminorm_sq: s in [0,1]");
    std::vector<double> terms(c.coeffs.size());
    for (std::size_t k = 0; k < c.coeffs.size(); ++k)
        terms[k] = std::pow(c.basis->eigenvalue(k), s) * c.coeffs[k] * c.coeffs[k];
    return mu * pairwise_sum(terms);
}

SpectralCoeffs frac_minimizer(const SpectralCoeffs& c_eta, double s, double mu) {
    SpectralCoeffs out = c_eta;
    for (std::size_t k = 0; k < out.coeffs.size(); ++k)
        out.coeffs[k] /= 1.0 + mu * std::pow(c_eta.basis->eigenvalue(k), s);
    return out;
}

SpectralCoeffs frac_minimizer_derivative(const SpectralCoeffs& c_eta, double s, double mu) {
    SpectralCoeffs out = c_eta;
    for (std::size_t k = 0; k < out.coeffs.size(); ++k) {
        const double lam = c_eta.basis->eigenvalue(k);
        const double lam_s = std::pow(lam, s);
        const double denom = 1.0 + mu * lam_s;
        out.coeffs[k] = -mu * std::log(lam) * lam_s / (denom * denom) * c_eta.coeffs[k];
    }
    return out;
}

SpectralTraining project_training(const TrainingSet& training, const BasisPtr& basis) {
    SpectralTraining st;
    st.basis = basis;
    st.grid = training.grid_ptr();
    std::vector<double> offspan;
    for (const auto& pr : training.pairs()) {
        auto ce = analyze(pr.noisy, basis);
        auto cc = analyze(pr.clean, basis);
        double energy = 0.0;
        for (double v : cc.coeffs) energy += v * v;
        offspan.push_back(std::max(0.0, l2_norm_sq(pr.clean) - energy));
        st.eta.push_back(std::move(ce.coeffs));
        st.clean.push_back(std::move(cc.coeffs));
    }
    st.offspan_clean = pairwise_sum(offspan);
    return st;
}

double upper_value(double s, double mu, const SpectralTraining& st) {
    const auto& lam = st.basis->eigenvalues();
    std::vector<double> terms;
    terms.reserve(st.eta.size() * lam.size());
    for (std::size_t j = 0; j < st.eta.size(); ++j)
        for (std::size_t k = 0; k < lam.size(); ++k) {
            const double wk = st.eta[j][k] / (1.0 + mu * std::pow(lam[k], s));
            const double d = wk - st.clean[j][k];
            terms.push_back(d * d);
        }
    return pairwise_sum(terms) + st.offspan_clean;
}

double upper_derivative(double s, double mu, const SpectralTraining& st) {
    const auto& lam = st.basis->eigenvalues();
    std::vector<double> terms;
    terms.reserve(st.eta.size() * lam.size());
    for (std::size_t j = 0; j < st.eta.size(); ++j)
        for (std::size_t k = 0; k < lam.size(); ++k) {
            const double lam_s = std::pow(lam[k], s);
            const double denom = 1.0 + mu * lam_s;
            const double wk = st.eta[j][k] / denom;
            const double dwk = -mu * std::log(lam[k]) * lam_s / (denom * denom) * st.eta[j][k];
            terms.push_back(2.0 * dwk * (wk - st.clean[j][k]));
        }
    return pairwise_sum(terms);
}

double upper_value(double s, double mu, const TrainingSet& training, const BasisPtr& basis) {
    return upper_value(s, mu, project_training(training, basis));
}

double upper_derivative(double s, double mu, const TrainingSet& training, const BasisPtr& basis) {
    return upper_derivative(s, mu, project_training(training, basis));
}

FracConditionReport check_conditions(const SpectralTraining& st, double mu) {
    const auto& lam = st.basis->eigenvalues();
    std::vector<double> t1, t2;
    t1.reserve(st.eta.size() * lam.size());
    t2.reserve(st.eta.size() * lam.size());
    for (std::size_t j = 0; j < st.eta.size(); ++j)
        for (std::size_t k = 0; k < lam.size(); ++k) {
            const double eta = st.eta[j][k];
            const double cln = st.clean[j][k];
            const double lg = std::log(lam[k]);
            t1.push_back(lg * eta * (eta - (1.0 + mu) * cln));
            const double d = 1.0 + mu * lam[k];
            t2.push_back(lg * lam[k] / (d * d * d) * eta * (eta - d * cln));
        }
    FracConditionReport rep;
    rep.mu = mu;
    rep.h1_value = pairwise_sum(t1);
    rep.h2_value = pairwise_sum(t2);
    rep.h1_holds = rep.h1_value > 0.0;
    rep.h2_holds = rep.h2_value < 0.0;
    return rep;
}

FracConditionReport check_conditions(const TrainingSet& training, double mu,
                                     const BasisPtr& basis) {
    return check_conditions(project_training(training, basis), mu);
}

namespace {

double bisect_root(const std::function<double(double)>& f, double lo, double hi, double flo,
                   double tol) {
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

std::pair<double, double> mu_window(const TrainingSet& training, const BasisPtr& basis,
                                    std::pair<double, double> bracket) {
    const SpectralTraining st = project_training(training, basis);
    auto h1 = [&](double mu) { return check_conditions(st, mu).h1_value; };
    auto h2 = [&](double mu) { return check_conditions(st, mu).h2_value; };
    const auto [lo, hi] = bracket;
    if (!(lo < hi)) throw std::invalid_argument("mu_window: bad bracket");
    const double h1_lo = h1(lo), h1_hi = h1(hi);
    const double h2_lo = h2(lo), h2_hi = h2(hi);
    if ((h1_lo > 0.0) == (h1_hi > 0.0))
        throw std::runtime_error("mu_window: no sign change of the h1 boundary in the bracket");
    if ((h2_lo > 0.0) == (h2_hi > 0.0))
        throw std::runtime_error("mu_window: no sign change of the h2 boundary in the bracket");
    const double mu_plus = bisect_root(h1, lo, hi, h1_lo, 1e-9);
    const double mu_minus = bisect_root(h2, lo, hi, h2_lo, 1e-9);
    return {mu_minus, mu_plus};
}

LearnSResult learn_s(const TrainingSet& training, double mu, const BasisPtr& basis) {
    const SpectralTraining st = project_training(training, basis);
    auto deriv = [&](double s) { return upper_derivative(s, mu, st); };
    auto value = [&](double s) { return upper_value(s, mu, st); };

    constexpr int kScan = 64;
    std::vector<double> candidates{0.0, 1.0};
    double prev_s = 0.0, prev_d = deriv(0.0);
    for (int k = 1; k < kScan; ++k) {
        const double s = static_cast<double>(k) / (kScan - 1);
        const double d = deriv(s);
        if (prev_d == 0.0) candidates.push_back(prev_s);
        if ((prev_d < 0.0 && d > 0.0) || (prev_d > 0.0 && d < 0.0)) {
            double lo = prev_s, hi = s, flo = prev_d;
            candidates.push_back(bisect_root(deriv, lo, hi, flo, 1e-12));
        }
        prev_s = s;
        prev_d = d;
    }

    std::sort(candidates.begin(), candidates.end());
    double best_s = candidates.front();
    double best_v = value(best_s);
    for (double s : candidates) {
        const double v = value(s);
        if (v < best_v) {
            best_v = v;
            best_s = s;
        }
    }
    const bool boundary = best_s == 0.0 || best_s == 1.0;
    return LearnSResult{best_s, boundary};
}

}  // namespace bilevel
