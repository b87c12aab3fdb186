#include "bilevel/families.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "bilevel/util.hpp"

namespace bilevel {

double ExtendedParam::value() const {
    if (!is_interior()) throw std::logic_error("ExtendedParam: edge has no interior value");
    return t_;
}

bool ExtendedParam::operator<(const ExtendedParam& other) const {
    auto rank = [](Tag t) { return t == Tag::kLower ? 0 : (t == Tag::kInterior ? 1 : 2); };
    if (rank(tag_) != rank(other.tag_)) return rank(tag_) < rank(other.tag_);
    return tag_ == Tag::kInterior && t_ < other.t_;
}

bool ExtendedParam::operator==(const ExtendedParam& other) const {
    return tag_ == other.tag_ && (tag_ != Tag::kInterior || t_ == other.t_);
}

std::string ExtendedParam::describe() const {
    if (is_lower()) return "lower_edge";
    if (is_upper()) return "upper_edge";
    std::ostringstream os;
    os << t_;
    return os.str();
}

BaseRegularizer BaseRegularizer::quadratic_l2() {
    return BaseRegularizer(Kind::kQuadraticL2, [](const GridSignal& u) { return l2_norm_sq(u); },
                           "quadratic_l2");
}

BaseRegularizer BaseRegularizer::tv() {
    return BaseRegularizer(Kind::kTV, [](const GridSignal& u) { return tv_discrete(u); }, "tv");
}

BaseRegularizer BaseRegularizer::gagliardo(double p, double beta) {
    if (p < 1.0) throw std::invalid_argument("BaseRegularizer::gagliardo: p >= 1 required");
    std::ostringstream os;
    os << "gagliardo(p=" << p << ",beta=" << beta << ")";
    BaseRegularizer r(
        Kind::kGagliardo,
        [p, beta](const GridSignal& u) { return gagliardo_seminorm(u, p, beta); }, os.str());
    r.p_ = p;
    r.beta_ = beta;
    return r;
}

BaseRegularizer BaseRegularizer::custom(std::function<double(const GridSignal&)> fn,
                                        std::string name) {
    return BaseRegularizer(Kind::kCustom, std::move(fn), std::move(name));
}

DoubleIntegrand DoubleIntegrand::weighted_abs_diff(
    std::function<double(std::array<double, 2>)> a) {
    DoubleIntegrand f;
    f.kind_ = Kind::kWeightedAbsDiff;
    f.kernel_ = std::move(a);
    // evenness spot-check
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int k = 0; k < 32; ++k) {
        std::array<double, 2> d{dist(rng), dist(rng)};
        const double lhs = f.kernel_(d);
        const double rhs = f.kernel_({-d[0], -d[1]});
        if (std::abs(lhs - rhs) > 1e-10 * (1.0 + std::abs(lhs)))
            throw std::invalid_argument("weighted_abs_diff: kernel must be even");
    }
    return f;
}

DoubleIntegrand DoubleIntegrand::weighted_abs_diff(double a_const) {
    if (!(a_const > 0.0)) throw std::invalid_argument("weighted_abs_diff: kernel must be positive");
    DoubleIntegrand f;
    f.kind_ = Kind::kWeightedAbsDiff;
    f.a_const_ = a_const;
    f.kernel_ = [a_const](std::array<double, 2>) { return a_const; };
    return f;
}

DoubleIntegrand DoubleIntegrand::diff_quotient(double b) {
    if (!(b > 0.0)) throw std::invalid_argument("diff_quotient: b > 0 required");
    DoubleIntegrand f;
    f.kind_ = Kind::kDiffQuotient;
    f.b_ = b;
    return f;
}

DoubleIntegrand DoubleIntegrand::custom(Fn fn, double m_bound, double delta_growth, double beta) {
    if (!(m_bound > 0.0) || !(delta_growth > 0.0) || beta < 0.0 || beta > 1.0)
        throw std::invalid_argument("DoubleIntegrand::custom: bad growth constants");
    DoubleIntegrand f;
    f.kind_ = Kind::kCustom;
    f.fn_ = std::move(fn);
    // Spot-check the growth bounds and symmetry on random samples.
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> pos(0.05, 1.0), val(-3.0, 3.0);
    for (int k = 0; k < 64; ++k) {
        std::array<double, 2> x{pos(rng), 0.0}, y{pos(rng), 0.0};
        if (x[0] == y[0]) continue;
        const double xi = val(rng), zeta = val(rng);
        const double dist = std::abs(x[0] - y[0]);
        const double v = f.fn_(x, y, xi, zeta);
        const double upper =
            m_bound * (std::abs(xi - zeta) / std::pow(dist, beta) + std::abs(xi) + std::abs(zeta) + 1.0);
        if (v > upper * (1.0 + 1e-9))
            throw std::invalid_argument("DoubleIntegrand::custom: upper growth bound violated");
        if (dist < delta_growth) {
            const double lower = std::abs(xi - zeta) / std::pow(dist, beta) / m_bound - m_bound;
            if (v < lower - 1e-9)
                throw std::invalid_argument("DoubleIntegrand::custom: coercivity bound violated");
        }
        const double sym = f.fn_(y, x, zeta, xi);
        if (std::abs(v - sym) > 1e-9 * (1.0 + std::abs(v)))
            throw std::invalid_argument("DoubleIntegrand::custom: integrand must be symmetric");
    }
    return f;
}

double DoubleIntegrand::operator()(std::array<double, 2> x, std::array<double, 2> y, double xi,
                                   double zeta) const {
    switch (kind_) {
        case Kind::kWeightedAbsDiff:
            return kernel_({x[0] - y[0], x[1] - y[1]}) * std::abs(xi - zeta);
        case Kind::kDiffQuotient: {
            const double dist = std::hypot(x[0] - y[0], x[1] - y[1]);
            return b_ * std::abs(xi - zeta) / dist;
        }
        default:
            return fn_(x, y, xi, zeta);
    }
}

double DoubleIntegrand::dxi(std::array<double, 2> x, std::array<double, 2> y, double xi,
                            double zeta) const {
    const double sgn = xi > zeta ? 1.0 : (xi < zeta ? -1.0 : 0.0);
    switch (kind_) {
        case Kind::kWeightedAbsDiff:
            return kernel_({x[0] - y[0], x[1] - y[1]}) * sgn;
        case Kind::kDiffQuotient: {
            const double dist = std::hypot(x[0] - y[0], x[1] - y[1]);
            return b_ * sgn / dist;
        }
        default: {
            const double eps = 1e-6 * (1.0 + std::abs(xi));
            return (fn_(x, y, xi + eps, zeta) - fn_(x, y, xi - eps, zeta)) / (2.0 * eps);
        }
    }
}

namespace {

// Adaptive Simpson on [a,b] to the requested tolerance.
double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                   double fm, double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol) {
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48);
}

// Integral of base(t)/t^2 over (0, inf). The quadratic cap keeps the
// integrand bounded at zero (evaluated at a small positive t there); the tail
// past T = 40 closes with the constant plateau base(T)/T, exact for flat
// shapes and exponentially close otherwise.
double phi_mass(const std::function<double(double)>& base) {
    const double T = 40.0;
    auto g = [&](double t) {
        if (t < 1e-5) t = 1e-5;
        return base(t) / (t * t);
    };
    double total = adaptive_simpson(g, 0.0, 1.0, 1e-12) + adaptive_simpson(g, 1.0, T, 1e-12);
    total += base(T) / T;
    return total;
}

}  // namespace

PhiSpec PhiSpec::step(int dim) {
    PhiSpec s;
    s.kind_ = Kind::kStep;
    s.dim_ = dim;
    s.base_ = [](double t) { return t > 1.0 ? 1.0 : 0.0; };
    s.base_derivative_ = [](double) { return 0.0; };
    s.base_quad_bound_ = 1.0;
    s.positive_ = false;
    s.c_ = 1.0 / (gamma_n(dim) * phi_mass(s.base_));
    return s;
}

PhiSpec PhiSpec::quad_cap(int dim) {
    PhiSpec s;
    s.kind_ = Kind::kQuadCap;
    s.dim_ = dim;
    s.base_ = [](double t) { return t <= 1.0 ? t * t : 1.0; };
    s.base_derivative_ = [](double t) { return t <= 1.0 ? 2.0 * t : 0.0; };
    s.base_quad_bound_ = 1.0;
    s.positive_ = true;
    s.c_ = 1.0 / (gamma_n(dim) * phi_mass(s.base_));
    return s;
}

PhiSpec PhiSpec::one_minus_exp(int dim) {
    PhiSpec s;
    s.kind_ = Kind::kOneMinusExp;
    s.dim_ = dim;
    s.base_ = [](double t) { return 1.0 - std::exp(-t * t); };
    s.base_derivative_ = [](double t) { return 2.0 * t * std::exp(-t * t); };
    s.base_quad_bound_ = 1.0;
    s.positive_ = true;
    s.c_ = 1.0 / (gamma_n(dim) * phi_mass(s.base_));
    return s;
}

PhiSpec PhiSpec::custom(std::function<double(double)> base, int dim, double quad_bound) {
    PhiSpec s;
    s.kind_ = Kind::kCustom;
    s.dim_ = dim;
    s.base_ = std::move(base);
    s.base_quad_bound_ = quad_bound;
    // sampled checks: bound, monotonicity, positivity
    bool positive = true;
    double prev = 0.0;
    for (int k = 1; k <= 400; ++k) {
        const double t = 0.02 * k;
        const double v = s.base_(t);
        if (v > quad_bound * std::min(t * t, 1.0) * (1.0 + 1e-9) + 1e-12)
            throw std::invalid_argument("PhiSpec::custom: quadratic cap bound violated");
        if (v < prev - 1e-12)
            throw std::invalid_argument("PhiSpec::custom: phi must be non-decreasing");
        prev = v;
        if (t > 0.0 && v <= 0.0) positive = false;
    }
    s.positive_ = positive;
    s.base_derivative_ = nullptr;
    const double mass = phi_mass(s.base_);
    if (!(mass > 0.0)) throw std::invalid_argument("PhiSpec::custom: zero mass");
    s.c_ = 1.0 / (gamma_n(dim) * mass);
    return s;
}

double PhiSpec::derivative(double t) const {
    if (base_derivative_) return c_ * base_derivative_(t);
    const double eps = 1e-6 * (1.0 + std::abs(t));
    const double lo = std::max(0.0, t - eps);
    return c_ * (base_(t + eps) - base_(lo)) / (t + eps - lo);
}

std::optional<std::pair<double, double>> PhiSpec::power_near_zero() const {
    if (kind_ == Kind::kQuadCap) return std::make_pair(c_, 2.0);
    return std::nullopt;
}

namespace {

double ball_volume(int dim, double r) { return dim == 1 ? 2.0 * r : M_PI * r * r; }

}  // namespace

RhoSpec RhoSpec::ball_indicator(int dim) {
    // radius such that an indicator of height 1 integrates to 1
    const double r = dim == 1 ? 0.5 : 1.0 / std::sqrt(M_PI);
    RhoSpec s;
    s.kind_ = Kind::kBallIndicator;
    s.dim_ = dim;
    s.radius_ = r;
    s.height_ = 1.0;
    s.support_ = r;
    s.unit_near_zero_ = true;
    return s;
}

RhoSpec RhoSpec::ball_indicator(int dim, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("ball_indicator: radius > 0 required");
    RhoSpec s;
    s.kind_ = Kind::kBallIndicator;
    s.dim_ = dim;
    s.radius_ = radius;
    s.height_ = 1.0 / ball_volume(dim, radius);
    s.support_ = radius;
    s.unit_near_zero_ = std::abs(s.height_ - 1.0) < 1e-12;
    return s;
}

RhoSpec RhoSpec::custom(std::function<double(double)> rho, int dim,
                        std::optional<double> support_radius) {
    RhoSpec s;
    s.kind_ = Kind::kCustom;
    s.dim_ = dim;
    s.fn_ = std::move(rho);
    if (support_radius) s.support_ = *support_radius;
    // sampled monotonicity + unit-mass check
    const double t_max = support_radius ? *support_radius : 40.0;
    double prev = s.fn_(0.0);
    for (int k = 1; k <= 400; ++k) {
        const double t = t_max * k / 400.0;
        const double v = s.fn_(t);
        if (v > prev + 1e-12)
            throw std::invalid_argument("RhoSpec::custom: rho must be non-increasing");
        prev = v;
    }
    auto radial = [&](double t) {
        return dim == 1 ? 2.0 * s.fn_(t) : 2.0 * M_PI * t * s.fn_(t);
    };
    const double mass = adaptive_simpson(radial, 0.0, t_max, 1e-11);
    if (std::abs(mass - 1.0) > 1e-8)
        throw std::invalid_argument("RhoSpec::custom: kernel must integrate to 1 over R^n");
    s.unit_near_zero_ = std::abs(s.fn_(0.0) - 1.0) < 1e-12;
    return s;
}

double RhoSpec::operator()(double t) const {
    if (kind_ == Kind::kBallIndicator) return t <= radius_ ? height_ : 0.0;
    return fn_(t);
}

FamilySpec FamilySpec::weight(BaseRegularizer base) {
    FamilySpec s;
    s.kind_ = Kind::kWeight;
    s.base_ = std::move(base);
    return s;
}

FamilySpec FamilySpec::exponent(DoubleIntegrand f) {
    FamilySpec s;
    s.kind_ = Kind::kExponent;
    s.f_ = std::move(f);
    return s;
}

FamilySpec FamilySpec::brezis_nguyen(PhiSpec phi, std::optional<double> k_phi) {
    FamilySpec s;
    s.kind_ = Kind::kBrezisNguyen;
    s.phi_ = std::move(phi);
    s.k_phi_ = k_phi;
    return s;
}

FamilySpec FamilySpec::aubert_kornprobst(RhoSpec rho) {
    FamilySpec s;
    s.kind_ = Kind::kAubertKornprobst;
    s.rho_ = std::move(rho);
    return s;
}

FamilySpec FamilySpec::spectral_fractional(double mu, int m_max) {
    if (!(mu > 0.0)) throw std::invalid_argument("spectral_fractional: mu > 0 required");
    FamilySpec s;
    s.kind_ = Kind::kSpectralFractional;
    s.mu_ = mu;
    s.m_max_ = m_max;
    return s;
}

const BaseRegularizer& FamilySpec::base() const {
    if (!base_) throw std::logic_error("FamilySpec: not a weight family");
    return *base_;
}
const DoubleIntegrand& FamilySpec::integrand() const {
    if (!f_) throw std::logic_error("FamilySpec: not an exponent family");
    return *f_;
}
const PhiSpec& FamilySpec::phi() const {
    if (!phi_) throw std::logic_error("FamilySpec: not a Brezis-Nguyen family");
    return *phi_;
}
const RhoSpec& FamilySpec::rho() const {
    if (!rho_) throw std::logic_error("FamilySpec: not an Aubert-Kornprobst family");
    return *rho_;
}
double FamilySpec::mu() const {
    if (kind_ != Kind::kSpectralFractional) throw std::logic_error("FamilySpec: not fractional");
    return mu_;
}
int FamilySpec::m_max() const { return m_max_; }

std::string FamilySpec::describe() const {
    switch (kind_) {
        case Kind::kWeight: return "weight(" + base_->name() + ")";
        case Kind::kExponent: return "exponent";
        case Kind::kBrezisNguyen: return "brezis_nguyen";
        case Kind::kAubertKornprobst: return "aubert_kornprobst";
        default: {
            std::ostringstream os;
            os << "spectral_fractional(mu=" << mu_ << ")";
            return os.str();
        }
    }
}

double kappa_n(int n) {
    if (n == 1) return 1.0;
    if (n == 2) return 2.0 / M_PI;
    throw std::invalid_argument("kappa_n: only dimensions 1 and 2 are supported");
}

double gamma_n(int n) {
    if (n == 1) return 2.0;
    if (n == 2) return 4.0;
    throw std::invalid_argument("gamma_n: only dimensions 1 and 2 are supported");
}

bool is_numerically_constant(const GridSignal& u) {
    double lo = u[0], hi = u[0], amax = 0.0;
    for (double v : u.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        amax = std::max(amax, std::abs(v));
    }
    return hi - lo <= 1e-10 * (1.0 + amax);
}

double eval_weight(const ExtendedParam& alpha, const BaseRegularizer& base, const GridSignal& u) {
    if (alpha.is_lower()) return 0.0;
    if (alpha.is_upper()) return is_numerically_constant(u) ? 0.0 : kInfValue;
    if (alpha.value() < 0.0) throw std::invalid_argument("eval_weight: negative weight");
    return alpha.value() * base(u);
}

namespace {

// Sum of f(x,y,u(x),u(y))^p over ordered off-diagonal pairs, computed in log
// space: returns log( sum w^2 f^p ), or -inf when every f vanishes.
double log_pair_power_sum(const DoubleIntegrand& f, const GridSignal& u, double p) {
    const Grid& g = u.grid();
    const std::size_t n = g.node_count();
    const double log_w2 = 2.0 * std::log(g.cell_measure());
    std::vector<double> row_max(n, -kInfValue);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            double m = -kInfValue;
            const auto xi = g.point(i);
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double v = f(xi, g.point(j), u[i], u[j]);
                if (v > 0.0) m = std::max(m, p * std::log(v));
            }
            row_max[i] = m;
        }
    });
    double m = -kInfValue;
    for (double v : row_max) m = std::max(m, v);
    if (m == -kInfValue) return -kInfValue;

    std::vector<double> row(n, 0.0);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            double acc = 0.0;
            const auto xi = g.point(i);
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double v = f(xi, g.point(j), u[i], u[j]);
                if (v > 0.0) acc += std::exp(p * std::log(v) - m);
            }
            row[i] = acc;
        }
    });
    return m + std::log(pairwise_sum(row)) + log_w2;
}

}  // namespace

double eval_exponent(const ExtendedParam& p, const DoubleIntegrand& f, const GridSignal& u) {
    const Grid& g = u.grid();
    if (p.is_lower()) throw std::invalid_argument("eval_exponent: the interval starts at p = 1");
    if (p.is_upper()) {
        const std::size_t n = g.node_count();
        std::vector<double> row_max(n, 0.0);
        parallel_for(n, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                double m = 0.0;
                const auto xi = g.point(i);
                for (std::size_t j = 0; j < n; ++j)
                    if (j != i) m = std::max(m, f(xi, g.point(j), u[i], u[j]));
                row_max[i] = m;
            }
        });
        double m = 0.0;
        for (double v : row_max) m = std::max(m, v);
        return m;
    }
    const double pv = p.value();
    if (pv < 1.0) throw std::invalid_argument("eval_exponent: p >= 1 required");
    const double measure_sq = g.domain().measure() * g.domain().measure();
    if (pv > 64.0) {
        const double ls = log_pair_power_sum(f, u, pv);
        if (ls == -kInfValue) return 0.0;
        return std::exp((ls - std::log(measure_sq)) / pv);
    }
    const double sum = double_integral(
        [&f, pv](std::array<double, 2> x, std::array<double, 2> y, double xi, double zeta) {
            const double v = f(x, y, xi, zeta);
            return v == 0.0 ? 0.0 : std::pow(v, pv);
        },
        u);
    return std::pow(sum / measure_sq, 1.0 / pv);
}

double eval_bn(const ExtendedParam& delta, const PhiSpec& phi, const GridSignal& u,
               std::optional<double> k_phi) {
    if (delta.is_upper()) return 0.0;
    if (delta.is_lower()) {
        if (!k_phi) throw std::invalid_argument("eval_bn: lower edge requires k_phi");
        return *k_phi * tv_discrete(u);
    }
    const double d = delta.value();
    if (!(d > 0.0)) throw std::invalid_argument("eval_bn: delta > 0 required");
    const int n = u.grid().dim();
    const double expn = n + 1;
    const double sum = double_integral(
        [&phi, d, expn](std::array<double, 2> x, std::array<double, 2> y, double xi, double zeta) {
            const double dist = std::hypot(x[0] - y[0], x[1] - y[1]);
            return phi(std::abs(xi - zeta) / d) / std::pow(dist, expn);
        },
        u);
    return d * sum;
}

double eval_ak(const ExtendedParam& delta, const RhoSpec& rho, const GridSignal& u) {
    if (delta.is_upper()) return 0.0;
    if (delta.is_lower()) return kappa_n(u.grid().dim()) * tv_discrete(u);
    const double d = delta.value();
    if (!(d > 0.0)) throw std::invalid_argument("eval_ak: delta > 0 required");
    const Grid& g = u.grid();
    const int n = g.dim();
    const double cutoff = rho.support_radius() * d;

    // Banded fast path in 1D for compactly supported kernels.
    if (n == 1 && std::isfinite(cutoff)) {
        const std::size_t N = g.node_count();
        const double h = g.spacing(0);
        const std::size_t window = static_cast<std::size_t>(std::floor(cutoff / h)) + 1;
        std::vector<double> row(N, 0.0);
        parallel_for(N, [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                double acc = 0.0;
                const std::size_t j0 = i > window ? i - window : 0;
                const std::size_t j1 = std::min(N, i + window + 1);
                for (std::size_t j = j0; j < j1; ++j) {
                    if (j == i) continue;
                    const double dist = g.distance(i, j);
                    const double w = rho(dist / d);
                    if (w != 0.0) acc += std::abs(u[i] - u[j]) / dist * w;
                }
                row[i] = acc;
            }
        });
        const double w2 = h * h;
        return std::pow(d, -n) * w2 * pairwise_sum(row);
    }

    const double sum = double_integral(
        [&rho, d](std::array<double, 2> x, std::array<double, 2> y, double xi, double zeta) {
            const double dist = std::hypot(x[0] - y[0], x[1] - y[1]);
            const double w = rho(dist / d);
            return w == 0.0 ? 0.0 : std::abs(xi - zeta) / dist * w;
        },
        u);
    return std::pow(d, -n) * sum;
}

double estimate_K_phi(const PhiSpec& phi, int grid_points, std::span<const double> deltas) {
    if (deltas.size() < 4) throw std::invalid_argument("estimate_K_phi: need >= 4 deltas");
    auto grid = make_grid(Interval{0.0, 1.0}, grid_points);
    const GridSignal ramp = GridSignal::from_function(grid, [](double x) { return x; });
    const double tv = tv_discrete(ramp);

    std::vector<double> ratios;
    ratios.reserve(deltas.size());
    for (double d : deltas) {
        if (!(d > 0.0)) throw std::invalid_argument("estimate_K_phi: deltas must be positive");
        ratios.push_back(eval_bn(ExtendedParam::interior(d), phi, ramp) / tv);
    }

    // Aitken extrapolation of the ratio sequence.
    std::vector<double> extrap;
    for (std::size_t k = 0; k + 2 < ratios.size(); ++k) {
        const double d2 = ratios[k + 2] - 2.0 * ratios[k + 1] + ratios[k];
        extrap.push_back(std::abs(d2) > 1e-14 ? ratios[k + 2] - (ratios[k + 2] - ratios[k + 1]) *
                                                                    (ratios[k + 2] - ratios[k + 1]) / d2
                                              : ratios[k + 2]);
    }
    const std::size_t m = extrap.size();
    const double last = extrap[m - 1];
    if (m >= 3) {
        double lo = last, hi = last;
        for (std::size_t k = m - 3; k < m; ++k) {
            lo = std::min(lo, extrap[k]);
            hi = std::max(hi, extrap[k]);
        }
        if (hi - lo > 0.10 * std::max(std::abs(last), 1e-12))
            throw std::runtime_error("estimate_K_phi: extrapolants did not settle (spread > 10%)");
    }
    return std::clamp(last, 1e-12, 1.0);
}

}  // namespace bilevel
