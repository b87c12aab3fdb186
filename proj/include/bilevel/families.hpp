#pragma once

#include <array>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>

#include "bilevel/grid.hpp"

namespace bilevel {

/// A point of the closed parameter interval: strictly inside, or one of the
/// two edges (where the reconstruction model changes structurally).
class ExtendedParam {
public:
    static ExtendedParam interior(double t) { return ExtendedParam(Tag::kInterior, t); }
    static ExtendedParam lower_edge() { return ExtendedParam(Tag::kLower, 0.0); }
    static ExtendedParam upper_edge() { return ExtendedParam(Tag::kUpper, 0.0); }

    bool is_interior() const { return tag_ == Tag::kInterior; }
    bool is_lower() const { return tag_ == Tag::kLower; }
    bool is_upper() const { return tag_ == Tag::kUpper; }
    double value() const;

    /// Deterministic ordering: LowerEdge < Interior(t) < UpperEdge.
    bool operator<(const ExtendedParam& other) const;
    bool operator==(const ExtendedParam& other) const;

    std::string describe() const;

private:
    enum class Tag { kLower, kInterior, kUpper };
    ExtendedParam(Tag tag, double t) : tag_(tag), t_(t) {}
    Tag tag_;
    double t_;
};

/// Base regularizer R for the weighted family alpha*R.
class BaseRegularizer {
public:
    enum class Kind { kQuadraticL2, kTV, kGagliardo, kCustom };

    static BaseRegularizer quadratic_l2();
    static BaseRegularizer tv();
    static BaseRegularizer gagliardo(double p, double beta);
    static BaseRegularizer custom(std::function<double(const GridSignal&)> fn, std::string name);

    double operator()(const GridSignal& u) const { return fn_(u); }
    Kind kind() const { return kind_; }
    const std::string& name() const { return name_; }

    /// False for the quadratic base, whose zero set is {0} rather than the
    /// constants; the weighted-family interior guarantees then do not apply.
    bool vanishes_only_on_constants() const { return kind_ != Kind::kQuadraticL2; }

    double gagliardo_p() const { return p_; }
    double gagliardo_beta() const { return beta_; }

private:
    BaseRegularizer(Kind k, std::function<double(const GridSignal&)> fn, std::string name)
        : kind_(k), fn_(std::move(fn)), name_(std::move(name)) {}
    Kind kind_;
    std::function<double(const GridSignal&)> fn_;
    std::string name_;
    double p_ = 0.0;
    double beta_ = 0.0;
};

/// Integrand f(x,y,xi,zeta) of the exponent family.
class DoubleIntegrand {
public:
    enum class Kind { kWeightedAbsDiff, kDiffQuotient, kCustom };
    using Fn = std::function<double(std::array<double, 2>, std::array<double, 2>, double, double)>;

    /// f = a(x-y)|xi-zeta| with a an even, bounded, uniformly positive kernel.
    static DoubleIntegrand weighted_abs_diff(std::function<double(std::array<double, 2>)> a);
    static DoubleIntegrand weighted_abs_diff(double a_const);
    /// f = b|xi-zeta|/|x-y|.
    static DoubleIntegrand diff_quotient(double b);
    /// Growth constants of the custom integrand are spot-checked on random samples.
    static DoubleIntegrand custom(Fn f, double m_bound, double delta_growth, double beta);

    double operator()(std::array<double, 2> x, std::array<double, 2> y, double xi,
                      double zeta) const;
    /// Subgradient in the third argument (builtins exact; custom via central difference).
    double dxi(std::array<double, 2> x, std::array<double, 2> y, double xi, double zeta) const;

    Kind kind() const { return kind_; }
    bool convex() const { return kind_ != Kind::kCustom; }
    double diff_quotient_scale() const { return b_; }
    /// Set when the kernel of a weighted-abs-diff integrand is a known constant.
    std::optional<double> constant_kernel() const { return a_const_; }

private:
    DoubleIntegrand() = default;
    Kind kind_{Kind::kCustom};
    Fn fn_;
    std::function<double(std::array<double, 2>)> kernel_;
    std::optional<double> a_const_;
    double b_{0.0};
};

/// phi of the nonlocal family with the |x-y|^{-(n+1)} kernel, normalized so
/// that gamma_n * integral of phi(t)/t^2 equals 1 (checked numerically at
/// construction to 1e-8).
class PhiSpec {
public:
    enum class Kind { kStep, kQuadCap, kOneMinusExp, kCustom };

    static PhiSpec step(int dim);
    static PhiSpec quad_cap(int dim);
    static PhiSpec one_minus_exp(int dim);
    static PhiSpec custom(std::function<double(double)> base, int dim, double quad_bound);

    double operator()(double t) const { return c_ * base_(t); }
    /// Derivative where it exists (kinks resolved one-sidedly); used by descent solvers.
    double derivative(double t) const;

    Kind kind() const { return kind_; }
    int dimension() const { return dim_; }
    double normalization() const { return c_; }
    /// Constant a with phi(t) <= min(a t^2, a).
    double quad_bound() const { return c_ * base_quad_bound_; }
    bool positive() const { return positive_; }
    bool differentiable() const { return kind_ == Kind::kQuadCap || kind_ == Kind::kOneMinusExp; }
    /// Power-law coefficients phi(t) = c * t^r near zero, when known (quad_cap).
    std::optional<std::pair<double, double>> power_near_zero() const;

private:
    PhiSpec() = default;
    Kind kind_{Kind::kCustom};
    int dim_{1};
    std::function<double(double)> base_;
    std::function<double(double)> base_derivative_;
    double c_{1.0};
    double base_quad_bound_{1.0};
    bool positive_{true};
};

/// rho of the difference-quotient family: non-increasing radial kernel with
/// unit integral over R^n.
class RhoSpec {
public:
    enum class Kind { kBallIndicator, kCustom };

    /// Indicator of a ball whose radius makes the height exactly 1
    /// (radius 1/2 in 1D, 1/sqrt(pi) in 2D).
    static RhoSpec ball_indicator(int dim);
    /// Indicator of a ball of the given radius, height normalized to unit integral.
    static RhoSpec ball_indicator(int dim, double radius);
    static RhoSpec custom(std::function<double(double)> rho, int dim,
                          std::optional<double> support_radius = {});

    double operator()(double t) const;
    Kind kind() const { return kind_; }
    int dimension() const { return dim_; }
    /// Support radius when finite; infinity for unbounded kernels.
    double support_radius() const { return support_; }
    bool unit_near_zero() const { return unit_near_zero_; }

private:
    RhoSpec() = default;
    Kind kind_{Kind::kCustom};
    int dim_{1};
    std::function<double(double)> fn_;
    double height_{1.0};
    double radius_{0.5};
    double support_{std::numeric_limits<double>::infinity()};
    bool unit_near_zero_{false};
};

/// Tagged description of one regularizer family.
class FamilySpec {
public:
    enum class Kind { kWeight, kExponent, kBrezisNguyen, kAubertKornprobst, kSpectralFractional };

    static FamilySpec weight(BaseRegularizer base);
    static FamilySpec exponent(DoubleIntegrand f);
    static FamilySpec brezis_nguyen(PhiSpec phi, std::optional<double> k_phi = {});
    static FamilySpec aubert_kornprobst(RhoSpec rho);
    static FamilySpec spectral_fractional(double mu, int m_max = 64);

    Kind kind() const { return kind_; }
    const BaseRegularizer& base() const;
    const DoubleIntegrand& integrand() const;
    const PhiSpec& phi() const;
    const RhoSpec& rho() const;
    double mu() const;
    int m_max() const;
    std::optional<double> k_phi() const { return k_phi_; }
    void set_k_phi(double k) { k_phi_ = k; }

    std::string describe() const;

private:
    FamilySpec() = default;
    Kind kind_{Kind::kWeight};
    std::optional<BaseRegularizer> base_;
    std::optional<DoubleIntegrand> f_;
    std::optional<PhiSpec> phi_;
    std::optional<RhoSpec> rho_;
    std::optional<double> k_phi_;
    double mu_{0.0};
    int m_max_{64};
};

/// Sphere average of |e.s| over the unit sphere: 1 in 1D, 2/pi in 2D.
double kappa_n(int n);
/// Sphere integral of |e.s|: 2 in 1D, 4 in 2D.
double gamma_n(int n);

constexpr double kInfValue = std::numeric_limits<double>::infinity();

/// Weighted family alpha*R on the closed interval [0, inf]:
/// 0 at the lower edge; at the upper edge the indicator of constants.
double eval_weight(const ExtendedParam& alpha, const BaseRegularizer& base, const GridSignal& u);

/// Exponent family ((1/|OxO|) 2x-integral of f^p)^{1/p}; at p = inf the
/// off-diagonal max of f. Values of f^p above p = 64 are accumulated in log space.
double eval_exponent(const ExtendedParam& p, const DoubleIntegrand& f, const GridSignal& u);

/// Nonlocal family delta * 2x-integral of phi(|u(x)-u(y)|/delta)/|x-y|^{n+1}.
/// Lower edge: k_phi times the discrete total variation (every grid signal has
/// finite TV, so the continuum indicator branch is unreachable here).
/// Upper edge: 0.
double eval_bn(const ExtendedParam& delta, const PhiSpec& phi, const GridSignal& u,
               std::optional<double> k_phi = {});

/// Difference-quotient family delta^{-n} 2x-integral of (|u(x)-u(y)|/|x-y|) rho(|x-y|/delta).
/// Lower edge: kappa_n times the discrete total variation. Upper edge: 0.
double eval_ak(const ExtendedParam& delta, const RhoSpec& rho, const GridSignal& u);

/// Ratio of the nonlocal family to the total variation on the unit ramp,
/// extrapolated along the given decreasing delta sequence (Aitken), clamped to
/// (0, 1]. Throws if the last three extrapolants spread by more than 10%.
double estimate_K_phi(const PhiSpec& phi, int grid_points, std::span<const double> deltas);

/// True when u deviates from its mean by at most 1e-10*(1+|u|_inf).
bool is_numerically_constant(const GridSignal& u);

}  // namespace bilevel
