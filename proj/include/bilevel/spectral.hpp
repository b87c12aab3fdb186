#pragma once

#include <array>
#include <memory>
#include <utility>
#include <vector>

#include "bilevel/grid.hpp"

namespace bilevel {

/// Dirichlet sine eigenbasis on (0,pi) or (0,pi)^2, L2-normalized
/// (factor sqrt(2/pi) per axis), eigenvalues m^2 resp. m1^2 + m2^2,
/// sorted non-decreasingly.
class EigenBasis {
public:
    EigenBasis(Domain domain, int m_max);

    const Domain& domain() const { return domain_; }
    std::size_t size() const { return indices_.size(); }
    const std::vector<std::array<int, 2>>& indices() const { return indices_; }
    const std::vector<double>& eigenvalues() const { return eigenvalues_; }
    double eigenvalue(std::size_t k) const { return eigenvalues_[k]; }
    double axis_normalization() const { return axis_norm_; }
    int m_max() const { return m_max_; }

    /// Value of the k-th eigenfunction at a point.
    double eigenfunction(std::size_t k, std::array<double, 2> x) const;
    GridSignal eigenfunction_signal(std::size_t k, const GridPtr& grid) const;
    /// Index position of mode (m1, m2); m2 = 0 selects 1D modes.
    std::size_t mode_position(int m1, int m2 = 0) const;

private:
    Domain domain_;
    int m_max_;
    std::vector<std::array<int, 2>> indices_;
    std::vector<double> eigenvalues_;
    double axis_norm_;
};

using BasisPtr = std::shared_ptr<const EigenBasis>;

BasisPtr build_basis(const Domain& domain, int m_max);

/// Coefficients of a signal in an eigenbasis; carries the source grid so the
/// round trip back to a signal needs no extra context.
struct SpectralCoeffs {
    BasisPtr basis;
    std::vector<double> coeffs;
    GridPtr grid;
};

SpectralCoeffs analyze(const GridSignal& u, const BasisPtr& basis);
GridSignal synthesize(const SpectralCoeffs& c);

/// mu * sum lambda_m^s c_m^2 (the squared fractional seminorm of the truncation).
double frac_seminorm_sq(const SpectralCoeffs& c, double s, double mu);

/// Mode-wise closed-form minimizer: c_m / (1 + mu lambda_m^s).
SpectralCoeffs frac_minimizer(const SpectralCoeffs& c_eta, double s, double mu);

/// d/ds of the minimizer coefficients: -mu log(lambda) lambda^s / (1+mu lambda^s)^2 * c_m.
SpectralCoeffs frac_minimizer_derivative(const SpectralCoeffs& c_eta, double s, double mu);

/// Training data projected once onto a basis; all spectral upper-level
/// quantities evaluate from this cache.
struct SpectralTraining {
    BasisPtr basis;
    GridPtr grid;
    std::vector<std::vector<double>> eta;    // per pair: noisy coefficients
    std::vector<std::vector<double>> clean;  // per pair: clean coefficients
    double offspan_clean = 0.0;              // sum_j |u_c_j - proj u_c_j|^2, constant in s
};

SpectralTraining project_training(const TrainingSet& training, const BasisPtr& basis);

/// Reconstruction error sum_j |w_j^(s) - u_c_j|^2 including the s-independent
/// off-span residual of the clean data.
double upper_value(double s, double mu, const TrainingSet& training, const BasisPtr& basis);
double upper_value(double s, double mu, const SpectralTraining& st);

/// Exact derivative of upper_value in s via the mode-wise sums.
double upper_derivative(double s, double mu, const TrainingSet& training, const BasisPtr& basis);
double upper_derivative(double s, double mu, const SpectralTraining& st);

struct FracConditionReport {
    double h1_value = 0.0;
    bool h1_holds = false;  // h1_value > 0  (excludes s = 0)
    double h2_value = 0.0;
    bool h2_holds = false;  // h2_value < 0  (excludes s = 1)
    double mu = 0.0;
};

FracConditionReport check_conditions(const TrainingSet& training, double mu,
                                     const BasisPtr& basis);
FracConditionReport check_conditions(const SpectralTraining& st, double mu);

/// Roots of the h2 and h1 equalities in mu (bisection to 1e-9):
/// the window (mu_minus, mu_plus) on which both interior conditions hold.
/// Throws when either boundary has no sign change in the bracket.
std::pair<double, double> mu_window(const TrainingSet& training, const BasisPtr& basis,
                                    std::pair<double, double> bracket);

struct LearnSResult {
    double s_hat = 0.0;
    bool boundary = false;
};

/// Sign-scan of the derivative on a 64-point grid, bisection inside each
/// sign-change cell, then the global argmin among interior roots and the
/// endpoints (smallest s wins exact ties).
LearnSResult learn_s(const TrainingSet& training, double mu, const BasisPtr& basis);

}  // namespace bilevel
