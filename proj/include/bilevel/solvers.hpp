#pragma once

#include <cstdint>
#include <string>

#include "bilevel/families.hpp"
#include "bilevel/grid.hpp"

namespace bilevel {

struct SolverConfig {
    int max_iters = 600;
    double tol = 1e-8;
    std::string step_rule = "polyak";
    int restarts = 4;
    std::uint64_t seed = 1;
};

struct SolveResult {
    GridSignal minimizer;
    double objective = 0.0;
    std::string method;
    int iterations = 0;
    /// Method-specific optimality measure: duality gap for the chain solvers,
    /// bracket width for golden section, trailing relative decrease for
    /// subgradient runs, gradient norm for descent.
    double residual = 0.0;
    bool converged = false;
    /// Set when the model is only level-convex / nonconvex, so the returned
    /// point is best-found rather than certified-global.
    bool best_effort = false;
};

/// Quadratic base, closed form: minimizer = u_eta / (1 + alpha).
SolveResult solve_quadratic_weight(double alpha, const GridSignal& u_eta);

/// 1D total-variation denoising, exact via a chain dynamic program with
/// per-edge weights matching tv_discrete. Residual is the duality gap.
SolveResult solve_tv(double weight, const GridSignal& u_eta);

/// 1D Lipschitz-penalized denoising: golden section over the Lipschitz bound L,
/// with an exact projection onto {|u_{i+1}-u_i| <= L h} per evaluation.
SolveResult solve_lipschitz(double alpha, const GridSignal& u_eta, const SolverConfig& cfg = {});

/// Convex nonlocal objective, Polyak-stepped subgradient descent warm-started
/// at u_eta.
SolveResult solve_ak(double delta, const RhoSpec& rho, const GridSignal& u_eta,
                     const SolverConfig& cfg = {});

/// Exponent family: subgradient descent for interior p; at the upper edge
/// difference-quotient integrands dispatch to solve_lipschitz and constant
/// kernels to an exact two-sided clip search.
SolveResult solve_exponent(const ExtendedParam& p, const DoubleIntegrand& f,
                           const GridSignal& u_eta, const SolverConfig& cfg = {});

/// Nonconvex nonlocal objective: multi-start gradient descent from u_eta plus
/// seeded perturbations. converged means a small gradient at the best local
/// minimizer, never global optimality.
SolveResult solve_bn_local(double delta, const PhiSpec& phi, const GridSignal& u_eta,
                           const SolverConfig& cfg = {});

/// Interior weight-family solve: closed form for the quadratic base, chain DP
/// for the TV base, subgradient descent for a Gagliardo base.
SolveResult solve_weight_interior(double alpha, const BaseRegularizer& base,
                                  const GridSignal& u_eta, const SolverConfig& cfg = {});

/// Edge-model reconstructions: regularizer-free edges return u_eta, the
/// constant-forcing edge returns the mean, TV-limit edges run solve_tv with
/// the family's limit weight. The fractional family is served by the spectral
/// module instead.
SolveResult boundary_solve(const FamilySpec& family, const ExtendedParam& edge,
                           const GridSignal& u_eta);

}  // namespace bilevel
