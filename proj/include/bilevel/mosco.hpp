#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bilevel/families.hpp"
#include "bilevel/grid.hpp"

namespace bilevel {

/// One parameter-sequence diagnostic: regularizer values along lambda_k with a
/// recovery rule, the extrapolated limit, and the limit predicted by the edge
/// (or interior) evaluators.
struct SequenceScan {
    std::string family;
    ExtendedParam target = ExtendedParam::lower_edge();
    std::string recovery;  // "constant" | "scaled" | "custom"
    std::vector<double> params;
    std::vector<double> values;
    std::vector<double> bounds;  // per-k certified upper bounds, when available
    double extrapolated_limit = 0.0;
    double expected_limit = 0.0;
    double rel_gap = 0.0;
    std::string note;
};

struct FitResult {
    double limit = 0.0;
    double rate = 0.0;
    double r2 = 0.0;
};

/// Least-squares fit value_k = limit + C * x_k^rate ("power-law", x = params)
/// or value_k = limit + C / k ("linear-in-1/k", params ignored).
FitResult extrapolate(std::span<const double> values, std::span<const double> params,
                      const std::string& model);

/// Constant recovery sequence u_k = u along lambda_k -> target.
/// Delta-family scans refuse deltas below 8h (recorded in the note): below
/// that the grid no longer resolves the kernel and the limit degenerates.
SequenceScan scan_constant(const FamilySpec& family, const ExtendedParam& target,
                           std::span<const double> params, const GridSignal& u);

/// Scaled recovery u_k = (delta_k/delta) u for an interior target of the phi
/// family; the identity R_{delta_k}(u_k) = (delta_k/delta) R_delta(u) is exact.
SequenceScan scan_scaled_bn(double delta_target, std::span<const double> deltas,
                            const PhiSpec& phi, const GridSignal& u);

/// Vanishing regime delta_k -> infinity of the phi family with the certified
/// bound a * Lip(u)^2 / delta_k * double-integral of |x-y|^{1-n}.
SequenceScan scan_bn_vanishing(std::span<const double> deltas, const PhiSpec& phi,
                               const GridSignal& u);

struct MonotonicityCase {
    double param_small = 0.0;
    double param_large = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;
};

/// Checks the family's scale-comparison inequalities with 1e-10 slack:
/// exponent family values non-decreasing in p; quotient family
/// R_delta <= (delta_bar/delta)^n R_delta_bar for delta < delta_bar.
std::vector<MonotonicityCase> certify_monotonicity(
    const FamilySpec& family, std::span<const std::pair<double, double>> param_pairs,
    std::span<const GridSignal> samples);

/// Probe battery for the limit tables.
struct ProbeSet {
    std::vector<std::string> names;
    std::vector<GridSignal> signals;
};

/// ramp, sawtooth pair (clean/noisy), single sine mode, step, random Lipschitz.
ProbeSet make_probes(const GridPtr& grid, std::uint64_t seed);

/// The sawtooth training pair on (0,1): piecewise-linear images with slopes
/// +-30 resp. +-(30 - 3 eps) in the middle third. Exact at cell centers when
/// 12 divides the point count.
GridSignal sawtooth_clean(const GridPtr& grid);
GridSignal sawtooth_noisy(const GridPtr& grid, double eps);

/// CSV rows (param, value, bound, expected), RFC-4180 line endings.
void write_scan_csv(const SequenceScan& scan, std::ostream& os);

}  // namespace bilevel
