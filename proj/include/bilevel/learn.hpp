#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bilevel/families.hpp"
#include "bilevel/grid.hpp"
#include "bilevel/solvers.hpp"

namespace bilevel {

/// Sampling plan for a scalar parameter interval.
/// transform: "linear" | "log" | "invp" (linear in 1/p, so the upper edge is
/// the natural limit of the grid).
struct ParamGrid {
    std::string transform = "linear";
    double lo = 0.0;
    double hi = 1.0;
    int count = 9;
    bool include_edges = true;

    std::vector<double> interior_points() const;
};

struct ConditionCheck {
    double value = 0.0;
    bool holds = false;
};

using ConditionMap = std::map<std::string, ConditionCheck>;

struct LearnSample {
    ExtendedParam param = ExtendedParam::lower_edge();
    double I_bar = 0.0;
    std::vector<double> per_pair;  // squared distance to the clean image, per pair
    bool refined = false;          // produced by golden-section refinement
};

struct SolverStats {
    int solves = 0;
    long total_iterations = 0;
    int failures = 0;         // solves that returned converged = false
    bool any_best_effort = false;
};

struct LearnReport {
    std::string family;
    std::vector<LearnSample> samples;  // deterministic order: lower edge, interior asc, upper edge
    ExtendedParam argmin = ExtendedParam::lower_edge();
    double argmin_value = 0.0;
    bool interior = false;
    ConditionMap conditions;
    SolverStats stats;
    std::uint64_t seed = 0;
};

/// Reconstructions and the upper-level value at one extended parameter:
/// solves the lower-level problem per training pair (dispatching edges to
/// their limit models) and sums the squared distances to the clean images.
std::pair<double, std::vector<SolveResult>> extended_upper(const FamilySpec& family,
                                                           const ExtendedParam& param,
                                                           const TrainingSet& training,
                                                           const SolverConfig& cfg = {});

/// Samples the upper-level value on the grid (plus edges), refines around the
/// best interior sample by golden section, and classifies the argmin.
LearnReport learn(const FamilySpec& family, const TrainingSet& training, const ParamGrid& grid,
                  int refine_iters, const SolverConfig& cfg = {});

/// Interior-optimum conditions for the weighted family: the base must
/// penalize the noisy data more than the clean data, and the noisy data must
/// beat the mean-value reconstruction.
ConditionMap check_weight_conditions(const TrainingSet& training, const BaseRegularizer& base);

/// Interior-optimum conditions for the exponent family at a probe exponent q.
ConditionMap check_exponent_conditions(const TrainingSet& training, const DoubleIntegrand& f,
                                       double q, double alpha);

/// Interior-optimum conditions for the nonlocal delta families. The TV-limit
/// reconstruction w0 is produced by the supplied hook (defaults to solve_tv
/// with the family's limit weight when the hook is empty).
ConditionMap check_delta_conditions(
    const TrainingSet& training, const FamilySpec& family,
    const std::function<GridSignal(const GridSignal&)>& tv_solver_hook = {});

/// Human-readable classification of a finished learn run.
nlohmann::ordered_json structure_report(const LearnReport& report);

nlohmann::ordered_json report_to_json(const LearnReport& report);

}  // namespace bilevel
