#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bilevel/families.hpp"
#include "bilevel/grid.hpp"
#include "bilevel/learn.hpp"
#include "bilevel/mosco.hpp"

namespace bilevel::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Signal files. CSV: one value per line (1D) or one comma-separated row per
// line (2D). PGM: P2/P5 with maxval <= 65535, mapped affinely onto [0,1].
// Format chosen by extension (.csv / .pgm).
// ---------------------------------------------------------------------------
GridSignal read_signal(const std::filesystem::path& path, const GridPtr& grid);
void write_signal(const GridSignal& u, const std::filesystem::path& path);

/// Writes bytes to path atomically (temp file + rename).
void atomic_write(const std::filesystem::path& path, const std::string& bytes);

// ---------------------------------------------------------------------------
// Run configuration: a JSON object with strictly validated keys.
// ---------------------------------------------------------------------------
struct RunConfig {
    json family;                     // family description (see parse_family)
    json grid;                       // {"domain": {...}, "points_per_axis": n}
    ParamGrid param_grid;
    SolverConfig solver;
    std::vector<std::string> data_clean;
    std::vector<std::string> data_noisy;
    int refine_iters = 0;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    int threads = 1;

    json canonical() const;  // normalized form used for hashing and manifests
};

RunConfig parse_config(const json& j);
RunConfig load_config(const std::filesystem::path& path);

FamilySpec parse_family(const json& j);
GridPtr parse_grid(const json& j);

/// Loads the training pairs named by the config; throws when lists are empty
/// or of different lengths.
TrainingSet load_training(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Drivers shared by the CLI and the test suites. Each writes its outputs under
// cfg.out_dir (atomically) and returns the primary JSON document.
// ---------------------------------------------------------------------------
json run_learn(const RunConfig& cfg);
json run_solve(const RunConfig& cfg, const std::string& param_token);
json run_eval(const RunConfig& cfg, const std::string& param_token);
json run_conditions(const RunConfig& cfg);
json run_mosco(const RunConfig& cfg, const std::string& scan_kind, const std::string& probe,
               const std::string& sequence_spec);

/// "lower" | "upper" | numeric literal.
ExtendedParam parse_param_token(const std::string& token);

/// "lo:hi:count:scale" with scale in {lin, log, invp}.
ParamGrid parse_grid_spec(const std::string& spec);

// ---------------------------------------------------------------------------
// Built-in demonstration scenarios with known closed-form outcomes. Data is
// generated internally; each check row compares a computed quantity against
// its expected value at a stated tolerance.
// ---------------------------------------------------------------------------
struct DemoCheck {
    std::string name;
    double expected = 0.0;
    double computed = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct DemoResult {
    std::string name;
    std::vector<DemoCheck> checks;
    bool ok = false;
};

DemoResult run_demo(const std::string& name);  // remark-2.3 | example-4.2 | example-5.3 | remark-7.4

constexpr const char* kVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;

}  // namespace bilevel::io
