// Command-line surface over the parameter-learning library: learn / solve /
// eval / conditions / mosco / demo. Exit codes: 0 success, 1 demo check
// failure, 2 validation error, 3 solver failure.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bilevel/io.hpp"

namespace {

using bilevel::io::json;
using bilevel::io::RunConfig;

struct CommonFlags {
    std::string config_path;
    std::string family;
    std::string param_grid;
    bool edges = false;
    std::vector<std::string> data_clean;
    std::vector<std::string> data_noisy;
    std::string out_dir;
    std::string grid_domain;
    int grid_points = 0;
    double mu = 0.05;
    long long seed = -1;
    int threads = 0;
    int refine_iters = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON run configuration");
    cmd->add_option("--family", f.family,
                    "family shorthand: weight-tv | weight-l2 | exponent-dq | exponent-absdiff | "
                    "bn-quadcap | bn-step | bn-exp | ak | fractional");
    cmd->add_option("--param-grid", f.param_grid, "lo:hi:count:scale with scale lin|log|invp");
    cmd->add_flag("--edges", f.edges, "include the interval edges in the sweep");
    cmd->add_option("--data-clean", f.data_clean, "clean signal files (csv or pgm)");
    cmd->add_option("--data-noisy", f.data_noisy, "noisy signal files (csv or pgm)");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--grid-domain", f.grid_domain, "interval:a:b or rect:a1:b1:a2:b2");
    cmd->add_option("--grid-points", f.grid_points, "grid points per axis");
    cmd->add_option("--mu", f.mu, "weight of the fractional regularizer");
    cmd->add_option("--seed", f.seed, "run seed");
    cmd->add_option("--threads", f.threads, "worker threads (BILEVEL_THREADS is the fallback)");
    cmd->add_option("--refine-iters", f.refine_iters, "golden-section refinement iterations");
}

json family_from_shorthand(const std::string& name, double mu) {
    if (name == "weight-tv") return {{"kind", "weight"}, {"base", {{"kind", "tv"}}}};
    if (name == "weight-l2") return {{"kind", "weight"}, {"base", {{"kind", "quadratic_l2"}}}};
    if (name == "exponent-dq")
        return {{"kind", "exponent"}, {"integrand", {{"kind", "diff_quotient"}, {"b", 1.0}}}};
    if (name == "exponent-absdiff")
        return {{"kind", "exponent"}, {"integrand", {{"kind", "weighted_abs_diff"}, {"a", 1.0}}}};
    if (name == "bn-quadcap") return {{"kind", "bn"}, {"phi", "quad_cap"}};
    if (name == "bn-step") return {{"kind", "bn"}, {"phi", "step"}};
    if (name == "bn-exp") return {{"kind", "bn"}, {"phi", "one_minus_exp"}};
    if (name == "ak") return {{"kind", "ak"}};
    if (name == "fractional") return {{"kind", "fractional"}, {"mu", mu}};
    throw std::invalid_argument("unknown family shorthand '" + name + "'");
}

json grid_from_shorthand(const std::string& domain, int points) {
    std::stringstream ss(domain);
    std::string tok;
    std::vector<std::string> parts;
    while (std::getline(ss, tok, ':')) parts.push_back(tok);
    json g;
    if (parts.size() == 3 && parts[0] == "interval") {
        g["domain"] = {{"kind", "interval"}, {"a", std::stod(parts[1])}, {"b", std::stod(parts[2])}};
    } else if (parts.size() == 5 && parts[0] == "rect") {
        g["domain"] = {{"kind", "rect"},
                       {"a1", std::stod(parts[1])},
                       {"b1", std::stod(parts[2])},
                       {"a2", std::stod(parts[3])},
                       {"b2", std::stod(parts[4])}};
    } else {
        throw std::invalid_argument("grid domain: interval:a:b or rect:a1:b1:a2:b2 expected");
    }
    g["points_per_axis"] = points;
    return g;
}

RunConfig build_config(const CommonFlags& f) {
    json j;
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) throw std::invalid_argument("cannot open config " + f.config_path);
        in >> j;
    } else {
        j = json::object();
    }
    if (!f.family.empty()) j["family"] = family_from_shorthand(f.family, f.mu);
    if (!f.grid_domain.empty() || f.grid_points > 0) {
        if (f.grid_domain.empty() || f.grid_points <= 0)
            throw std::invalid_argument("--grid-domain and --grid-points go together");
        j["grid"] = grid_from_shorthand(f.grid_domain, f.grid_points);
    }
    if (!f.param_grid.empty()) {
        const auto pg = bilevel::io::parse_grid_spec(f.param_grid);
        j["param_grid"] = {{"transform", pg.transform},
                           {"lo", pg.lo},
                           {"hi", pg.hi},
                           {"count", pg.count},
                           {"include_edges", f.edges || pg.include_edges}};
    } else if (f.edges && j.contains("param_grid")) {
        j["param_grid"]["include_edges"] = true;
    }
    if (!f.data_clean.empty() || !f.data_noisy.empty()) {
        j["data"] = {{"clean", f.data_clean}, {"noisy", f.data_noisy}};
    }
    if (!f.out_dir.empty()) j["out"] = f.out_dir;
    if (f.seed >= 0) j["seed"] = static_cast<std::uint64_t>(f.seed);
    if (f.threads > 0) j["threads"] = f.threads;
    if (f.refine_iters >= 0) j["refine_iters"] = f.refine_iters;
    if (!j.contains("threads")) {
        if (const char* env = std::getenv("BILEVEL_THREADS")) j["threads"] = std::atoi(env);
    }
    return bilevel::io::parse_config(j);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bi-level regularization-parameter learning for variational denoising"};
    app.require_subcommand(1);

    CommonFlags learn_flags, solve_flags, eval_flags, cond_flags, mosco_flags;
    std::string solve_param, eval_param;
    std::string mosco_scan = "constant-lower", mosco_probe = "ramp", mosco_seq;
    std::string demo_name;

    auto* cmd_learn = app.add_subcommand("learn", "sweep the parameter interval and classify the argmin");
    add_common(cmd_learn, learn_flags);

    auto* cmd_solve = app.add_subcommand("solve", "solve the lower-level problem at one parameter");
    add_common(cmd_solve, solve_flags);
    cmd_solve->add_option("--param", solve_param, "parameter value, or lower|upper")->required();

    auto* cmd_eval = app.add_subcommand("eval", "evaluate the upper-level value at one parameter");
    add_common(cmd_eval, eval_flags);
    cmd_eval->add_option("--param", eval_param, "parameter value, or lower|upper")->required();

    auto* cmd_conditions =
        app.add_subcommand("conditions", "evaluate the interior-optimum data conditions");
    add_common(cmd_conditions, cond_flags);

    auto* cmd_mosco = app.add_subcommand("mosco", "parameter-sequence scans of the regularizers");
    add_common(cmd_mosco, mosco_flags);
    cmd_mosco->add_option("--scan", mosco_scan, "constant-lower | constant-upper | scaled | vanishing");
    cmd_mosco->add_option("--probe", mosco_probe, "ramp | sawtooth_noisy | sine | step | random_lipschitz");
    cmd_mosco->add_option("--sequence", mosco_seq, "lo:hi:count:scale")->required();

    auto* cmd_demo = app.add_subcommand("demo", "built-in scenarios with known outcomes");
    cmd_demo->add_option("name", demo_name, "remark-2.3 | example-4.2 | example-5.3 | remark-7.4")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_learn->parsed()) {
            const json out = bilevel::io::run_learn(build_config(learn_flags));
            std::cout << out["structure"].dump(2) << "\n";
            return bilevel::io::kExitOk;
        }
        if (cmd_solve->parsed()) {
            bilevel::io::run_solve(build_config(solve_flags), solve_param);
            return bilevel::io::kExitOk;
        }
        if (cmd_eval->parsed()) {
            const json out = bilevel::io::run_eval(build_config(eval_flags), eval_param);
            std::cout << out.dump(2) << "\n";
            return bilevel::io::kExitOk;
        }
        if (cmd_conditions->parsed()) {
            const json out = bilevel::io::run_conditions(build_config(cond_flags));
            std::cout << out.dump(2) << "\n";
            return bilevel::io::kExitOk;
        }
        if (cmd_mosco->parsed()) {
            const json out = bilevel::io::run_mosco(build_config(mosco_flags), mosco_scan,
                                                    mosco_probe, mosco_seq);
            std::cout << out.dump(2) << "\n";
            return bilevel::io::kExitOk;
        }
        if (cmd_demo->parsed()) {
            const auto res = bilevel::io::run_demo(demo_name);
            std::printf("%-28s %14s %14s  %s\n", "check", "expected", "computed", "status");
            for (const auto& c : res.checks)
                std::printf("%-28s %14.8g %14.8g  %s\n", c.name.c_str(), c.expected, c.computed,
                            c.pass ? "pass" : "FAIL");
            std::printf("demo %s: %s\n", res.name.c_str(), res.ok ? "all checks passed" : "FAILED");
            return res.ok ? bilevel::io::kExitOk : 1;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return bilevel::io::kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return bilevel::io::kExitSolver;
    }
    return bilevel::io::kExitOk;
}
