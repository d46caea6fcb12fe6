// Command-line harness: JSON experiment configs in, CSV artifacts out.
//
// Verbs:
//   run                one closed-loop simulation -> trace/summary/ingredients
//   sweep-horizon      rollout cost vs. prediction horizon -> sweep.csv
//   etc-search         trigger-level grid search -> etc_grid/etc_summary
//   timing             median initial solve time vs. horizon -> timing.csv
//   verify-ingredients terminal cost-decrease certificates -> verify.csv
//
// Exit codes: 0 success, 2 validation problem, 3 infeasible optimal control
// problem, 4 numerical failure.  Every artifact except timing.csv is
// byte-deterministic for a fixed config.

#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "retc/config.hpp"
#include "retc/controllers.hpp"
#include "retc/csv.hpp"
#include "retc/errors.hpp"
#include "retc/ncs_model.hpp"
#include "retc/ocp.hpp"
#include "retc/presets.hpp"
#include "retc/sim_engine.hpp"
#include "retc/terminal_synthesis.hpp"

namespace {

using namespace retc;

struct VerbOptions {
    std::string config_path;
    std::string out_dir = "out";
    bool quiet = false;
};

std::string out_path(const VerbOptions& opt, const std::string& name) {
    return (std::filesystem::path(opt.out_dir) / name).string();
}

void note(const VerbOptions& opt, const std::string& line) {
    if (!opt.quiet) std::cout << line << "\n";
}

TerminalIngredients synthesize(const ExperimentConfig& cfg) {
    return cfg.controller.variant == Variant::V1 ? variant1_ingredients(cfg.plant, cfg.spec)
                                                 : variant2_ingredients(cfg.plant, cfg.spec);
}

OcpParams make_ocp_params(const ExperimentConfig& cfg, const TerminalIngredients& ingredients,
                          int N_bar) {
    OcpParams params;
    params.variant = cfg.controller.variant;
    params.N_bar = N_bar;
    params.ingredients = ingredients;
    params.sigma_bucket = cfg.controller.sigma_bucket;
    params.validate();
    return params;
}

SimConfig make_sim_config(const ExperimentConfig& cfg, ControllerKind controller) {
    SimConfig sim;
    sim.plant = cfg.plant;
    sim.spec = cfg.spec;
    sim.controller = std::move(controller);
    sim.x0 = cfg.x0;
    sim.u0 = cfg.u0;
    sim.beta0 = cfg.beta0;
    sim.horizon_steps = cfg.horizon_steps;
    sim.convergence_tol = cfg.convergence_tol;
    return sim;
}

ControllerKind build_controller(const ExperimentConfig& cfg,
                                const TerminalIngredients& ingredients) {
    if (cfg.controller.kind == "rollout") {
        return RolloutController{make_ocp_params(cfg, ingredients, cfg.controller.N_bar)};
    }
    if (cfg.controller.kind == "ttc") {
        return TtcController{ingredients.K_x, ingredients.M};
    }
    if (cfg.controller.kind == "etc") {
        return ClassicalEtcController{ingredients.K_x, cfg.controller.sigma_trigger};
    }
    throw ValidationError("controller.kind must be one of: rollout, ttc, etc");
}

void write_ingredients_csv(const VerbOptions& opt, const ExperimentConfig& cfg,
                           const TerminalIngredients& ing) {
    std::vector<std::vector<std::string>> rows;
    auto add_matrix = [&rows](const std::string& name, const Eigen::MatrixXd& M) {
        std::vector<std::string> row{name, std::to_string(M.rows()), std::to_string(M.cols())};
        const auto cells = matrix_cells_row_major(M);
        row.insert(row.end(), cells.begin(), cells.end());
        rows.push_back(std::move(row));
    };
    add_matrix("A", cfg.plant.A);
    add_matrix("B", cfg.plant.B);
    add_matrix("Q", cfg.plant.Q);
    add_matrix("R", cfg.plant.R);
    add_matrix("P_x", ing.P_x);
    add_matrix("K_x", ing.K_x);
    add_matrix("K", ing.K);
    for (size_t j = 0; j < ing.P.size(); ++j) {
        add_matrix("P_" + std::to_string(j), ing.P[j]);
    }
    {
        std::vector<std::string> row{"bucket_floor", "1",
                                     std::to_string(ing.bucket_floor.size())};
        for (int f : ing.bucket_floor) row.push_back(std::to_string(f));
        rows.push_back(std::move(row));
    }
    if (ing.alpha) {
        std::vector<std::string> row{"alpha", "1", std::to_string(ing.alpha->size())};
        for (double a : *ing.alpha) row.push_back(format_double(a));
        rows.push_back(std::move(row));
    }
    const std::string path = out_path(opt, "ingredients.csv");
    write_csv_file(path, {"name", "rows", "cols", "entries_row_major"}, rows);
    note(opt, "wrote " + path);
}

void write_trace_csv(const VerbOptions& opt, const ExperimentConfig& cfg, const SimTrace& trace) {
    const int n = cfg.plant.n();
    const int m = cfg.plant.m();
    std::vector<std::string> header{"k",
                                    "beta",
                                    "gamma",
                                    "stage_cost",
                                    "cumulative_cost",
                                    "ocp_value",
                                    "schedules_examined"};
    for (int i = 0; i < n; ++i) header.push_back("x" + std::to_string(i));
    for (int i = 0; i < m; ++i) header.push_back("u" + std::to_string(i));
    for (int i = 0; i < m; ++i) header.push_back("v" + std::to_string(i));

    std::vector<std::vector<std::string>> rows;
    rows.reserve(trace.steps.size());
    for (const auto& rec : trace.steps) {
        std::vector<std::string> row{std::to_string(rec.k),
                                     std::to_string(rec.beta),
                                     std::to_string(rec.gamma),
                                     format_double(rec.stage_cost),
                                     format_double(rec.cumulative_cost),
                                     format_double(rec.ocp_value),
                                     std::to_string(rec.schedules_examined)};
        for (int i = 0; i < n; ++i) row.push_back(format_double(rec.x(i)));
        for (int i = 0; i < m; ++i) row.push_back(format_double(rec.u(i)));
        for (int i = 0; i < m; ++i) row.push_back(format_double(rec.v(i)));
        rows.push_back(std::move(row));
    }
    const std::string path = out_path(opt, "trace.csv");
    write_csv_file(path, header, rows);
    note(opt, "wrote " + path);
}

void write_summary_csv(const VerbOptions& opt, const ExperimentConfig& cfg,
                       const SimTrace& trace) {
    const bool rollout = cfg.controller.kind == "rollout";
    const int lower =
        rollout ? std::max(0, cfg.spec.b - cfg.controller.N_bar * cfg.spec.g) : 0;
    const bool settled = bucket_convergence_check(trace, lower);
    const double bandwidth = static_cast<double>(trace.transmissions) / cfg.horizon_steps;

    const std::vector<std::string> header{
        "total_cost", "transmissions", "bandwidth",        "converged", "final_sup_norm",
        "min_beta",   "final_beta",    "bucket_lower_bound", "bucket_settled", "horizon_steps"};
    const std::vector<std::string> row{format_double(trace.total_cost),
                                       std::to_string(trace.transmissions),
                                       format_double(bandwidth),
                                       trace.converged ? "1" : "0",
                                       format_double(trace.final_sup_norm),
                                       std::to_string(trace.min_beta),
                                       std::to_string(trace.final_beta),
                                       std::to_string(lower),
                                       settled ? "1" : "0",
                                       std::to_string(cfg.horizon_steps)};
    const std::string path = out_path(opt, "summary.csv");
    write_csv_file(path, header, {row});
    note(opt, "wrote " + path);
}

int verb_run(const VerbOptions& opt) {
    const ExperimentConfig cfg = load_config(opt.config_path);
    const TerminalIngredients ingredients = synthesize(cfg);
    const SimConfig sim = make_sim_config(cfg, build_controller(cfg, ingredients));
    const SimTrace trace = run_closed_loop(sim);

    std::filesystem::create_directories(opt.out_dir);
    write_trace_csv(opt, cfg, trace);
    write_summary_csv(opt, cfg, trace);
    write_ingredients_csv(opt, cfg, ingredients);
    note(opt, "total cost " + format_double(trace.total_cost) + ", " +
                  std::to_string(trace.transmissions) + " transmissions, converged=" +
                  (trace.converged ? "yes" : "no"));
    return 0;
}

int verb_sweep_horizon(const VerbOptions& opt) {
    const ExperimentConfig cfg = load_config(opt.config_path);
    if (cfg.controller.kind != "rollout") {
        throw ValidationError("sweep-horizon requires controller.kind == \"rollout\"");
    }
    const TerminalIngredients ingredients = synthesize(cfg);

    std::vector<std::vector<std::string>> rows;
    for (int N_bar : cfg.sweep_horizons) {
        RolloutController controller{make_ocp_params(cfg, ingredients, N_bar)};
        const SimTrace trace = run_closed_loop(make_sim_config(cfg, controller));
        rows.push_back({std::to_string(N_bar),
                        std::to_string(static_cast<int>(cfg.controller.variant)),
                        format_double(trace.total_cost), std::to_string(trace.transmissions),
                        trace.converged ? "1" : "0"});
        note(opt, "N_bar " + std::to_string(N_bar) + ": cost " +
                      format_double(trace.total_cost));
    }
    std::filesystem::create_directories(opt.out_dir);
    const std::string path = out_path(opt, "sweep.csv");
    write_csv_file(path, {"N_bar", "variant", "total_cost", "transmissions", "converged"}, rows);
    note(opt, "wrote " + path);
    return 0;
}

int verb_etc_search(const VerbOptions& opt) {
    const ExperimentConfig cfg = load_config(opt.config_path);
    if (cfg.controller.kind != "etc") {
        throw ValidationError("etc-search requires controller.kind == \"etc\"");
    }
    const TerminalIngredients ingredients = synthesize(cfg);
    const SimConfig sim = make_sim_config(cfg, build_controller(cfg, ingredients));
    const EtcSearchResult result = etc_sigma_search(sim, cfg.etc_grid_size);

    std::vector<std::vector<std::string>> rows;
    rows.reserve(result.grid.size());
    for (const auto& pt : result.grid) {
        rows.push_back({format_double(pt.sigma), format_double(pt.total_cost),
                        std::to_string(pt.transmissions), format_double(pt.bandwidth),
                        pt.converged ? "1" : "0", std::to_string(pt.min_beta)});
    }
    std::filesystem::create_directories(opt.out_dir);
    const std::string grid_path = out_path(opt, "etc_grid.csv");
    write_csv_file(grid_path,
                   {"sigma", "total_cost", "transmissions", "bandwidth", "converged", "min_beta"},
                   rows);
    note(opt, "wrote " + grid_path);

    const auto& best = result.grid[static_cast<size_t>(result.best_index)];
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const bool has_feasible = result.feasible_index >= 0;
    const EtcGridPoint feas =
        has_feasible ? result.grid[static_cast<size_t>(result.feasible_index)] : EtcGridPoint{};
    const std::vector<std::string> header{"best_sigma",     "best_cost",
                                          "best_transmissions", "best_bandwidth",
                                          "feasible_sigma", "feasible_cost",
                                          "feasible_bandwidth", "sustainable_rate",
                                          "grid_size"};
    const std::vector<std::string> row{
        format_double(best.sigma),
        format_double(best.total_cost),
        std::to_string(best.transmissions),
        format_double(best.bandwidth),
        format_double(has_feasible ? feas.sigma : nan),
        format_double(has_feasible ? feas.total_cost : nan),
        format_double(has_feasible ? feas.bandwidth : nan),
        format_double(cfg.spec.sustainable_rate()),
        std::to_string(cfg.etc_grid_size)};
    const std::string summary_path = out_path(opt, "etc_summary.csv");
    write_csv_file(summary_path, header, {row});
    note(opt, "wrote " + summary_path);
    note(opt, "best cost " + format_double(best.total_cost) + " at trigger level " +
                  format_double(best.sigma));
    return 0;
}

int verb_timing(const VerbOptions& opt) {
    const ExperimentConfig cfg = load_config(opt.config_path);
    if (cfg.controller.kind != "rollout") {
        throw ValidationError("timing requires controller.kind == \"rollout\"");
    }
    const TerminalIngredients ingredients = synthesize(cfg);
    const OverallState xi0{cfg.x0, cfg.u0, cfg.beta0};

    std::vector<std::vector<std::string>> rows;
    for (int N_bar : cfg.timing_horizons) {
        const OcpParams params = make_ocp_params(cfg, ingredients, N_bar);
        const double median =
            median_initial_solve_seconds(xi0, params, cfg.plant, cfg.spec, cfg.timing_repetitions);
        const OcpSolution sol = solve_ocp(xi0, 0, params, cfg.plant, cfg.spec);
        rows.push_back({std::to_string(N_bar), format_double(median), format_double(sol.value),
                        std::to_string(sol.n_schedules_examined)});
        note(opt, "N_bar " + std::to_string(N_bar) + ": median " + format_double(median) + " s");
    }
    std::filesystem::create_directories(opt.out_dir);
    const std::string path = out_path(opt, "timing.csv");
    write_csv_file(path, {"N_bar", "median_seconds", "ocp_value", "schedules_examined"}, rows);
    note(opt, "wrote " + path);
    return 0;
}

int verb_verify_ingredients(const VerbOptions& opt) {
    const ExperimentConfig cfg = load_config(opt.config_path);
    const TerminalIngredients ingredients = synthesize(cfg);
    const CostDecreaseReport report = verify_cost_decrease(ingredients, cfg.plant, cfg.spec);

    std::vector<std::vector<std::string>> rows;
    for (size_t i = 0; i < report.max_eigenvalues.size(); ++i) {
        rows.push_back({std::to_string(i), format_double(report.max_eigenvalues[i])});
    }
    std::filesystem::create_directories(opt.out_dir);
    const std::string path = out_path(opt, "verify.csv");
    write_csv_file(path, {"inequality", "max_eigenvalue"}, rows);
    note(opt, "wrote " + path);
    write_ingredients_csv(opt, cfg, ingredients);

    if (!report.pass) {
        std::cerr << "cost-decrease verification FAILED\n";
        throw NumericalFailure("terminal ingredients do not satisfy the decrease conditions");
    }
    note(opt, "cost-decrease verification passed (" +
                  std::to_string(report.max_eigenvalues.size()) + " inequalities)");
    return 0;
}

int dispatch(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ValidationError& e) {  // includes ParseError
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const OcpInfeasible& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const InfeasibleTransmission& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {  // numerical failures and anything unexpected
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rollout event-triggered control: simulation and experiment harness"};
    app.require_subcommand(1);

    struct Verb {
        const char* name;
        const char* help;
        std::function<int(const VerbOptions&)> body;
    };
    const std::vector<Verb> verbs{
        {"run", "run one closed-loop simulation", verb_run},
        {"sweep-horizon", "rollout cost across prediction horizons", verb_sweep_horizon},
        {"etc-search", "grid search over the event-trigger level", verb_etc_search},
        {"timing", "median initial solve time across horizons", verb_timing},
        {"verify-ingredients", "check the terminal cost-decrease certificates",
         verb_verify_ingredients},
    };

    auto options = std::make_shared<VerbOptions>();
    int exit_code = 0;
    for (const auto& verb : verbs) {
        CLI::App* sub = app.add_subcommand(verb.name, verb.help);
        sub->add_option("config", options->config_path, "JSON experiment config")
            ->required();
        sub->add_option("--out", options->out_dir, "artifact output directory")
            ->capture_default_str();
        sub->add_flag("--quiet", options->quiet, "suppress progress output");
        sub->callback([&exit_code, options, body = verb.body]() {
            exit_code = dispatch([&]() { return body(*options); });
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage problems are validation problems
    }
    return exit_code;
}
