#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "retc/ncs_model.hpp"
#include "retc/terminal_synthesis.hpp"

namespace retc {

// Controller selection as written in the config file.  Fields outside the
// selected kind are parsed but only validated when the kind uses them.
struct ControllerConfig {
    std::string kind;  // "rollout" | "ttc" | "etc"
    Variant variant = Variant::V1;
    int N_bar = 1;
    double sigma_bucket = 0.0;   // rollout only: weight of the bucket-level cost
    double sigma_trigger = 0.0;  // etc only: trigger level in [0, 1]
};

// Fully validated, declarative experiment description.  Gains and terminal
// ingredients are synthesized later from these ingredients, not stored here.
struct ExperimentConfig {
    int schema_version = 1;
    std::string preset_name;  // empty when the plant was given explicitly
    PlantModel plant;
    TokenBucketSpec spec;
    ControllerConfig controller;
    Eigen::VectorXd x0;
    Eigen::VectorXd u0;
    int beta0 = 0;
    int horizon_steps = 500;
    double convergence_tol = 1e-6;
    std::vector<int> sweep_horizons = {6, 7, 8, 12};        // sweep-horizon verb
    int etc_grid_size = 1001;                               // etc-search verb
    std::vector<int> timing_horizons = {6, 7, 8, 9, 10, 11, 12};  // timing verb
    int timing_repetitions = 5;
};

// Parses and fully validates a JSON config.  Malformed JSON raises ParseError
// with line/column; a well-formed file with bad content raises a single
// ValidationError listing every violation (unknown keys included).
ExperimentConfig load_config(const std::string& path);

// Same, from an in-memory string; `origin` names the source in messages.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);

}  // namespace retc
