#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "retc/ncs_model.hpp"

namespace retc {

// A named, fully specified experiment setup: plant, token bucket, and the
// initial condition used by the reference experiments.
struct Preset {
    std::string name;
    PlantModel plant;
    TokenBucketSpec spec;
    Eigen::VectorXd x0;
    Eigen::VectorXd u0;
    int beta0 = 0;
};

// Exact zero-order-hold discretization of x' = Ac x + Bc u at sample time Ts.
void discretize_zoh(const Eigen::MatrixXd& Ac, const Eigen::MatrixXd& Bc, double Ts,
                    Eigen::MatrixXd& Ad, Eigen::MatrixXd& Bd);

// Built-in presets:
//   two_mass_spring             4-state spring-coupled carts, 1 input, g=1 c=6 b=22
//   two_mass_spring_constrained same plant with state box [-2,2]^2 x [-5,5]^2
//                               and input box [-12,12] (timing study)
//   batch_reactor               4-state open-loop-unstable reactor, 2 inputs,
//                               g=3 c=8 b=22
Preset make_preset(const std::string& name);  // throws ValidationError on unknown names
std::vector<std::string> preset_names();

}  // namespace retc
