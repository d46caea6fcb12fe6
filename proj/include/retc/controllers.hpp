#pragma once

#include <optional>
#include <variant>

#include <Eigen/Dense>

#include "retc/ncs_model.hpp"
#include "retc/ocp.hpp"

namespace retc {

// Rollout controller: re-solves the schedule/input program at every step and
// applies the first move.  Stateless; everything it needs is in (xi, k).
struct RolloutController {
    OcpParams params;
};

// Periodic time-triggered baseline: transmit v = K_x x every M steps,
// anchored so that the first transmission happens at k = 0.
struct TtcController {
    Eigen::MatrixXd K_x;
    int M = 1;
};

// Classical event-triggered baseline: transmit v = K_x x whenever the
// squared deviation from the last transmitted state exceeds
// sigma_trigger * ||x||^2 (strict inequality), plus an unconditional
// transmission at k = 0.  Ignores the token bucket by design: violations
// are measured by the simulator, never prevented here.
struct ClassicalEtcController {
    Eigen::MatrixXd K_x;
    double sigma_trigger = 0.0;  // in [0, 1]
};

using ControllerKind = std::variant<RolloutController, TtcController, ClassicalEtcController>;

struct RolloutStepResult {
    OverallInput input;
    OcpSolution solution;
};

// One rollout step: solve the program at (xi, k) and return its first input.
// Throws OcpInfeasible when no schedule admits a feasible trajectory.
RolloutStepResult rollout_step(const OverallState& xi, int k, const OcpParams& params,
                               const PlantModel& plant, const TokenBucketSpec& spec);

// One periodic step.  Throws InfeasibleTransmission if a transmission is due
// but the bucket cannot pay for it.
OverallInput ttc_step(const OverallState& xi, int k, const Eigen::MatrixXd& K_x, int M,
                      const TokenBucketSpec& spec);

// Last transmitted plant state; empty before the first transmission.
struct EtcMemory {
    std::optional<Eigen::VectorXd> x_last;
};

// One event-triggered step; updates `memory` when it transmits.
OverallInput etc_step(const OverallState& xi, int k, const Eigen::MatrixXd& K_x,
                      double sigma_trigger, EtcMemory& memory);

}  // namespace retc
