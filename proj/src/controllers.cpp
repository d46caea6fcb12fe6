#include "retc/controllers.hpp"

#include "retc/errors.hpp"

namespace retc {

RolloutStepResult rollout_step(const OverallState& xi, int k, const OcpParams& params,
                               const PlantModel& plant, const TokenBucketSpec& spec) {
    OcpSolution sol = solve_ocp(xi, k, params, plant, spec);
    if (!sol.feasible) {
        throw OcpInfeasible("rollout step: no feasible schedule at step " + std::to_string(k));
    }
    RolloutStepResult out;
    out.input = sol.pi_star.front();
    out.solution = std::move(sol);
    return out;
}

OverallInput ttc_step(const OverallState& xi, int k, const Eigen::MatrixXd& K_x, int M,
                      const TokenBucketSpec& spec) {
    if (M < 1) throw ValidationError("ttc_step: period must be >= 1");
    OverallInput pi;
    if (k % M == 0) {
        if (xi.beta + spec.g - spec.c < 0) {
            throw InfeasibleTransmission("ttc_step: bucket level " + std::to_string(xi.beta) +
                                         " cannot pay for the transmission at step " +
                                         std::to_string(k));
        }
        pi.gamma = 1;
        pi.v = K_x * xi.x;
    } else {
        pi.gamma = 0;
        pi.v = Eigen::VectorXd::Zero(K_x.rows());
    }
    return pi;
}

OverallInput etc_step(const OverallState& xi, int k, const Eigen::MatrixXd& K_x,
                      double sigma_trigger, EtcMemory& memory) {
    if (sigma_trigger < 0.0 || sigma_trigger > 1.0) {
        throw ValidationError("etc_step: trigger level must lie in [0, 1]");
    }
    bool fire = false;
    if (k == 0 || !memory.x_last.has_value()) {
        fire = true;
    } else {
        const Eigen::VectorXd e = *memory.x_last - xi.x;
        fire = e.squaredNorm() > sigma_trigger * xi.x.squaredNorm();
    }
    OverallInput pi;
    if (fire) {
        pi.gamma = 1;
        pi.v = K_x * xi.x;
        memory.x_last = xi.x;
    } else {
        pi.gamma = 0;
        pi.v = Eigen::VectorXd::Zero(K_x.rows());
    }
    return pi;
}

}  // namespace retc
