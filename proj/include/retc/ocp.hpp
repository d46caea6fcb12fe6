#pragma once

#include <vector>

#include "retc/ncs_model.hpp"
#include "retc/qp_solver.hpp"
#include "retc/terminal_synthesis.hpp"

namespace retc {

struct OcpParams {
    Variant variant = Variant::V1;
    int N_bar = 1;
    TerminalIngredients ingredients;
    double sigma_bucket = 0.0;  // 0 disables the terminal bucket-level cost

    // V1 shrinks its horizon within each cycle, so it needs N_bar >= M;
    // V2 works with any N_bar >= 1.
    void validate() const;
};

struct OcpSolution {
    std::vector<OverallInput> pi_star;   // length N
    std::vector<OverallState> xi_pred;   // length N + 1, starting at xi0
    double value = 0.0;
    std::vector<int> schedule;           // chosen gamma-sequence
    long n_schedules_examined = 0;
    bool feasible = false;
};

// Prediction horizon at time k: N_bar - (k mod M) for the cyclic variant,
// N_bar for the time-invariant one.
int horizon_at(const OcpParams& params, int k);

// All gamma-sequences of length N whose integer bucket trajectory stays
// nonnegative and ends at or above terminal_floor.  Depth-first with exact
// pruning: a prefix dies when even an all-hold completion cannot reach the
// floor, or when it asks for an unaffordable transmission.  Sequences come
// out in lexicographic order (0 before 1).
std::vector<std::vector<int>> enumerate_schedules(int beta0, int N, const TokenBucketSpec& spec,
                                                  int terminal_floor);

// Condensed QP for one fixed schedule: decision vector w stacks v(i) over
// the transmit steps only; objective(w) + constant equals the OCP cost of
// the induced trajectory.  Carries the prediction operators needed to
// rebuild the trajectory from w.
struct CondensedQp {
    DenseQP qp;
    double constant = 0.0;
    std::vector<Eigen::MatrixXd> Phi;  // z_i = Phi[i] z0 + Gam[i] w
    std::vector<Eigen::MatrixXd> Gam;
    std::vector<int> v_offset;   // w-offset of v(i), or -1 on hold steps
    std::vector<int> beta_traj;  // schedule-determined bucket levels, length N+1
};

// Builds the complete per-schedule QP: stage costs, terminal cost for the
// given terminal phase, bucket-level cost (a schedule constant), and any box
// or ellipsoid constraints.  The periodic variant always lands on phase 0.
CondensedQp condense(const OverallState& xi0, const std::vector<int>& schedule, int phase,
                     const OcpParams& params, const PlantModel& plant,
                     const TokenBucketSpec& spec);

// Mixed-integer solve by enumeration: QP per schedule, global argmin with a
// deterministic tie rule (near-equal values prefer fewer transmissions,
// then the lexicographically smallest schedule).
OcpSolution solve_ocp(const OverallState& xi0, int k, const OcpParams& params,
                      const PlantModel& plant, const TokenBucketSpec& spec);

}  // namespace retc
