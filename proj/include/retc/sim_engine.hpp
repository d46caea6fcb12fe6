#pragma once

#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "retc/controllers.hpp"
#include "retc/ncs_model.hpp"

namespace retc {

// One closed-loop experiment: plant + token bucket + a controller + initial
// condition.  The horizon and convergence tolerance default to the values
// used throughout the reference experiments.
struct SimConfig {
    PlantModel plant;
    TokenBucketSpec spec;
    ControllerKind controller;
    Eigen::VectorXd x0;
    Eigen::VectorXd u0;
    int beta0 = 0;
    int horizon_steps = 500;
    double convergence_tol = 1e-6;

    void validate() const;  // throws ValidationError listing every problem
};

struct StepRecord {
    int k = 0;
    Eigen::VectorXd x;  // plant state at k, before the input is applied
    Eigen::VectorXd u;  // held actuator value at k
    int beta = 0;       // bucket level at k (bookkeeping only for the ETC baseline)
    int gamma = 0;
    Eigen::VectorXd v;  // transmitted value; zero vector on hold steps
    double stage_cost = 0.0;
    double cumulative_cost = 0.0;
    double ocp_value = std::numeric_limits<double>::quiet_NaN();  // NaN for baselines
    long long schedules_examined = 0;                             // 0 for baselines
    double solve_seconds = 0.0;  // wall time of the controller decision
};

struct SimTrace {
    std::vector<StepRecord> steps;
    Eigen::VectorXd final_x;
    Eigen::VectorXd final_u;
    int final_beta = 0;
    double total_cost = 0.0;
    int transmissions = 0;
    double final_sup_norm = std::numeric_limits<double>::infinity();
    bool converged = false;  // sup-norm of (x, u) below tolerance after the last step
    int min_beta = 0;        // minimum bucket level seen anywhere in the run
};

// Runs the configured controller for horizon_steps steps.  The rollout and
// periodic controllers evolve the bucket under its real dynamics (transmit
// only when affordable); the event-triggered baseline keeps parallel
// bookkeeping instead, so its bucket level may go negative and is reported
// rather than enforced.
SimTrace run_closed_loop(const SimConfig& cfg);

// Final cumulative cost as the infinite-horizon estimate.  Throws
// NotConverged when the trace has not settled below its tolerance.
double infinite_cost_estimate(const SimTrace& trace);

struct EtcGridPoint {
    double sigma = 0.0;
    double total_cost = 0.0;
    int transmissions = 0;
    double bandwidth = 0.0;  // transmissions / horizon_steps
    bool converged = false;
    int min_beta = 0;
};

struct EtcSearchResult {
    std::vector<EtcGridPoint> grid;
    int best_index = -1;      // lowest total cost; earliest grid point on ties
    int feasible_index = -1;  // lowest cost with bandwidth <= g/c; -1 when none qualifies
    SimTrace best_trace;      // trace of the best-cost grid point
};

// Sweeps the trigger level over `grid_size` uniform points on [0, 1] for the
// event-triggered baseline in cfg_template (its stored trigger level is
// replaced by each grid value).
EtcSearchResult etc_sigma_search(const SimConfig& cfg_template, int grid_size);

// True iff the bucket level stays at or above `lower` over the final quarter
// of the trace (and at the post-run level).
bool bucket_convergence_check(const SimTrace& trace, int lower);

// Median over `reps` wall-clock timings of the program solve at (xi0, k=0).
double median_initial_solve_seconds(const OverallState& xi0, const OcpParams& params,
                                    const PlantModel& plant, const TokenBucketSpec& spec,
                                    int reps);

}  // namespace retc
