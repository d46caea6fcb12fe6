#pragma once

#include <Eigen/Dense>
#include <optional>

#include "retc/errors.hpp"

namespace retc {

// Per-coordinate interval bounds, lo <= 0 <= hi strictly (sets must contain
// the origin in their interior so the terminal ellipsoids have positive
// radius).
struct Box {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;

    bool contains(const Eigen::VectorXd& z, double tol = 0.0) const;
};

// Discrete-time LTI plant x+ = Ax + Bu with quadratic stage weights and
// optional box constraints on state and input.
struct PlantModel {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd Q;
    Eigen::MatrixXd R;
    std::optional<Box> state_box;
    std::optional<Box> input_box;

    int n() const { return static_cast<int>(A.rows()); }
    int m() const { return static_cast<int>(B.cols()); }

    // Throws ValidationError on dimension mismatch, non-symmetric or
    // non-positive-definite weights, or boxes that do not strictly contain
    // the origin.
    void validate() const;
};

// Token bucket traffic specification: the bucket gains g tokens per step,
// a transmission costs c tokens, and the level saturates at b.
struct TokenBucketSpec {
    int g = 1;
    int c = 1;
    int b = 1;

    void validate() const;  // enforces 1 <= g <= c <= b

    double sustainable_rate() const { return static_cast<double>(g) / c; }
};

// Composite state xi = (x, u, beta): plant state, input held in the
// actuator's zero-order hold, and bucket fill level.  Bucket levels are
// exact integers so saturation and feasibility checks carry no tolerance.
struct OverallState {
    Eigen::VectorXd x;
    Eigen::VectorXd u;
    int beta = 0;
};

// Composite input pi = (v, gamma): candidate control update and the binary
// transmission decision.  By convention v is stored as zero when gamma = 0
// (it is ignored by the dynamics), keeping traces canonical.
struct OverallInput {
    Eigen::VectorXd v;
    int gamma = 0;
};

// Guaranteed inter-transmission period ceil(c/g): one transmission is always
// possible every base_period steps.
int base_period(const TokenBucketSpec& spec);

// Bucket recursion min(beta + g - gamma*c, b).  Throws
// InfeasibleTransmission when gamma = 1 but beta + g - c < 0.
int bucket_step(int beta, int gamma, const TokenBucketSpec& spec);

// One step of the composite dynamics:
//   x+ = Ax + B(gamma*v + (1-gamma)*u),  u+ = gamma*v + (1-gamma)*u,
//   beta+ = min(beta + g - gamma*c, b).
OverallState overall_step(const OverallState& xi, const OverallInput& pi,
                          const PlantModel& plant, const TokenBucketSpec& spec);

// Stage cost x'Qx + (1-gamma) u'Ru + gamma v'Rv.
double stage_cost(const OverallState& xi, const OverallInput& pi,
                  const PlantModel& plant);

// Membership of xi in X x U x [0, b]; unbounded boxes always pass.
bool in_constraint_set(const OverallState& xi, const PlantModel& plant,
                       const TokenBucketSpec& spec);

}  // namespace retc
