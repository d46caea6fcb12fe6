#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "retc/ncs_model.hpp"

namespace retc {

enum class Variant { V1 = 1, V2 = 2 };

// Regularization added to the terminal weight matrices when they are used as
// ellipsoid shapes (P_0 is singular in the held-input block).
inline constexpr double kEllipsoidShapeEps = 1e-9;

// The plant lifted over one base period M: sampling only at transmission
// instants, x+ = A_M x + B_M v with per-cycle cost [x; v]' T_M [x; v].
// A0 is the one-step hold map on z = (x, u); A1 is the one-step transmit
// map with the update channel left open (the closed transmit map is
// A1 + [B; I] K once a gain K exists).
struct LiftedSystem {
    Eigen::MatrixXd A_M;  // A^M
    Eigen::MatrixXd B_M;  // sum_{i=0}^{M-1} A^i B
    Eigen::MatrixXd T_M;  // sum_{i=0}^{M-1} A0^i' diag(Q,R) A0^i
    Eigen::MatrixXd A0;   // [A B; 0 I]
    Eigen::MatrixXd A1;   // [A 0; 0 0]
    int M = 1;
};

// Everything the OCP needs for its stabilizing tail: the terminal gain,
// terminal cost matrices (one for the cyclic variant V1, M phase-indexed
// ones for the time-invariant-horizon variant V2), per-phase bucket floors,
// and ellipsoid radii when the plant is box-constrained.
struct TerminalIngredients {
    Variant variant = Variant::V1;
    int M = 1;
    Eigen::MatrixXd K;                       // m x (n+m), [K_x 0]
    std::vector<Eigen::MatrixXd> P;          // length 1 (V1) or M (V2)
    std::vector<int> bucket_floor;           // same length as P
    std::optional<std::vector<double>> alpha;  // ellipsoid radii, constrained case
    Eigen::MatrixXd P_x;                     // n x n Riccati solution
    Eigen::MatrixXd K_x;                     // m x n Riccati gain

    // Ellipsoid shape for phase j: P[j] + eps*I.
    Eigen::MatrixXd shape(int j) const;
    // Closed transmit map [A + B K_x, 0; K_x, 0].
    Eigen::MatrixXd closed_transmit(const PlantModel& plant) const;
};

// One-step hold map [A B; 0 I] on z = (x, u).
Eigen::MatrixXd hold_map(const PlantModel& plant);

struct CostDecreaseReport {
    bool pass = false;
    std::vector<double> max_eigenvalues;  // one entry per verified inequality
};

// Lifts the plant over M steps (exact block formulas; no approximation).
LiftedSystem build_lifted(const PlantModel& plant, int M);

// Stabilizing solution of the discrete-time Riccati equation with cross
// term for x+ = A_M x + B_M w, per-cycle cost [x; w]' T_M [x; w], computed
// by fixed-point iteration from P = Q-block of T_M.  Throws NotControllable
// or NoConvergence.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> solve_are_cross(const LiftedSystem& lifted);

// Cyclic-horizon variant: single terminal weight diag(P_x, 0), gain
// [K_x 0], bucket floor c - g.
TerminalIngredients variant1_ingredients(const PlantModel& plant, const TokenBucketSpec& spec);

// Fixed-horizon variant: phase-indexed weights from the backward recursion
// P_j = A0' P_{(j+1) mod M} A0 + diag(Q, R) seeded with P_0 = diag(P_x, 0),
// floors [c-g, 0, g, ..., (M-2)g].
TerminalIngredients variant2_ingredients(const PlantModel& plant, const TokenBucketSpec& spec);

// Assembles the terminal cost-decrease inequalities (the transmit-phase one
// for V1; all M phase transitions for V2) and reports the largest
// eigenvalue of each left-hand side; pass iff all are <= tol.
CostDecreaseReport verify_cost_decrease(const TerminalIngredients& ing, const PlantModel& plant,
                                        const TokenBucketSpec& spec, double tol = 1e-8);

// Membership of xi in the terminal set for the given phase (ignored for
// V1).  Unconstrained plants: bucket floor check only.  Constrained
// plants: additionally [x; u]' shape(phase) [x; u] <= alpha[phase].
bool terminal_membership(const OverallState& xi, int phase, const TerminalIngredients& ing,
                         const PlantModel& plant, const TokenBucketSpec& spec);

}  // namespace retc
