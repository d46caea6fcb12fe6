#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "retc/errors.hpp"

namespace retc {

// Quadratic trust constraint z'Sz + q'z + t <= 0 with S positive
// semidefinite: an ellipsoid in the decision variables, allowed to be
// off-center and degenerate (condensing a terminal set produces exactly
// this affine form).
struct Ellipsoid {
    Eigen::MatrixXd S;
    Eigen::VectorXd q;
    double t = 0.0;

    double eval(const Eigen::VectorXd& z) const { return z.dot(S * z) + q.dot(z) + t; }
};

// min 1/2 z'Hz + f'z  s.t.  G z <= h  and the listed ellipsoids.
// H is symmetric positive semidefinite; a uniform regularization
// kHessianEps is applied internally so factorizations succeed on the
// boundary of definiteness.
struct DenseQP {
    Eigen::MatrixXd H;
    Eigen::VectorXd f;
    Eigen::MatrixXd G;  // p x d, may have zero rows
    Eigen::VectorXd h;
    std::vector<Ellipsoid> ellipsoids;

    int dim() const { return static_cast<int>(H.rows()); }
    int rows() const { return static_cast<int>(G.rows()); }
};

inline constexpr double kHessianEps = 1e-10;

enum class QpStatus { Optimal, Infeasible, IterLimit };

struct QpSolution {
    Eigen::VectorXd z;
    double value = 0.0;  // 1/2 z'Hz + f'z with the *unregularized* H
    QpStatus status = QpStatus::Optimal;
    std::vector<int> active_set;            // tight linear rows; rows() means the ellipsoid
    std::vector<double> objective_history;  // objective after each active-set step
};

// Solves (H + eps*I) z = -f by symmetric factorization.  Throws
// SingularHessian when the factorization breaks down.
QpSolution solve_unconstrained(const Eigen::MatrixXd& H, const Eigen::VectorXd& f);

// Deterministic feasible point for the linear rows of qp, starting from
// z_init: damped Gauss-Newton on the squared hinge violation.  Returns
// nullopt when the violation cannot be driven to zero within the budget
// (reported as infeasible by callers).
std::optional<Eigen::VectorXd> find_feasible_point(const DenseQP& qp,
                                                   const Eigen::VectorXd& z_init);

// Primal active-set method from a feasible z0.  Linear rows are pivoted in
// and out with lowest-index tie-breaking; a single ellipsoid is handled by
// an outer bisection on its Lagrange multiplier (the inner solves see
// H + 2*lambda*S).  Objective values are recorded per iteration so the
// monotone-descent property is checkable from outside.
QpSolution solve_active_set(const DenseQP& qp, const Eigen::VectorXd& z0);

}  // namespace retc
