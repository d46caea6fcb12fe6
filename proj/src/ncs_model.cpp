#include "retc/ncs_model.hpp"

#include <Eigen/Eigenvalues>
#include <sstream>

namespace retc {

namespace {

bool is_symmetric(const Eigen::MatrixXd& M, double tol = 1e-9) {
    return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, M.cwiseAbs().maxCoeff());
}

double min_eigenvalue(const Eigen::MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    return es.eigenvalues().minCoeff();
}

}  // namespace

bool Box::contains(const Eigen::VectorXd& z, double tol) const {
    if (z.size() != lo.size()) throw ValidationError("Box::contains: dimension mismatch");
    return (z.array() >= lo.array() - tol).all() && (z.array() <= hi.array() + tol).all();
}

void PlantModel::validate() const {
    std::ostringstream problems;
    if (A.rows() != A.cols()) problems << "A must be square; ";
    if (B.rows() != A.rows()) problems << "B row count must match A; ";
    if (Q.rows() != A.rows() || Q.cols() != A.cols()) problems << "Q must be n x n; ";
    if (R.rows() != B.cols() || R.cols() != B.cols()) problems << "R must be m x m; ";
    if (problems.str().empty()) {
        if (!is_symmetric(Q)) problems << "Q must be symmetric; ";
        if (!is_symmetric(R)) problems << "R must be symmetric; ";
        if (min_eigenvalue(Q) <= 0) problems << "Q must be positive definite; ";
        if (min_eigenvalue(R) <= 0) problems << "R must be positive definite; ";
        auto check_box = [&](const std::optional<Box>& box, int dim, const char* name) {
            if (!box) return;
            if (box->lo.size() != dim || box->hi.size() != dim) {
                problems << name << " bounds must have dimension " << dim << "; ";
                return;
            }
            if (!((box->lo.array() < 0.0).all() && (box->hi.array() > 0.0).all()))
                problems << name << " must contain the origin strictly; ";
        };
        check_box(state_box, n(), "state_box");
        check_box(input_box, m(), "input_box");
    }
    if (!problems.str().empty()) throw ValidationError("PlantModel: " + problems.str());
}

void TokenBucketSpec::validate() const {
    if (!(1 <= g && g <= c && c <= b)) {
        std::ostringstream msg;
        msg << "TokenBucketSpec: need 1 <= g <= c <= b, got g=" << g << " c=" << c << " b=" << b;
        throw ValidationError(msg.str());
    }
}

int base_period(const TokenBucketSpec& spec) {
    return (spec.c + spec.g - 1) / spec.g;  // ceil(c/g) for positive integers
}

int bucket_step(int beta, int gamma, const TokenBucketSpec& spec) {
    if (gamma != 0 && gamma != 1) throw ValidationError("bucket_step: gamma must be 0 or 1");
    if (gamma == 1 && beta + spec.g - spec.c < 0) {
        std::ostringstream msg;
        msg << "bucket_step: transmission with beta=" << beta << " needs beta+g-c >= 0 (g=" << spec.g
            << ", c=" << spec.c << ")";
        throw InfeasibleTransmission(msg.str());
    }
    return std::min(beta + spec.g - gamma * spec.c, spec.b);
}

OverallState overall_step(const OverallState& xi, const OverallInput& pi,
                          const PlantModel& plant, const TokenBucketSpec& spec) {
    OverallState next;
    const Eigen::VectorXd applied = pi.gamma ? pi.v : xi.u;
    next.x = plant.A * xi.x + plant.B * applied;
    next.u = applied;
    next.beta = bucket_step(xi.beta, pi.gamma, spec);
    return next;
}

double stage_cost(const OverallState& xi, const OverallInput& pi, const PlantModel& plant) {
    const Eigen::VectorXd& applied = pi.gamma ? pi.v : xi.u;
    return xi.x.dot(plant.Q * xi.x) + applied.dot(plant.R * applied);
}

bool in_constraint_set(const OverallState& xi, const PlantModel& plant,
                       const TokenBucketSpec& spec) {
    if (xi.beta < 0 || xi.beta > spec.b) return false;
    if (plant.state_box && !plant.state_box->contains(xi.x)) return false;
    if (plant.input_box && !plant.input_box->contains(xi.u)) return false;
    return true;
}

}  // namespace retc
