#include "retc/terminal_synthesis.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

namespace retc {

namespace {

Eigen::MatrixXd block_diag(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(top.rows() + bottom.rows(), top.cols() + bottom.cols());
    out.topLeftCorner(top.rows(), top.cols()) = top;
    out.bottomRightCorner(bottom.rows(), bottom.cols()) = bottom;
    return out;
}

double spectral_radius(const Eigen::MatrixXd& M) {
    return M.eigenvalues().cwiseAbs().maxCoeff();
}

void check_controllable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    const int n = static_cast<int>(A.rows());
    const int m = static_cast<int>(B.cols());
    Eigen::MatrixXd ctrb(n, n * m);
    Eigen::MatrixXd col = B;
    for (int i = 0; i < n; ++i) {
        ctrb.middleCols(i * m, m) = col;
        col = A * col;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(ctrb);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(sv.size() - 1) <= 1e-9 * sv(0)) {
        throw NotControllable("lifted pair (A_M, B_M) fails the controllability rank test");
    }
}

// Largest generalized eigenvalue of (S, W), W positive definite: the factor
// by which the W-ellipsoid's image under the quadratic form S can exceed
// its radius.
double generalized_max_eig(const Eigen::MatrixXd& S, const Eigen::MatrixXd& W) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(S, W);
    return es.eigenvalues().maxCoeff();
}

struct Face {
    Eigen::VectorXd normal;
    double offset;  // normal' z <= offset
};

// Box faces on z = (x, u); coordinates without a box are unconstrained and
// contribute no face.
std::vector<Face> collect_faces(const PlantModel& plant) {
    std::vector<Face> faces;
    const int n = plant.n();
    const int m = plant.m();
    auto add = [&](const std::optional<Box>& box, int base, int dim) {
        if (!box) return;
        for (int i = 0; i < dim; ++i) {
            Face up{Eigen::VectorXd::Zero(n + m), box->hi(i)};
            up.normal(base + i) = 1.0;
            faces.push_back(up);
            Face down{Eigen::VectorXd::Zero(n + m), -box->lo(i)};
            down.normal(base + i) = -1.0;
            faces.push_back(down);
        }
    };
    add(plant.state_box, 0, n);
    add(plant.input_box, n, m);
    return faces;
}

// Largest common radius alpha such that every listed image T_s * E(W_s, alpha)
// stays inside the box faces, found by bisection.  The support of the image
// of {z : z'Wz <= alpha} under T along a face normal g is
// sqrt(alpha * (T'g)' W^{-1} (T'g)), so each (station, face) pair
// contributes a monotone constraint alpha * s <= offset^2.
double bisect_alpha(const std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>>& stations,
                    const std::vector<Face>& faces) {
    std::vector<std::pair<double, double>> sensitivity;  // (s, offset)
    for (const auto& [T, W] : stations) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(W);
        if (ldlt.info() != Eigen::Success) {
            throw NumericalFailure("terminal ellipsoid shape is not positive definite");
        }
        for (const auto& face : faces) {
            const Eigen::VectorXd mapped = T.transpose() * face.normal;
            const double s = mapped.dot(ldlt.solve(mapped));
            sensitivity.emplace_back(s, face.offset);
        }
    }
    auto fits = [&](double alpha) {
        for (const auto& [s, offset] : sensitivity) {
            if (alpha * s > offset * offset) return false;
        }
        return true;
    };
    double hi = 1.0;
    while (fits(hi) && hi < 1e30) hi *= 2.0;
    if (hi >= 1e30) return hi;  // faces never bind (e.g. image maps vanish)
    double lo = 0.0;
    for (int iter = 0; iter < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++iter) {
        const double mid = 0.5 * (lo + hi);
        (fits(mid) ? lo : hi) = mid;
    }
    return lo;
}

// Common ellipsoid radius for the terminal-set chain.  The shapes are the
// phase weights themselves, so one-step invariance of equal-radius
// ellipsoids follows from the cost-decrease inequalities; it is re-checked
// here via generalized eigenvalues, and the radius is then determined by
// box containment alone.
std::optional<std::vector<double>> compute_alpha(const TerminalIngredients& ing,
                                                 const PlantModel& plant) {
    if (!plant.state_box && !plant.input_box) return std::nullopt;
    const std::vector<Face> faces = collect_faces(plant);
    const Eigen::MatrixXd A0 = hold_map(plant);
    const Eigen::MatrixXd A1c = ing.closed_transmit(plant);
    const int nm = plant.n() + plant.m();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(nm, nm);
    const int M = ing.M;

    std::vector<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> stations;  // (map, shape)
    constexpr double chain_tol = 1.0 + 1e-9;
    if (ing.variant == Variant::V1) {
        const Eigen::MatrixXd W0 = ing.shape(0);
        // The terminal policy transmits once, then holds M-1 steps; every
        // visited state must respect the boxes and the cycle must return
        // into the ellipsoid.
        stations.emplace_back(I, W0);
        Eigen::MatrixXd T = A1c;
        for (int i = 0; i + 1 < M; ++i) {
            stations.emplace_back(T, W0);
            T = A0 * T;
        }
        if (generalized_max_eig(T.transpose() * W0 * T, W0) > chain_tol) {
            throw NumericalFailure("terminal ellipsoid is not cycle-invariant");
        }
    } else {
        for (int j = 0; j < M; ++j) stations.emplace_back(I, ing.shape(j));
        for (int j = 0; j < M; ++j) {
            const Eigen::MatrixXd& map = (j == 0) ? A1c : A0;
            const Eigen::MatrixXd Wn = ing.shape((j + 1) % M);
            if (generalized_max_eig(map.transpose() * Wn * map, ing.shape(j)) > chain_tol) {
                throw NumericalFailure("terminal ellipsoid chain is not invariant");
            }
        }
    }
    const double alpha = bisect_alpha(stations, faces);
    return std::vector<double>(ing.P.size(), alpha);
}

}  // namespace

Eigen::MatrixXd TerminalIngredients::shape(int j) const {
    const auto& Pj = P.at(static_cast<size_t>(j));
    return Pj + kEllipsoidShapeEps * Eigen::MatrixXd::Identity(Pj.rows(), Pj.cols());
}

Eigen::MatrixXd TerminalIngredients::closed_transmit(const PlantModel& plant) const {
    const int n = plant.n();
    const int m = plant.m();
    Eigen::MatrixXd A1 = Eigen::MatrixXd::Zero(n + m, n + m);
    A1.topLeftCorner(n, n) = plant.A;
    Eigen::MatrixXd Bhat(n + m, m);
    Bhat.topRows(n) = plant.B;
    Bhat.bottomRows(m) = Eigen::MatrixXd::Identity(m, m);
    return A1 + Bhat * K;
}

Eigen::MatrixXd hold_map(const PlantModel& plant) {
    const int n = plant.n();
    const int m = plant.m();
    Eigen::MatrixXd A0 = Eigen::MatrixXd::Zero(n + m, n + m);
    A0.topLeftCorner(n, n) = plant.A;
    A0.topRightCorner(n, m) = plant.B;
    A0.bottomRightCorner(m, m) = Eigen::MatrixXd::Identity(m, m);
    return A0;
}

LiftedSystem build_lifted(const PlantModel& plant, int M) {
    if (M < 1) throw ValidationError("build_lifted: M must be >= 1");
    const int n = plant.n();
    const int m = plant.m();
    LiftedSystem lifted;
    lifted.M = M;
    lifted.A0 = Eigen::MatrixXd::Zero(n + m, n + m);
    lifted.A0.topLeftCorner(n, n) = plant.A;
    lifted.A0.topRightCorner(n, m) = plant.B;
    lifted.A0.bottomRightCorner(m, m) = Eigen::MatrixXd::Identity(m, m);
    lifted.A1 = Eigen::MatrixXd::Zero(n + m, n + m);
    lifted.A1.topLeftCorner(n, n) = plant.A;

    Eigen::MatrixXd Apow = Eigen::MatrixXd::Identity(n, n);  // A^i
    lifted.B_M = Eigen::MatrixXd::Zero(n, m);
    const Eigen::MatrixXd QR = block_diag(plant.Q, plant.R);
    lifted.T_M = Eigen::MatrixXd::Zero(n + m, n + m);
    Eigen::MatrixXd A0pow = Eigen::MatrixXd::Identity(n + m, n + m);  // A0^i
    for (int i = 0; i < M; ++i) {
        lifted.B_M += Apow * plant.B;
        lifted.T_M += A0pow.transpose() * QR * A0pow;
        Apow = plant.A * Apow;
        A0pow = lifted.A0 * A0pow;
    }
    lifted.A_M = Apow;
    lifted.T_M = 0.5 * (lifted.T_M + lifted.T_M.transpose().eval());
    return lifted;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> solve_are_cross(const LiftedSystem& lifted) {
    const int n = static_cast<int>(lifted.A_M.rows());
    const int m = static_cast<int>(lifted.B_M.cols());
    check_controllable(lifted.A_M, lifted.B_M);

    const Eigen::MatrixXd Qbar = lifted.T_M.topLeftCorner(n, n);
    const Eigen::MatrixXd Sbar = lifted.T_M.topRightCorner(n, m);
    const Eigen::MatrixXd Rbar = lifted.T_M.bottomRightCorner(m, m);
    const Eigen::MatrixXd& A = lifted.A_M;
    const Eigen::MatrixXd& B = lifted.B_M;

    // Fixed-point iteration of the Riccati recursion with the cross term
    // eliminated by completing the square.
    constexpr double tol = 1e-12;
    constexpr int budget = 100000;
    Eigen::MatrixXd P = Qbar;
    bool converged = false;
    for (int it = 0; it < budget; ++it) {
        const Eigen::MatrixXd G = Rbar + B.transpose() * P * B;
        const Eigen::MatrixXd L = G.ldlt().solve(Sbar.transpose() + B.transpose() * P * A);
        Eigen::MatrixXd Pn = Qbar + A.transpose() * P * A - (Sbar + A.transpose() * P * B) * L;
        Pn = 0.5 * (Pn + Pn.transpose().eval());
        const double delta = (Pn - P).cwiseAbs().maxCoeff();
        P = Pn;
        if (delta <= tol) {
            converged = true;
            break;
        }
    }
    if (!converged) throw NoConvergence("Riccati fixed-point iteration exhausted its budget");

    const Eigen::MatrixXd G = Rbar + B.transpose() * P * B;
    const Eigen::MatrixXd K = -G.ldlt().solve(Sbar.transpose() + B.transpose() * P * A);
    if (spectral_radius(A + B * K) >= 1.0) {
        throw NoConvergence("Riccati iteration converged to a non-stabilizing solution");
    }
    return {P, K};
}

namespace {

TerminalIngredients make_common(const PlantModel& plant, const TokenBucketSpec& spec,
                                Variant variant) {
    plant.validate();
    spec.validate();
    const int M = base_period(spec);
    const LiftedSystem lifted = build_lifted(plant, M);
    auto [Px, Kx] = solve_are_cross(lifted);

    TerminalIngredients ing;
    ing.variant = variant;
    ing.M = M;
    ing.P_x = Px;
    ing.K_x = Kx;
    const int n = plant.n();
    const int m = plant.m();
    ing.K = Eigen::MatrixXd::Zero(m, n + m);
    ing.K.leftCols(n) = Kx;
    Eigen::MatrixXd P0 = Eigen::MatrixXd::Zero(n + m, n + m);
    P0.topLeftCorner(n, n) = Px;
    ing.P = {P0};
    ing.bucket_floor = {spec.c - spec.g};
    return ing;
}

}  // namespace

TerminalIngredients variant1_ingredients(const PlantModel& plant, const TokenBucketSpec& spec) {
    TerminalIngredients ing = make_common(plant, spec, Variant::V1);
    ing.alpha = compute_alpha(ing, plant);
    return ing;
}

TerminalIngredients variant2_ingredients(const PlantModel& plant, const TokenBucketSpec& spec) {
    TerminalIngredients ing = make_common(plant, spec, Variant::V2);
    const int M = ing.M;
    const Eigen::MatrixXd A0 = hold_map(plant);
    const Eigen::MatrixXd QR = block_diag(plant.Q, plant.R);
    ing.P.resize(static_cast<size_t>(M));
    ing.bucket_floor.resize(static_cast<size_t>(M));
    // Backward recursion around the cycle: P_j is the cost of holding until
    // the next transmission phase plus the tail from there.
    for (int j = M - 1; j >= 1; --j) {
        const Eigen::MatrixXd& Pnext = ing.P[static_cast<size_t>((j + 1) % M)];
        Eigen::MatrixXd Pj = A0.transpose() * Pnext * A0 + QR;
        ing.P[static_cast<size_t>(j)] = 0.5 * (Pj + Pj.transpose().eval());
        ing.bucket_floor[static_cast<size_t>(j)] = (j - 1) * spec.g;
    }
    ing.alpha = compute_alpha(ing, plant);
    return ing;
}

CostDecreaseReport verify_cost_decrease(const TerminalIngredients& ing, const PlantModel& plant,
                                        const TokenBucketSpec& spec, double tol) {
    const int n = plant.n();
    const int m = plant.m();
    const Eigen::MatrixXd A0 = hold_map(plant);
    const Eigen::MatrixXd A1c = ing.closed_transmit(plant);
    const Eigen::MatrixXd Q0 = block_diag(plant.Q, Eigen::MatrixXd::Zero(m, m));
    const Eigen::MatrixXd QR = block_diag(plant.Q, plant.R);
    const Eigen::MatrixXd KRK = ing.K.transpose() * plant.R * ing.K;

    CostDecreaseReport report;
    auto add = [&](const Eigen::MatrixXd& lhs) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (lhs + lhs.transpose()));
        report.max_eigenvalues.push_back(es.eigenvalues().maxCoeff());
    };

    const int M = ing.M;
    if (ing.variant == Variant::V1) {
        // Whole-cycle decrease: transmit once, then hold M-1 steps.  The
        // end-of-cycle weight must drop by at least the cost accumulated
        // along the way:
        //   (A0^{M-1} A1c)' P0 (A0^{M-1} A1c) - P0
        //     + diag(Q,0) + K'RK                       (transmit step)
        //     + sum_{j=1}^{M-1} (A0^{j-1} A1c)' diag(Q,R) (A0^{j-1} A1c)
        Eigen::MatrixXd chain = A1c;  // A0^{j-1} * A1c as j advances
        Eigen::MatrixXd lhs = Q0 + KRK - ing.P[0];
        for (int j = 1; j < M; ++j) {
            lhs += chain.transpose() * QR * chain;
            chain = A0 * chain;
        }
        lhs += chain.transpose() * ing.P[0] * chain;  // chain = A0^{M-1} A1c
        add(lhs);
    } else {
        // Per-phase decrease: transmit step into phase 1, then one hold
        // inequality per remaining phase.
        add(A1c.transpose() * ing.P[static_cast<size_t>(1 % M)] * A1c - ing.P[0] + Q0 + KRK);
        for (int j = 1; j < M; ++j) {
            const Eigen::MatrixXd& Pnext = ing.P[static_cast<size_t>((j + 1) % M)];
            add(A0.transpose() * Pnext * A0 - ing.P[static_cast<size_t>(j)] + QR);
        }
    }
    report.pass = true;
    for (double ev : report.max_eigenvalues) {
        if (!(ev <= tol)) report.pass = false;
    }
    (void)spec;
    return report;
}

bool terminal_membership(const OverallState& xi, int phase, const TerminalIngredients& ing,
                         const PlantModel& plant, const TokenBucketSpec& spec) {
    const int j = (ing.variant == Variant::V1) ? 0 : phase;
    if (j < 0 || j >= static_cast<int>(ing.bucket_floor.size())) {
        throw ValidationError("terminal_membership: phase out of range");
    }
    if (xi.beta < ing.bucket_floor[static_cast<size_t>(j)] || xi.beta > spec.b) return false;
    if (ing.alpha) {
        Eigen::VectorXd z(plant.n() + plant.m());
        z << xi.x, xi.u;
        if (z.dot(ing.shape(j) * z) > (*ing.alpha)[static_cast<size_t>(j)]) return false;
    }
    return true;
}

}  // namespace retc
