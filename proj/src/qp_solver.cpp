#include "retc/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace retc {

namespace {

double objective(const Eigen::MatrixXd& H, const Eigen::VectorXd& f, const Eigen::VectorXd& z) {
    return 0.5 * z.dot(H * z) + f.dot(z);
}

// Equality-constrained step: minimize 1/2 z'Hz + f'z subject to the working
// set rows held as equalities.  Returns (z, multipliers).  The stationarity
// block is normalized by ||H|| before factorization: the ellipsoid bisection
// drives the Hessian many orders of magnitude above the constraint rows, and
// an unscaled KKT solve would round the equalities away entirely.  The
// returned multipliers carry the same 1/||H|| factor, which preserves their
// signs (all the caller uses).
std::pair<Eigen::VectorXd, Eigen::VectorXd> equality_step(const Eigen::MatrixXd& Hreg,
                                                          const Eigen::VectorXd& f,
                                                          const Eigen::MatrixXd& G,
                                                          const Eigen::VectorXd& h,
                                                          const std::vector<int>& working) {
    const int d = static_cast<int>(Hreg.rows());
    const int w = static_cast<int>(working.size());
    const double s = std::max(1.0, Hreg.cwiseAbs().maxCoeff());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(d + w, d + w);
    kkt.topLeftCorner(d, d) = Hreg / s;
    Eigen::VectorXd rhs(d + w);
    rhs.head(d) = -f / s;
    for (int i = 0; i < w; ++i) {
        kkt.block(d + i, 0, 1, d) = G.row(working[static_cast<size_t>(i)]);
        kkt.block(0, d + i, d, 1) = G.row(working[static_cast<size_t>(i)]).transpose();
        rhs(d + i) = h(working[static_cast<size_t>(i)]);
    }
    const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    return {sol.head(d), sol.tail(w)};
}

// Active-set solve with linear rows only; Hstep drives the iteration while
// Hvalue is used for the reported objective (they differ when an ellipsoid
// multiplier is folded into the Hessian).
QpSolution active_set_linear(const Eigen::MatrixXd& Hstep, const Eigen::MatrixXd& Hvalue,
                             const Eigen::VectorXd& f, const Eigen::MatrixXd& G,
                             const Eigen::VectorXd& h, const Eigen::VectorXd& z0) {
    const int d = static_cast<int>(Hstep.rows());
    const int p = static_cast<int>(G.rows());
    const Eigen::MatrixXd Hreg =
        Hstep + kHessianEps * Eigen::MatrixXd::Identity(d, d);

    QpSolution sol;
    sol.z = z0;
    std::vector<int> working;
    sol.objective_history.push_back(objective(Hvalue, f, sol.z));

    const int budget = 50 * (d + p);
    for (int iter = 0; iter < budget; ++iter) {
        auto [zn, lambda] = equality_step(Hreg, f, G, h, working);
        const double move = (zn - sol.z).cwiseAbs().maxCoeff();
        if (move <= 1e-11 * std::max(1.0, sol.z.cwiseAbs().maxCoeff())) {
            // At the working-set minimum; release the most binding wrong-sign
            // multiplier or stop.
            int drop = -1;
            double most_negative = -1e-9;
            for (int i = 0; i < static_cast<int>(working.size()); ++i) {
                if (lambda(i) < most_negative) {
                    most_negative = lambda(i);
                    drop = i;
                }
            }
            if (drop < 0) {
                sol.status = QpStatus::Optimal;
                sol.active_set = working;
                std::sort(sol.active_set.begin(), sol.active_set.end());
                sol.value = objective(Hvalue, f, sol.z);
                return sol;
            }
            working.erase(working.begin() + drop);
            continue;
        }
        // Step toward the working-set minimum, stopping at the first
        // blocking row (lowest index wins ties).
        const Eigen::VectorXd delta = zn - sol.z;
        double t = 1.0;
        int blocker = -1;
        for (int i = 0; i < p; ++i) {
            if (std::find(working.begin(), working.end(), i) != working.end()) continue;
            const double dir = G.row(i).dot(delta);
            if (dir <= 1e-14) continue;
            const double ti = (h(i) - G.row(i).dot(sol.z)) / dir;
            if (ti < t) {
                t = std::max(ti, 0.0);
                blocker = i;
            }
        }
        sol.z += t * delta;
        sol.objective_history.push_back(objective(Hvalue, f, sol.z));
        if (blocker >= 0) working.push_back(blocker);
    }
    sol.status = QpStatus::IterLimit;
    sol.active_set = working;
    std::sort(sol.active_set.begin(), sol.active_set.end());
    sol.value = objective(Hvalue, f, sol.z);
    return sol;
}

}  // namespace

QpSolution solve_unconstrained(const Eigen::MatrixXd& H, const Eigen::VectorXd& f) {
    const int d = static_cast<int>(H.rows());
    QpSolution sol;
    if (d == 0) {
        sol.z = Eigen::VectorXd(0);
        sol.value = 0.0;
        return sol;
    }
    const Eigen::MatrixXd Hreg = H + kHessianEps * Eigen::MatrixXd::Identity(d, d);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(Hreg);
    if (ldlt.info() != Eigen::Success) {
        throw SingularHessian("solve_unconstrained: LDLT factorization failed");
    }
    sol.z = ldlt.solve(-f);
    if (!sol.z.allFinite()) {
        throw SingularHessian("solve_unconstrained: non-finite solution");
    }
    sol.value = objective(H, f, sol.z);
    sol.objective_history.push_back(sol.value);
    return sol;
}

std::optional<Eigen::VectorXd> find_feasible_point(const DenseQP& qp,
                                                   const Eigen::VectorXd& z_init) {
    const int d = qp.dim();
    const int p = qp.rows();
    Eigen::VectorXd z = z_init;
    auto hinge2 = [&](const Eigen::VectorXd& zz) {
        double s = 0.0;
        for (int i = 0; i < p; ++i) {
            const double v = qp.G.row(i).dot(zz) - qp.h(i);
            if (v > 0) s += v * v;
        }
        return 0.5 * s;
    };
    const int budget = 100 * (d + 10);
    for (int iter = 0; iter < budget; ++iter) {
        std::vector<int> violated;
        for (int i = 0; i < p; ++i) {
            if (qp.G.row(i).dot(z) - qp.h(i) > 1e-12) violated.push_back(i);
        }
        if (violated.empty()) return z;
        const int v = static_cast<int>(violated.size());
        Eigen::MatrixXd M(v, d);
        Eigen::VectorXd resid(v);
        for (int i = 0; i < v; ++i) {
            M.row(i) = qp.G.row(violated[static_cast<size_t>(i)]);
            resid(i) = M.row(i).dot(z) - qp.h(violated[static_cast<size_t>(i)]);
        }
        const Eigen::MatrixXd MtM =
            M.transpose() * M + 1e-10 * Eigen::MatrixXd::Identity(d, d);
        const Eigen::VectorXd delta = MtM.ldlt().solve(-M.transpose() * resid);
        const double before = hinge2(z);
        double t = 1.0;
        while (t > 1e-12 && hinge2(z + t * delta) >= before) t *= 0.5;
        if (t <= 1e-12) return std::nullopt;  // stalled: treat as infeasible
        z += t * delta;
    }
    return std::nullopt;
}

QpSolution solve_active_set(const DenseQP& qp, const Eigen::VectorXd& z0) {
    const int d = qp.dim();
    if (qp.ellipsoids.size() > 1) {
        throw ValidationError("solve_active_set: at most one ellipsoidal constraint is supported");
    }
    if (d == 0) {
        QpSolution sol;
        sol.z = Eigen::VectorXd(0);
        sol.value = 0.0;
        return sol;
    }

    QpSolution base = active_set_linear(qp.H, qp.H, qp.f, qp.G, qp.h, z0);
    if (qp.ellipsoids.empty() || base.status != QpStatus::Optimal) return base;

    const Ellipsoid& ell = qp.ellipsoids[0];
    auto residual = [&](const QpSolution& s) { return ell.eval(s.z); };
    const double scale = std::max(1.0, std::abs(ell.t));
    const double fit_tol = 1e-9 * scale;
    if (residual(base) <= fit_tol) return base;

    // The ellipsoid is active: bisect its multiplier.  The inner solves
    // minimize the penalized objective 1/2 z'(H + 2*lambda*S)z +
    // (f + lambda*q)'z; the constraint value at the inner minimizer is
    // nonincreasing in lambda over the fixed linear feasible set.
    auto inner = [&](double lambda) {
        return active_set_linear(qp.H + 2.0 * lambda * ell.S, qp.H,
                                 (qp.f + lambda * ell.q).eval(), qp.G, qp.h, z0);
    };
    double lo = 0.0;
    double hi = 1e-6;
    QpSolution at_hi = inner(hi);
    while (at_hi.status == QpStatus::Optimal && residual(at_hi) > fit_tol) {
        lo = hi;
        hi *= 4.0;
        if (hi > 1e18) {
            QpSolution sol;
            sol.z = at_hi.z;
            sol.status = QpStatus::Infeasible;
            sol.value = std::numeric_limits<double>::infinity();
            return sol;
        }
        at_hi = inner(hi);
    }
    if (at_hi.status != QpStatus::Optimal) return at_hi;
    for (int iter = 0; iter < 150 && (hi - lo) > 1e-15 * std::max(1.0, hi); ++iter) {
        const double mid = 0.5 * (lo + hi);
        QpSolution at_mid = inner(mid);
        if (at_mid.status != QpStatus::Optimal) return at_mid;
        if (residual(at_mid) <= fit_tol) {
            hi = mid;
            at_hi = std::move(at_mid);
        } else {
            lo = mid;
        }
        if (std::abs(residual(at_hi)) <= 1e-12 * scale) break;
    }
    at_hi.value = objective(qp.H, qp.f, at_hi.z);
    at_hi.active_set.push_back(qp.rows());  // pseudo-index marking the ellipsoid
    at_hi.objective_history = {at_hi.value};
    return at_hi;
}

}  // namespace retc
