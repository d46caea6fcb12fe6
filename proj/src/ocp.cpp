#include "retc/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace retc {

void OcpParams::validate() const {
    if (N_bar < 1) throw ValidationError("OcpParams: N_bar must be positive");
    if (variant == Variant::V1 && N_bar < ingredients.M) {
        std::ostringstream msg;
        msg << "OcpParams: the cyclic-horizon variant needs N_bar >= M (N_bar=" << N_bar
            << ", M=" << ingredients.M << ")";
        throw ValidationError(msg.str());
    }
    if (sigma_bucket < 0) throw ValidationError("OcpParams: sigma_bucket must be nonnegative");
}

int horizon_at(const OcpParams& params, int k) {
    if (params.variant == Variant::V1) return params.N_bar - (k % params.ingredients.M);
    return params.N_bar;
}

std::vector<std::vector<int>> enumerate_schedules(int beta0, int N, const TokenBucketSpec& spec,
                                                  int terminal_floor) {
    std::vector<std::vector<int>> out;
    std::vector<int> prefix;
    prefix.reserve(static_cast<size_t>(N));

    auto rec = [&](auto&& self, int i, int beta) -> void {
        // Even transmitting nothing more cannot lift the bucket to the
        // floor: the whole subtree is infeasible.  (Exact because the floor
        // never exceeds the capacity b.)
        if (beta + (N - i) * spec.g < terminal_floor) return;
        if (i == N) {
            out.push_back(prefix);
            return;
        }
        prefix.push_back(0);
        self(self, i + 1, std::min(beta + spec.g, spec.b));
        prefix.back() = 1;
        if (beta + spec.g - spec.c >= 0) {
            self(self, i + 1, std::min(beta + spec.g - spec.c, spec.b));
        }
        prefix.pop_back();
    };
    rec(rec, 0, beta0);
    return out;
}

CondensedQp condense(const OverallState& xi0, const std::vector<int>& schedule, int phase,
                     const OcpParams& params, const PlantModel& plant,
                     const TokenBucketSpec& spec) {
    const int n = plant.n();
    const int m = plant.m();
    const int N = static_cast<int>(schedule.size());
    const int transmissions = static_cast<int>(std::count(schedule.begin(), schedule.end(), 1));
    const int d = transmissions * m;

    const Eigen::MatrixXd A0 = hold_map(plant);
    Eigen::MatrixXd Ahat = Eigen::MatrixXd::Zero(n + m, n + m);
    Ahat.topLeftCorner(n, n) = plant.A;
    Eigen::MatrixXd Bhat(n + m, m);
    Bhat.topRows(n) = plant.B;
    Bhat.bottomRows(m) = Eigen::MatrixXd::Identity(m, m);
    Eigen::MatrixXd QR = Eigen::MatrixXd::Zero(n + m, n + m);
    QR.topLeftCorner(n, n) = plant.Q;
    QR.bottomRightCorner(m, m) = plant.R;
    Eigen::MatrixXd Qx = Eigen::MatrixXd::Zero(n + m, n + m);  // x'Qx as a form on z
    Qx.topLeftCorner(n, n) = plant.Q;

    Eigen::VectorXd z0(n + m);
    z0 << xi0.x, xi0.u;

    CondensedQp out;
    out.qp.H = Eigen::MatrixXd::Zero(d, d);
    out.qp.f = Eigen::VectorXd::Zero(d);
    out.constant = 0.0;
    out.Phi.reserve(static_cast<size_t>(N) + 1);
    out.Gam.reserve(static_cast<size_t>(N) + 1);
    out.v_offset.assign(static_cast<size_t>(N), -1);
    out.beta_traj.assign(static_cast<size_t>(N) + 1, 0);
    out.beta_traj[0] = xi0.beta;

    Eigen::MatrixXd Phi = Eigen::MatrixXd::Identity(n + m, n + m);
    Eigen::MatrixXd Gam = Eigen::MatrixXd::Zero(n + m, d);
    int col = 0;
    auto accumulate_cost = [&](const Eigen::MatrixXd& form) {
        // stage term z_i' form z_i with z_i = Phi z0 + Gam w
        out.qp.H += 2.0 * Gam.transpose() * form * Gam;
        out.qp.f += 2.0 * Gam.transpose() * form * (Phi * z0);
        out.constant += (Phi * z0).dot(form * (Phi * z0));
    };
    for (int i = 0; i < N; ++i) {
        out.Phi.push_back(Phi);
        out.Gam.push_back(Gam);
        if (schedule[static_cast<size_t>(i)] == 0) {
            accumulate_cost(QR);
            Phi = A0 * Phi;
            Gam = A0 * Gam;
            out.beta_traj[static_cast<size_t>(i) + 1] = bucket_step(out.beta_traj[static_cast<size_t>(i)], 0, spec);
        } else {
            accumulate_cost(Qx);
            out.qp.H.block(col, col, m, m) += 2.0 * plant.R;
            out.v_offset[static_cast<size_t>(i)] = col;
            Phi = Ahat * Phi;
            Gam = Ahat * Gam;
            Gam.middleCols(col, m) += Bhat;
            out.beta_traj[static_cast<size_t>(i) + 1] = bucket_step(out.beta_traj[static_cast<size_t>(i)], 1, spec);
            col += m;
        }
    }
    out.Phi.push_back(Phi);
    out.Gam.push_back(Gam);

    // Terminal cost for the phase the terminal state lands on.
    const Eigen::MatrixXd& Pterm = params.ingredients.P.at(static_cast<size_t>(phase));
    const Eigen::MatrixXd& PhiN = out.Phi.back();
    const Eigen::MatrixXd& GamN = out.Gam.back();
    out.qp.H += 2.0 * GamN.transpose() * Pterm * GamN;
    out.qp.f += 2.0 * GamN.transpose() * Pterm * (PhiN * z0);
    out.constant += (PhiN * z0).dot(Pterm * (PhiN * z0));

    // Terminal bucket-level cost: the predicted level is fixed by the
    // schedule, so it is a per-schedule constant.
    const int beta_N = out.beta_traj.back();
    out.constant += params.sigma_bucket *
                    (static_cast<double>(spec.b) * spec.b - static_cast<double>(beta_N) * beta_N);

    const bool constrained = params.ingredients.alpha.has_value();
    if (!constrained) return out;

    // Box rows on predicted states x(1..N-1) and on each transmitted v.
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> offsets;
    if (plant.state_box) {
        for (int i = 1; i < N; ++i) {
            const Eigen::MatrixXd Gx = out.Gam[static_cast<size_t>(i)].topRows(n);
            const Eigen::VectorXd xs = (out.Phi[static_cast<size_t>(i)] * z0).head(n);
            for (int j = 0; j < n; ++j) {
                rows.push_back(Gx.row(j));
                offsets.push_back(plant.state_box->hi(j) - xs(j));
                rows.push_back(-Gx.row(j));
                offsets.push_back(xs(j) - plant.state_box->lo(j));
            }
        }
    }
    if (plant.input_box) {
        for (int i = 0; i < N; ++i) {
            const int off = out.v_offset[static_cast<size_t>(i)];
            if (off < 0) continue;
            for (int j = 0; j < m; ++j) {
                Eigen::VectorXd row = Eigen::VectorXd::Zero(d);
                row(off + j) = 1.0;
                rows.push_back(row);
                offsets.push_back(plant.input_box->hi(j));
                rows.push_back(-row);
                offsets.push_back(-plant.input_box->lo(j));
            }
        }
    }
    out.qp.G.resize(static_cast<int>(rows.size()), d);
    out.qp.h.resize(static_cast<int>(rows.size()));
    for (size_t i = 0; i < rows.size(); ++i) {
        out.qp.G.row(static_cast<int>(i)) = rows[i].transpose();
        out.qp.h(static_cast<int>(i)) = offsets[i];
    }

    // Terminal ellipsoid z_N' W z_N <= alpha expanded in w.
    const Eigen::MatrixXd W = params.ingredients.shape(phase);
    const double alpha = (*params.ingredients.alpha)[static_cast<size_t>(phase)];
    Ellipsoid ell;
    ell.S = GamN.transpose() * W * GamN;
    ell.q = 2.0 * GamN.transpose() * W * (PhiN * z0);
    ell.t = (PhiN * z0).dot(W * (PhiN * z0)) - alpha;
    out.qp.ellipsoids.push_back(std::move(ell));
    return out;
}

OcpSolution solve_ocp(const OverallState& xi0, int k, const OcpParams& params,
                      const PlantModel& plant, const TokenBucketSpec& spec) {
    params.validate();
    const int n = plant.n();
    const int m = plant.m();
    const int M = params.ingredients.M;
    const int N = horizon_at(params, k);
    if (N < 1) throw ValidationError("solve_ocp: horizon must be positive");

    const int phase = (params.variant == Variant::V1) ? 0 : ((k + params.N_bar) % M);
    const int floor = params.ingredients.bucket_floor.at(static_cast<size_t>(phase));
    const auto schedules = enumerate_schedules(xi0.beta, N, spec, floor);

    OcpSolution best;
    best.n_schedules_examined = static_cast<long>(schedules.size());
    best.value = std::numeric_limits<double>::infinity();
    int best_transmissions = 0;
    CondensedQp best_cqp;
    Eigen::VectorXd best_w;

    for (const auto& schedule : schedules) {
        CondensedQp cqp = condense(xi0, schedule, phase, params, plant, spec);

        Eigen::VectorXd w;
        double value = 0.0;
        if (cqp.qp.rows() == 0 && cqp.qp.ellipsoids.empty()) {
            QpSolution sol = solve_unconstrained(cqp.qp.H, cqp.qp.f);
            w = sol.z;
            value = sol.value + cqp.constant;
        } else {
            // Cheap rejection: if even the free minimum of the terminal
            // ellipsoid function is positive, no input reaches the terminal
            // set and the schedule is infeasible regardless of the boxes.
            if (!cqp.qp.ellipsoids.empty()) {
                const Ellipsoid& ell = cqp.qp.ellipsoids[0];
                const int d = cqp.qp.dim();
                const double tol = 1e-9 * std::max(1.0, std::abs(ell.t));
                if (d == 0) {
                    // No decision variables: the membership function is the
                    // constant t, so the schedule stands or falls on its sign.
                    if (ell.t > tol) continue;
                } else {
                    const Eigen::MatrixXd Sreg =
                        ell.S + (1e-12 * std::max(1.0, ell.S.cwiseAbs().maxCoeff())) *
                                    Eigen::MatrixXd::Identity(d, d);
                    const Eigen::VectorXd w_min = Sreg.ldlt().solve(-0.5 * ell.q);
                    if (ell.eval(w_min) > tol) continue;
                }
            }
            Eigen::VectorXd z_init = solve_unconstrained(cqp.qp.H, cqp.qp.f).z;
            auto feasible0 = find_feasible_point(cqp.qp, z_init);
            if (!feasible0) continue;  // no trajectory satisfies the boxes
            QpSolution sol = solve_active_set(cqp.qp, *feasible0);
            if (sol.status != QpStatus::Optimal) continue;
            w = sol.z;
            value = sol.value + cqp.constant;
        }

        const int transmissions = static_cast<int>(std::count(schedule.begin(), schedule.end(), 1));
        bool take = false;
        if (!best.feasible) {
            take = true;
        } else {
            // Near-equal values resolve to fewer transmissions, then to the
            // lexicographically smallest schedule.  The window scales down
            // with the value so vanishing tail costs still separate.
            const double tie = 1e-9 * std::min(1.0, std::abs(best.value));
            if (value < best.value - tie) {
                take = true;
            } else if (value <= best.value + tie) {
                if (transmissions < best_transmissions ||
                    (transmissions == best_transmissions && schedule < best.schedule)) {
                    take = true;
                }
            }
        }
        if (take) {
            best.feasible = true;
            best.value = value;
            best.schedule = schedule;
            best_transmissions = transmissions;
            best_cqp = std::move(cqp);
            best_w = std::move(w);
        }
    }

    if (!best.feasible) {
        best.value = std::numeric_limits<double>::infinity();
        return best;
    }

    // Rebuild the optimizing trajectory from the condensed solution.
    Eigen::VectorXd z0(n + m);
    z0 << xi0.x, xi0.u;
    best.pi_star.resize(best.schedule.size());
    best.xi_pred.resize(best.schedule.size() + 1);
    for (size_t i = 0; i <= best.schedule.size(); ++i) {
        const Eigen::VectorXd zi = best_cqp.Phi[i] * z0 + best_cqp.Gam[i] * best_w;
        OverallState xi;
        xi.x = zi.head(n);
        xi.u = zi.tail(m);
        xi.beta = best_cqp.beta_traj[i];
        best.xi_pred[i] = std::move(xi);
    }
    for (size_t i = 0; i < best.schedule.size(); ++i) {
        OverallInput pi;
        pi.gamma = best.schedule[i];
        const int off = best_cqp.v_offset[i];
        pi.v = (off >= 0) ? Eigen::VectorXd(best_w.segment(off, m)) : Eigen::VectorXd::Zero(m);
        best.pi_star[i] = std::move(pi);
    }
    return best;
}

}  // namespace retc
