#include "retc/sim_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "retc/errors.hpp"

namespace retc {

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double sup_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    return std::max(x.lpNorm<Eigen::Infinity>(), u.lpNorm<Eigen::Infinity>());
}

}  // namespace

void SimConfig::validate() const {
    std::ostringstream problems;
    auto complain = [&problems](const std::string& msg) { problems << "  - " << msg << "\n"; };

    try {
        plant.validate();
    } catch (const ValidationError& e) {
        complain(std::string("plant: ") + e.what());
    }
    try {
        spec.validate();
    } catch (const ValidationError& e) {
        complain(std::string("token bucket: ") + e.what());
    }
    if (x0.size() != plant.n()) complain("x0 dimension does not match the plant state");
    if (u0.size() != plant.m()) complain("u0 dimension does not match the plant input");
    if (beta0 < 0 || beta0 > spec.b) complain("beta0 must lie in [0, b]");
    if (horizon_steps < 1) complain("horizon_steps must be >= 1");
    if (!(convergence_tol > 0.0)) complain("convergence_tol must be positive");

    if (const auto* rc = std::get_if<RolloutController>(&controller)) {
        try {
            rc->params.validate();
        } catch (const ValidationError& e) {
            complain(std::string("rollout controller: ") + e.what());
        }
    } else if (const auto* tc = std::get_if<TtcController>(&controller)) {
        if (tc->M < 1) complain("periodic controller: period must be >= 1");
        if (tc->K_x.rows() != plant.m() || tc->K_x.cols() != plant.n())
            complain("periodic controller: gain must be m x n");
    } else if (const auto* ec = std::get_if<ClassicalEtcController>(&controller)) {
        if (ec->sigma_trigger < 0.0 || ec->sigma_trigger > 1.0)
            complain("event-triggered controller: trigger level must lie in [0, 1]");
        if (ec->K_x.rows() != plant.m() || ec->K_x.cols() != plant.n())
            complain("event-triggered controller: gain must be m x n");
    }

    const std::string text = problems.str();
    if (!text.empty()) throw ValidationError("invalid simulation config:\n" + text);
}

SimTrace run_closed_loop(const SimConfig& cfg) {
    cfg.validate();
    SimTrace trace;
    trace.steps.reserve(static_cast<size_t>(cfg.horizon_steps));

    const int m = cfg.plant.m();
    double cumulative = 0.0;
    int transmissions = 0;

    // The event-triggered baseline deliberately ignores the bucket, so its
    // level is tracked as plain bookkeeping that may go negative; the other
    // controllers evolve the real (enforced) bucket state.
    const bool enforce_bucket = !std::holds_alternative<ClassicalEtcController>(cfg.controller);

    OverallState xi{cfg.x0, cfg.u0, cfg.beta0};
    int beta_book = cfg.beta0;
    int min_beta = cfg.beta0;
    EtcMemory etc_memory;

    for (int k = 0; k < cfg.horizon_steps; ++k) {
        StepRecord rec;
        rec.k = k;
        rec.x = xi.x;
        rec.u = xi.u;
        rec.beta = enforce_bucket ? xi.beta : beta_book;

        const auto t0 = std::chrono::steady_clock::now();
        OverallInput pi;
        if (const auto* rc = std::get_if<RolloutController>(&cfg.controller)) {
            RolloutStepResult step = rollout_step(xi, k, rc->params, cfg.plant, cfg.spec);
            pi = step.input;
            rec.ocp_value = step.solution.value;
            rec.schedules_examined = step.solution.n_schedules_examined;
        } else if (const auto* tc = std::get_if<TtcController>(&cfg.controller)) {
            pi = ttc_step(xi, k, tc->K_x, tc->M, cfg.spec);
        } else {
            const auto& ec = std::get<ClassicalEtcController>(cfg.controller);
            pi = etc_step(xi, k, ec.K_x, ec.sigma_trigger, etc_memory);
        }
        rec.solve_seconds = seconds_since(t0);

        rec.gamma = pi.gamma;
        rec.v = pi.gamma == 1 ? pi.v : Eigen::VectorXd::Zero(m);
        rec.stage_cost = stage_cost(xi, pi, cfg.plant);
        cumulative += rec.stage_cost;
        rec.cumulative_cost = cumulative;
        if (pi.gamma == 1) ++transmissions;

        if (enforce_bucket) {
            xi = overall_step(xi, pi, cfg.plant, cfg.spec);
            min_beta = std::min(min_beta, xi.beta);
        } else {
            const Eigen::VectorXd applied = pi.gamma == 1 ? pi.v : xi.u;
            xi.x = cfg.plant.A * xi.x + cfg.plant.B * applied;
            xi.u = applied;
            beta_book = std::min(beta_book + cfg.spec.g - pi.gamma * cfg.spec.c, cfg.spec.b);
            min_beta = std::min(min_beta, beta_book);
        }

        trace.steps.push_back(std::move(rec));
    }

    trace.final_x = xi.x;
    trace.final_u = xi.u;
    trace.final_beta = enforce_bucket ? xi.beta : beta_book;
    trace.total_cost = cumulative;
    trace.transmissions = transmissions;
    trace.final_sup_norm = sup_norm(xi.x, xi.u);
    trace.converged = trace.final_sup_norm < cfg.convergence_tol;
    trace.min_beta = min_beta;
    return trace;
}

double infinite_cost_estimate(const SimTrace& trace) {
    if (!trace.converged) {
        std::ostringstream msg;
        msg << "trajectory has not converged: sup-norm of (x, u) after the last step is "
            << trace.final_sup_norm;
        throw NotConverged(msg.str());
    }
    return trace.total_cost;
}

EtcSearchResult etc_sigma_search(const SimConfig& cfg_template, int grid_size) {
    if (grid_size < 2) throw ValidationError("trigger-level search needs a grid of at least 2");
    if (!std::holds_alternative<ClassicalEtcController>(cfg_template.controller)) {
        throw ValidationError("trigger-level search requires the event-triggered baseline");
    }

    EtcSearchResult result;
    result.grid.reserve(static_cast<size_t>(grid_size));
    const double rate = cfg_template.spec.sustainable_rate();

    double best_cost = std::numeric_limits<double>::infinity();
    double feasible_cost = std::numeric_limits<double>::infinity();

    for (int i = 0; i < grid_size; ++i) {
        const double sigma = static_cast<double>(i) / (grid_size - 1);
        SimConfig cfg = cfg_template;
        std::get<ClassicalEtcController>(cfg.controller).sigma_trigger = sigma;
        const SimTrace trace = run_closed_loop(cfg);

        EtcGridPoint pt;
        pt.sigma = sigma;
        pt.total_cost = trace.total_cost;
        pt.transmissions = trace.transmissions;
        pt.bandwidth = static_cast<double>(trace.transmissions) / cfg.horizon_steps;
        pt.converged = trace.converged;
        pt.min_beta = trace.min_beta;
        result.grid.push_back(pt);

        if (pt.total_cost < best_cost) {
            best_cost = pt.total_cost;
            result.best_index = i;
        }
        if (pt.bandwidth <= rate && pt.total_cost < feasible_cost) {
            feasible_cost = pt.total_cost;
            result.feasible_index = i;
        }
    }

    SimConfig best_cfg = cfg_template;
    std::get<ClassicalEtcController>(best_cfg.controller).sigma_trigger =
        result.grid[static_cast<size_t>(result.best_index)].sigma;
    result.best_trace = run_closed_loop(best_cfg);
    return result;
}

bool bucket_convergence_check(const SimTrace& trace, int lower) {
    const size_t n = trace.steps.size();
    const size_t start = n - n / 4;
    for (size_t i = start; i < n; ++i) {
        if (trace.steps[i].beta < lower) return false;
    }
    return trace.final_beta >= lower;
}

double median_initial_solve_seconds(const OverallState& xi0, const OcpParams& params,
                                    const PlantModel& plant, const TokenBucketSpec& spec,
                                    int reps) {
    if (reps < 1) throw ValidationError("timing needs at least one repetition");
    std::vector<double> samples;
    samples.reserve(static_cast<size_t>(reps));
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)solve_ocp(xi0, 0, params, plant, spec);
        samples.push_back(seconds_since(t0));
    }
    std::sort(samples.begin(), samples.end());
    const size_t mid = samples.size() / 2;
    if (samples.size() % 2 == 1) return samples[mid];
    return 0.5 * (samples[mid - 1] + samples[mid]);
}

}  // namespace retc
