#include "retc/presets.hpp"

#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "retc/errors.hpp"

namespace retc {

void discretize_zoh(const Eigen::MatrixXd& Ac, const Eigen::MatrixXd& Bc, double Ts,
                    Eigen::MatrixXd& Ad, Eigen::MatrixXd& Bd) {
    const int n = static_cast<int>(Ac.rows());
    const int m = static_cast<int>(Bc.cols());
    if (Ac.cols() != n || Bc.rows() != n) {
        throw ValidationError("discretize_zoh: Ac must be square and Bc conformable");
    }
    if (!(Ts > 0.0)) throw ValidationError("discretize_zoh: sample time must be positive");
    // exp([[Ac, Bc], [0, 0]] * Ts) = [[Ad, Bd], [0, I]]
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = Ac;
    aug.topRightCorner(n, m) = Bc;
    const Eigen::MatrixXd E = (aug * Ts).exp();
    Ad = E.topLeftCorner(n, n);
    Bd = E.topRightCorner(n, m);
}

namespace {

// Two carts of unit mass coupled by a spring (stiffness 2*pi^2), force on the
// first cart, sampled at 0.1 s.
Preset two_mass_spring_base() {
    const double ks = 2.0 * M_PI * M_PI;
    Eigen::MatrixXd Ac(4, 4);
    Ac << 0, 0, 1, 0,
          0, 0, 0, 1,
          -ks, ks, 0, 0,
          ks, -ks, 0, 0;
    Eigen::MatrixXd Bc(4, 1);
    Bc << 0, 0, 1, 0;

    Preset p;
    p.name = "two_mass_spring";
    discretize_zoh(Ac, Bc, 0.1, p.plant.A, p.plant.B);
    p.plant.Q = 10.0 * Eigen::MatrixXd::Identity(4, 4);
    p.plant.R = Eigen::MatrixXd::Identity(1, 1);
    p.spec = TokenBucketSpec{1, 6, 22};
    p.x0 = Eigen::VectorXd::Zero(4);
    p.x0 << 1, 0, 1, 0;
    p.u0 = Eigen::VectorXd::Zero(1);
    p.beta0 = 5;
    return p;
}

// Open-loop-unstable batch reactor (two inputs), sampled at 0.1 s.
Preset batch_reactor_base() {
    Eigen::MatrixXd Ac(4, 4);
    Ac << 1.38, -0.2077, 6.715, -5.676,
          -0.5814, -4.29, 0, 0.675,
          1.067, 4.273, -6.654, 5.893,
          0.048, 4.273, 1.343, -2.104;
    Eigen::MatrixXd Bc(4, 2);
    Bc << 0, 0,
          5.679, 0,
          1.136, -3.146,
          1.136, 0;

    Preset p;
    p.name = "batch_reactor";
    discretize_zoh(Ac, Bc, 0.1, p.plant.A, p.plant.B);
    p.plant.Q = 10.0 * Eigen::MatrixXd::Identity(4, 4);
    p.plant.R = Eigen::MatrixXd::Identity(2, 2);
    p.spec = TokenBucketSpec{3, 8, 22};
    p.x0 = Eigen::VectorXd::Zero(4);
    p.x0 << 1, 0, 1, 0;
    p.u0 = Eigen::VectorXd::Zero(2);
    p.beta0 = 6;
    return p;
}

}  // namespace

Preset make_preset(const std::string& name) {
    if (name == "two_mass_spring") return two_mass_spring_base();
    if (name == "two_mass_spring_constrained") {
        Preset p = two_mass_spring_base();
        p.name = name;
        Box state_box;
        state_box.lo = Eigen::VectorXd(4);
        state_box.lo << -2, -2, -5, -5;
        state_box.hi = Eigen::VectorXd(4);
        state_box.hi << 2, 2, 5, 5;
        Box input_box;
        input_box.lo = Eigen::VectorXd(1);
        input_box.lo << -12;
        input_box.hi = Eigen::VectorXd(1);
        input_box.hi << 12;
        p.plant.state_box = state_box;
        p.plant.input_box = input_box;
        return p;
    }
    if (name == "batch_reactor") return batch_reactor_base();

    std::ostringstream msg;
    msg << "unknown preset '" << name << "'; available:";
    for (const auto& known : preset_names()) msg << " " << known;
    throw ValidationError(msg.str());
}

std::vector<std::string> preset_names() {
    return {"two_mass_spring", "two_mass_spring_constrained", "batch_reactor"};
}

}  // namespace retc
