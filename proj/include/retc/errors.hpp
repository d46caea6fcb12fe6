#pragma once

#include <stdexcept>
#include <string>

namespace retc {

// Exit-code families used by the CLI: validation problems (2), infeasible
// optimal control problems (3), and numerical failures (4).  Library code
// throws; only the CLI maps exceptions to exit codes.

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : ValidationError {
    using ValidationError::ValidationError;
};

// A transmission was requested with too few tokens in the bucket.
struct InfeasibleTransmission : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The OCP admits no bucket-feasible schedule with a feasible trajectory.
struct OcpInfeasible : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotControllable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SingularHessian : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotConverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace retc
