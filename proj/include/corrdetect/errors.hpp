#pragma once

#include <stdexcept>
#include <string>

namespace corrdetect {

// Caller handed in arguments that break an operation's preconditions.
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain (negative threshold, etc).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// gamma = 1 routed to a path that needs an invertible covariance.
struct UnsupportedRegime : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SingularCovariance : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Requested computation exceeds a documented budget (enumeration size,
// calibration tail count).
struct BudgetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace corrdetect
