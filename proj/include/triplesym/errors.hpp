#pragma once

#include <stdexcept>
#include <string>

namespace triplesym {

/// Bad arguments: points outside the domain, violated preconditions, infeasible requests.
struct InputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Missing or inconsistent configuration (unknown family, absent derivative, bad config file).
struct ConfigurationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A family or profile falls outside the regime an analysis applies to.
struct AnalysisError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical breakdown: stiffness, overflow, failed fits.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace triplesym
