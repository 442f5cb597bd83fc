#pragma once

#include <stdexcept>
#include <string>

namespace triage {

// Invalid user-supplied configuration (bad simplex, zero patients, ...).
// The CLI maps this family to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file; message names the offending row/column where known.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension mismatch between tensors, actions and states.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// A precondition the caller is responsible for was violated.
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Non-finite values, divergence, degenerate denominators.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Requested configuration exceeds what a component can represent
// (e.g. enumerated-action Q head beyond its bed limit).
struct CapabilityError : std::runtime_error {
    explicit CapabilityError(const std::string& msg) : std::runtime_error(msg) {}
};

// Metric undefined on the given inputs (empty dataset, <2 group rates, ...).
struct EvalError : std::runtime_error {
    explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace triage
