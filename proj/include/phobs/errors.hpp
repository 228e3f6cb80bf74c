#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace phobs {

// Base for every error raised by the library. The CLI maps the subclasses
// onto its exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Inconsistent matrix shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Structural invariant violated beyond what symmetrization may repair, or a
// precondition on design bounds that does not hold.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Evaluation outside a model's domain (e.g. MEMS gap closed, q >= qmax).
class DomainError : public Error {
public:
    using Error::Error;
};

// An LMI problem has no interior solution. Carries the solver's per-block
// diagnostics so callers can report which constraint could not be met.
class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& what, std::string diagnostics)
        : Error(what), diagnostics_(std::move(diagnostics)) {}

    [[nodiscard]] const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string diagnostics_;
};

// A numerically ill-posed step (near-singular matrix, failed certification of
// a result that the solver claimed feasible).
class NumericalError : public Error {
public:
    using Error::Error;
};

// Time integration aborted (Newton non-convergence, domain violation).
class SimulationError : public Error {
public:
    SimulationError(const std::string& what, long step) : Error(what), step_(step) {}

    [[nodiscard]] long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace phobs
