#pragma once

#include <stdexcept>
#include <string>

namespace channel_stab {

/// Precondition violated by the caller (bad grid size, k = 0 where k != 0 is required, CFL, ...).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A factorization or eigensolver failed where the math says it cannot.
class InternalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shifted operator numerically singular; carries the measured smallest singular value.
class ConditioningError : public std::runtime_error {
public:
    ConditioningError(const std::string& what, double sigma_min)
        : std::runtime_error(what), sigma_min_(sigma_min) {}
    double sigma_min() const noexcept { return sigma_min_; }

private:
    double sigma_min_;
};

/// Non-finite state produced by a time integrator.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, long step, double time)
        : std::runtime_error(what), step_(step), time_(time) {}
    long step() const noexcept { return step_; }
    double time() const noexcept { return time_; }

private:
    long step_;
    double time_;
};

/// Unsupported request (e.g. a non-quadratic norm passed to a Gram-matrix routine).
class Unsupported : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed or missing input data (snapshot files, checkpoints, CSV inputs).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Refusal to overwrite an existing output without --force.
class ExistsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace channel_stab
