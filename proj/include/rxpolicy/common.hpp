#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace rxp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Base class for all library errors. Subclasses map onto the C API /
// CLI exit codes: DataError -> 3, ConvergenceError -> 4, UsageError -> 2.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input data: bad CSV cells, missing columns, empty datasets,
// unknown treatment labels, model-file corruption.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what) {}
};

// Invalid argument values or configuration.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(what) {}
};

// File-system failures.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

// Solver failed to reach the requested tolerance. Carries the best
// iterate and a gap estimate so callers can decide to accept or abort.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, Vec best, double gap)
        : Error(what), best_iterate(std::move(best)), gap_estimate(gap) {}

    Vec best_iterate;
    double gap_estimate;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw UsageError(msg);
}

} // namespace rxp
