#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pnp {

/// Dimension or shape disagreement between an operator and its argument.
class ShapeError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid parameters or configuration (bad gamma, empty seed list, ...).
class ValidationError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// An inner iterative solver ran out of iterations before reaching its
/// tolerance. Carries the last iterate and the achieved gap/residual so the
/// caller can decide whether to accept it.
class NonConvergenceError : public std::runtime_error
{
public:
    NonConvergenceError(const std::string& what, std::vector<double> last_iterate, double gap)
        : std::runtime_error(what), last_iterate_(std::move(last_iterate)), gap_(gap)
    {
    }

    const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }
    double gap() const noexcept { return gap_; }

private:
    std::vector<double> last_iterate_;
    double gap_;
};

class ScheduleExhaustedError : public std::out_of_range
{
public:
    using std::out_of_range::out_of_range;
};

/// E.g. a gradient-based baseline paired with a nonsmooth fidelity.
class UnsupportedCombinationError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// A diagnostic whose value is undefined at the given input (zero norm).
class UndefinedMetricError : public std::domain_error
{
public:
    using std::domain_error::domain_error;
};

class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

} // namespace pnp
