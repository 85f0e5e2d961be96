#pragma once

#include <stdexcept>
#include <string>

namespace sqz {

/// Error categories double as CLI exit codes.
enum class ErrorCategory : int {
    validation = 2,
    numerical = 3,
    infeasible = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

/// A value violates a physical or structural invariant.
class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error(ErrorCategory::validation, what) {}
};

/// Scenario file could not be parsed.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error(ErrorCategory::validation, what) {}
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorCategory::numerical, what) {}
};

/// Transfer function denominator vanishes at the evaluation point.
class SingularityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Loop is unstable, so closed-loop quantities are undefined.
class InstabilityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Measured data are inconsistent with the claimed model (e.g. below the loss floor),
/// or no candidate satisfies the constraints.
class InfeasibleError : public Error {
public:
    explicit InfeasibleError(const std::string& what) : Error(ErrorCategory::infeasible, what) {}
};

inline const char* category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::validation: return "validation";
        case ErrorCategory::numerical: return "numerical";
        case ErrorCategory::infeasible: return "infeasible";
    }
    return "unknown";
}

}  // namespace sqz
