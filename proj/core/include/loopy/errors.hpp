#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace loopy {

// Invalid argument or out-of-range parameter.
class DomainError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Borrowing would push pool utilization above 1.
class LiquidityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Leverage, collateralization or feasibility constraint violated.
class ConstraintError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsolventPositionError : public ConstraintError {
public:
    using ConstraintError::ConstraintError;
};

class UnsupportedModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input file. The message carries file and line context.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Well-formed input that violates dataset invariants; lists every offending record.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<std::string> issues);

    const std::vector<std::string>& issues() const noexcept { return issues_; }

private:
    std::vector<std::string> issues_;
};

}  // namespace loopy
