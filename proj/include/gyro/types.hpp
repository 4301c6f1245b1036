#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gyro {

// Embeddings are stored one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using VecRef = Eigen::Ref<const Vector>;

using Label = std::int64_t;

// Raised when an input violates a mathematical precondition (point outside
// the ball, zero-norm vector, c = 0 on a hyperbolic-only path).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Raised for malformed arguments: mismatched shapes, bad sizes, bad configs.
class InvalidArgument : public std::invalid_argument {
public:
    InvalidArgument(const std::string& field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(field) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Raised when a computation produces non-finite values at run time.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gyro
