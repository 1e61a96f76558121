#pragma once

#include <stdexcept>
#include <string>

namespace spdo {

// Argument outside an operation's mathematical domain (chart radius >= 1,
// point outside the open hemisphere, level out of range, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Tensor / weight / mesh-level shapes that do not line up.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed on-disk data: bad magic, unsupported version, truncation.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Failure to open, read, write or rename a file.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical breakdown (rank-deficient stencil, NaN loss, non-finite activations).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace spdo
