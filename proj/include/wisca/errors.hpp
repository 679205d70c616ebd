// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace wisca {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// dimension mismatch between operands
struct ShapeError : Error {
    using Error::Error;
};

// invalid value domain (empty matrix, sigma <= 0, ...)
struct DomainError : Error {
    using Error::Error;
};

// malformed container / JSON / numeric text
struct ParseError : Error {
    using Error::Error;
};

// scale plan does not fit the weights it is applied to
struct PlanError : Error {
    using Error::Error;
};

// layout descriptor did not resolve against a checkpoint
struct ResolveError : Error {
    using Error::Error;
};

// outputs have different shapes: architectural inconsistency,
// reported separately from a numeric tolerance failure
struct StructuralError : Error {
    using Error::Error;
};

// non-finite value produced where a finite one is required
struct NumericError : Error {
    using Error::Error;
};

// caller violated an operation precondition (e.g. unequal base losses)
struct PreconditionError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

} // namespace wisca
