#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace imuda {

// Base for all library errors so callers can catch one type.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape or size mismatch between operands.
struct DimensionError : Error {
    using Error::Error;
};

// Bad argument value (invalid config field, out-of-range parameter).
struct ValueError : Error {
    using Error::Error;
};

// Cholesky (or similar) factorization failed; `pivot` is the failing index.
struct DecompositionError : Error {
    std::size_t pivot;
    DecompositionError(const std::string& msg, std::size_t pivot_index)
        : Error(msg), pivot(pivot_index) {}
};

// Operation called out of order (e.g. backward without a forward cache).
struct StateError : Error {
    using Error::Error;
};

// Statistical estimation cannot proceed (empty class, non-finite input).
struct EstimationError : Error {
    using Error::Error;
};

// Pseudo-dataset rejection sampling accepted too few draws.
struct ConfidenceError : Error {
    double acceptance_rate;
    std::vector<std::size_t> per_class_accepted;
    ConfidenceError(const std::string& msg, double rate,
                    std::vector<std::size_t> per_class)
        : Error(msg), acceptance_rate(rate),
          per_class_accepted(std::move(per_class)) {}
};

// Malformed input file; `byte_offset` points at the offending byte.
struct ParseError : Error {
    std::size_t byte_offset;
    ParseError(const std::string& msg, std::size_t offset)
        : Error(msg), byte_offset(offset) {}
};

// Numeric failure during optimization (non-finite loss or gradient).
struct NumericError : Error {
    using Error::Error;
};

}  // namespace imuda
