#pragma once

#include <stdexcept>
#include <string>

namespace winconv {

// Base class for everything this library throws on purpose. The CLI maps
// subclasses to distinct exit codes, so new error kinds should subclass one
// of these rather than throwing std::runtime_error directly.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mismatched tensor shapes / ranks between operands.
struct ShapeError : Error {
    using Error::Error;
};

// A size or extent is out of the supported range (zero, overflow, budget).
struct SizeError : Error {
    using Error::Error;
};

// An axis index does not exist on the operand.
struct AxisError : Error {
    using Error::Error;
};

// A scalar argument is outside its documented domain.
struct RangeError : Error {
    using Error::Error;
};

// Malformed or truncated input data (files, datasets).
struct FormatError : Error {
    using Error::Error;
};

// Invalid experiment / run configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Numerical failure at runtime (non-finite loss or gradient).
struct NumericError : Error {
    using Error::Error;
};

// The requested quantity is mathematically undefined for this input.
struct UndefinedError : Error {
    using Error::Error;
};

}  // namespace winconv
