#pragma once

#include <stdexcept>

namespace sdeqml {

/// A state or parameter lies outside the domain an operation is defined on.
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed (overflow, invalid matrix, exploding path).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad configuration: unknown keys, unparsable values, missing files.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sdeqml
