#pragma once

#include <stdexcept>
#include <string>

namespace capsid {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Rejected input: shapes, bounds or preconditions violated by a caller.
struct InvalidInput : Error {
    explicit InvalidInput(const std::string& msg) : Error(msg) {}
};

/// Rejected configuration: parameter values that cannot describe a valid run.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Broken data on disk or inconsistent dataset contents.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

} // namespace capsid
