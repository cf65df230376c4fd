#pragma once

#include <stdexcept>
#include <string>

namespace exitctrl {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input document. `path()` is a JSON pointer
/// to the offending element ("" for the document root).
class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& message)
        : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)), message_(message) {}

    const std::string& path() const noexcept { return path_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string path_;
    std::string message_;
};

/// A call violated an operation precondition (e.g. starting point outside
/// the closed domain).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Numerical breakdown: non-finite states, singular regressions,
/// non-monotone stencils, iteration caps.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace exitctrl
