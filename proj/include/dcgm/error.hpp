#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dcgm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line)
    {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Shapes that do not fit together (vocabulary size, hidden size, feature registry...).
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Non-finite value encountered during a forward pass or training.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Two feature registries that were expected to agree do not.
class RegistryMismatch : public Error {
public:
    using Error::Error;
};

}  // namespace dcgm
