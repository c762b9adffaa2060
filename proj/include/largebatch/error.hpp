#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace largebatch {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Precondition violated by an argument value (negative epoch, eta <= 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

class DivisionByZeroError : public Error {
public:
    DivisionByZeroError(std::size_t index)
        : Error("division by zero at element " + std::to_string(index)), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

// A NaN or infinity where finite values are required. `where` names the
// tensor or layer, `index` the first offending element.
class NonFiniteError : public Error {
public:
    NonFiniteError(std::string where, std::size_t index)
        : Error("non-finite value in " + where + " at element " + std::to_string(index)),
          where_(std::move(where)), index_(index) {}
    const std::string& where() const noexcept { return where_; }
    std::size_t index() const noexcept { return index_; }

private:
    std::string where_;
    std::size_t index_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Broken internal contract, e.g. replicas whose parameters diverged.
class InvariantError : public Error {
public:
    using Error::Error;
};

}  // namespace largebatch
