#pragma once

#include <stdexcept>
#include <string>

namespace crossdino {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents that do not agree with what an operation requires.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A patch plan that cannot be built for the requested extents.
class TilingError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Non-finite value produced while evaluating a function.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// Malformed external input (JSON, config files).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Training diverged.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, int epoch) : Error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

} // namespace crossdino
