#pragma once

#include <stdexcept>
#include <string>

namespace twinbeam {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or argument (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed, missing or inconsistent input data (CLI exit code 3).
class DataError : public Error {
public:
    using Error::Error;
};

/// Byte-level TBF1 / manifest decoding failures.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

/// Optimizer failure, singular systems, degenerate statistics (CLI exit code 4).
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace twinbeam
