#pragma once

#include <stdexcept>
#include <string>

namespace dpn {

// Base for every error raised by the library. Subclasses map onto the CLI exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Incompatible tensor or model dimensions.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Non-finite values, divergence, failed gradient checks.
class NumericError : public Error {
public:
    using Error::Error;
};

// Invalid configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or truncated files, magic/version mismatch, wrong model kind.
class FormatError : public Error {
public:
    using Error::Error;
};

// Generated data that fails validation.
class DataError : public Error {
public:
    using Error::Error;
};

}  // namespace dpn
