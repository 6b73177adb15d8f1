#pragma once

#include <stdexcept>
#include <string>

namespace shiftmae {

/// Invalid configuration or precondition violation (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or missing input data (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values appeared during computation (CLI exit code 4).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Misuse of the gradient tape, e.g. a second backward pass over a consumed graph.
class TapeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// File format errors. Each failure mode gets its own type so callers and
// tests can tell them apart.
class FormatError : public DataError {
public:
    using DataError::DataError;
};
class BadMagicError : public FormatError {
public:
    using FormatError::FormatError;
};
class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};
class TruncatedError : public FormatError {
public:
    using FormatError::FormatError;
};
class UnknownTensorError : public FormatError {
public:
    using FormatError::FormatError;
};
class HeaderError : public FormatError {
public:
    using FormatError::FormatError;
};
class MissingRecordError : public DataError {
public:
    using DataError::DataError;
};
class InvalidBoxError : public DataError {
public:
    using DataError::DataError;
};
class InvalidScoreError : public DataError {
public:
    using DataError::DataError;
};

/// Checkpoint was produced for a different architecture.
class ConfigMismatchError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

}  // namespace shiftmae
