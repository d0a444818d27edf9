#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pedalnet {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad function arguments or malformed input data (exit code 2 in the CLI).
struct DataError : Error {
    using Error::Error;
};

// Invalid configuration values (fft size, mel count, synth rates, ...).
struct ConfigError : DataError {
    using DataError::DataError;
};

// Structural parse failure; keeps the byte offset where parsing stopped.
struct ParseError : DataError {
    ParseError(const std::string& what, std::size_t offset)
        : DataError(what + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::size_t byte_offset;
};

// Model file problems (exit code 3 in the CLI).
struct ModelError : Error {
    using Error::Error;
};

struct VersionError : ModelError {
    using ModelError::ModelError;
};

struct TruncatedFileError : ModelError {
    using ModelError::ModelError;
};

struct ShapeError : ModelError {
    using ModelError::ModelError;
};

}  // namespace pedalnet
