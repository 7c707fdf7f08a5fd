#pragma once

#include <stdexcept>
#include <string>

namespace mwalk {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape or width mismatch between a value and the parameter consuming it.
struct DimensionError : Error {
    using Error::Error;
};

/// Invalid numeric argument (non-positive temperature, empty vector, ...).
struct ParameterError : Error {
    using Error::Error;
};

/// Operation called on a state that violates its precondition.
struct ContractError : Error {
    using Error::Error;
};

struct ParseError : Error {
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct DataError : Error {
    using Error::Error;
};

struct VocabularyError : DataError {
    using DataError::DataError;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace mwalk
