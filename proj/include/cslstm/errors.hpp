#pragma once

#include <stdexcept>
#include <string>

namespace cslstm {

// Error categories map onto CLI exit codes: config/usage -> 1,
// data -> 2, numeric -> 3. Contract violations (bad arguments,
// shape mismatches) throw std::invalid_argument.

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cslstm
