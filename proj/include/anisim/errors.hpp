#pragma once

#include <stdexcept>
#include <string>

namespace anisim {

// Violated precondition or shape/argument contract. Programming error, not data.
struct ContractViolation : std::invalid_argument {
    explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

// A forward evaluation produced NaN/Inf (or an op hit an invalid numeric domain).
// Carries the op kind that tripped so failures point at the producing operation.
struct NumericFailure : std::runtime_error {
    std::string op_kind;
    NumericFailure(std::string op, const std::string& what)
        : std::runtime_error("numeric failure in '" + op + "': " + what), op_kind(std::move(op)) {}
};

// Malformed external input (scene file, CSV row, checkpoint payload).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration (bad field value, inconsistent options).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

inline void check_contract(bool ok, const std::string& msg) {
    if (!ok) throw ContractViolation(msg);
}

}  // namespace anisim
