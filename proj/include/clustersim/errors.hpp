#pragma once

#include <stdexcept>
#include <string>

namespace clustersim {

// Malformed or unreadable input (bad CSV, missing config keys, ...).
// The CLI maps this to exit code 2.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Semantically invalid request against well-formed inputs (unroutable flow,
// invalid topology config, ...). The CLI maps this to exit code 1.
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace clustersim
