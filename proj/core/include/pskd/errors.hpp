#pragma once

#include <stdexcept>
#include <string>

namespace pskd {

// Precondition violations: bad shapes, ranges, labels, config values.
struct ParamError : std::invalid_argument {
    explicit ParamError(const std::string& msg) : std::invalid_argument(msg) {}
};

// A value left the finite domain (NaN/Inf) where finiteness is contractual.
struct NumericError : std::domain_error {
    explicit NumericError(const std::string& msg) : std::domain_error(msg) {}
};

// Malformed input file; the message carries the line number where known.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint or dataset loading failures: bad magic, version, truncation.
struct LoadError : std::runtime_error {
    explicit LoadError(const std::string& msg) : std::runtime_error(msg) {}
};

// A training run failed; the message names the epoch where it happened.
struct RunError : std::runtime_error {
    explicit RunError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bugs: a recorded op without a backward rule and similar impossibilities.
struct InternalError : std::logic_error {
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace pskd
