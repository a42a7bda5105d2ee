#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>

namespace teamwork {

// Error taxonomy. Shape errors are dimension mismatches between operands,
// parameter errors are invalid argument values, io/config errors belong to
// the persistence and CLI surfaces. The CLI maps these onto exit codes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParamError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An internal invariant failed; the CLI reports these as contract violations.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Non-fatal diagnostics (e.g. a rank that violates the low-rank assumption)
// go through a swappable handler so tests can capture them.
inline std::function<void(const std::string&)>& warn_handler() {
    static std::function<void(const std::string&)> handler =
        [](const std::string& msg) { std::fprintf(stderr, "warning: %s\n", msg.c_str()); };
    return handler;
}

inline void warn(const std::string& msg) { warn_handler()(msg); }

}  // namespace teamwork
