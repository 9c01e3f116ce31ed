#pragma once

#include <stdexcept>
#include <string>

namespace kdiqa {

/// Failure category. The CLI maps each kind onto a process exit code.
enum class ErrorKind {
    shape,       // mismatched lengths or dimensions
    domain,      // argument outside the mathematical domain (zero norm, t > T)
    numeric,     // NaN/Inf produced or consumed
    config,      // invalid sizes, unknown config keys
    data,        // dataset content problems (out-of-range MOS, misaligned files)
    format,      // wrong magic/version in a binary container
    corruption,  // truncated or oversized payload
    undefined,   // correlation of a constant sequence
    usage,       // API misuse (stale cache) or bad command line
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

}  // namespace kdiqa
