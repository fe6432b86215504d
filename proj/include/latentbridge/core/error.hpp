// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lb {

enum class ErrorKind {
    validation,          // bad user input / config
    shape,               // tensor shape mismatch
    range,               // index or step out of range
    missing_checkpoint,  // prerequisite artifact absent
    stale_cache,         // cache keyed by an outdated checkpoint hash
    io,                  // file system / format failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

    // User/config errors map to CLI exit code 2, everything else to 1.
    bool user_error() const {
        switch (kind_) {
            case ErrorKind::validation:
            case ErrorKind::range:
            case ErrorKind::missing_checkpoint:
            case ErrorKind::stale_cache:
                return true;
            default:
                return false;
        }
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void check(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

}  // namespace lb
