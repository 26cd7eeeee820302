#pragma once

#include <stdexcept>
#include <string>

namespace geosr {

// Error families map one-to-one onto CLI exit codes (see cli.hpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class ResumeError : public Error {
public:
    using Error::Error;
};

enum class BackendErrorKind { RetriesExhausted, Authentication, MalformedReply };

inline const char* to_string(BackendErrorKind kind) {
    switch (kind) {
    case BackendErrorKind::RetriesExhausted: return "retries_exhausted";
    case BackendErrorKind::Authentication: return "authentication";
    case BackendErrorKind::MalformedReply: return "malformed_reply";
    }
    return "unknown";
}

class BackendError : public Error {
public:
    BackendError(BackendErrorKind kind, const std::string& what, int attempts = 1)
        : Error(what), kind_(kind), attempts_(attempts) {}

    BackendErrorKind kind() const noexcept { return kind_; }
    int attempts() const noexcept { return attempts_; }

private:
    BackendErrorKind kind_;
    int attempts_;
};

}  // namespace geosr
