#pragma once

#include <stdexcept>
#include <string>

namespace medsearch {

enum class ErrorCode {
    InvalidArgument,
    NameTaken,
    AlreadyRegistered,
    NoSuchLocation,
    ParseError,
    FetchError,
    ServeError,
    AuthFailed,
    AuthRequired,
    EmptyQuery,
    SanitizationFailure,
    UnknownResult,
    ConfigError,
    Internal,
};

const char* error_code_name(ErrorCode code);

/// Platform-wide error type. Every documented failure path throws one of
/// these with a stable ErrorCode so callers (and the CLI exit-code table)
/// can dispatch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) { throw Error(code, what); }

} // namespace medsearch
