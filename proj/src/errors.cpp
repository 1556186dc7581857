#include "medsearch/errors.hpp"

namespace medsearch {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::NameTaken: return "NameTaken";
        case ErrorCode::AlreadyRegistered: return "AlreadyRegistered";
        case ErrorCode::NoSuchLocation: return "NoSuchLocation";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::FetchError: return "FetchError";
        case ErrorCode::ServeError: return "ServeError";
        case ErrorCode::AuthFailed: return "AuthFailed";
        case ErrorCode::AuthRequired: return "AuthRequired";
        case ErrorCode::EmptyQuery: return "EmptyQuery";
        case ErrorCode::SanitizationFailure: return "SanitizationFailure";
        case ErrorCode::UnknownResult: return "UnknownResult";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::Internal: return "Internal";
    }
    return "Unknown";
}

} // namespace medsearch
