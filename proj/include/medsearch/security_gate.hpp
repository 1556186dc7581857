#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace medsearch::security {

struct Credential {
    std::string user_id;
    std::string source_ip;
};

struct Session {
    std::string token;  // 128-bit, hex
    std::string user_id;
    std::string source_ip;
    std::int64_t expires_at_ms = 0;  // wall-clock epoch ms (persists across processes)
};

struct RecordKey {
    std::string key_hex;    // 256-bit keyed derivation, hex
    std::string nonce_hex;  // fresh 128-bit per search, hex
};

struct AssuranceLevel {
    int level = 0;

    auto operator<=>(const AssuranceLevel&) const = default;
};

inline constexpr int kMinAssurance = 0;
inline constexpr int kMaxAssurance = 3;

bool check_assurance(int site_level, int required);

/// The log-in authority: user directory with per-user IP allowlists, session
/// table with TTL, per-search record keys and outbound payload sanitization.
class SecurityGate {
public:
    struct Options {
        std::filesystem::path data_dir;
        double session_ttl_minutes = 30.0;
        /// Seeds nonce/token generation; 0 draws from the system entropy
        /// source.
        std::uint64_t seed = 0;
        /// Wall-clock override for expiry tests.
        std::function<std::int64_t()> wall_now_ms;
    };

    explicit SecurityGate(Options opts);
    ~SecurityGate();

    void register_user(const std::string& user_id, const std::vector<std::string>& ips);
    bool has_user(const std::string& user_id) const;

    /// Uniform AuthFailed for unknown user and IP mismatch alike — callers
    /// cannot enumerate users from the error shape.
    Session login(const Credential& cred);

    /// Looks the token up and enforces expiry; AuthRequired otherwise.
    Session validate(const std::string& token) const;

    RecordKey derive_record_key(const std::string& user_id);
    /// Deterministic variant for a caller-supplied nonce.
    RecordKey derive_record_key(const std::string& user_id, const std::string& nonce_hex) const;

    /// Strips user identity from a site-bound payload: drops identity keys,
    /// scrubs every occurrence of the user id, session token and profile
    /// common/medical values, then re-scans the serialized result and fails
    /// closed on any residual.
    nlohmann::json pseudonymize_outbound(nlohmann::json payload, const Session& session,
                                         const std::vector<std::string>& profile_values) const;

    const std::filesystem::path& data_dir() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace medsearch::security
