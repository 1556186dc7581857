#include "medsearch/security_gate.hpp"

#include <chrono>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include "medsearch/errors.hpp"
#include "medsearch/text_util.hpp"

namespace medsearch::security {

bool check_assurance(int site_level, int required) { return site_level >= required; }

namespace {

std::string to_hex(const unsigned char* data, std::size_t len) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(hex[data[i] >> 4]);
        out.push_back(hex[data[i] & 0xF]);
    }
    return out;
}

std::int64_t system_now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

} // namespace

struct SecurityGate::Impl {
    Options opts;
    mutable std::mutex mu;
    std::map<std::string, std::set<std::string>> users;  // user_id -> allowed IPs
    std::map<std::string, Session> sessions;             // token -> session
    std::string secret;                                  // raw bytes
    std::mt19937_64 rng;

    std::filesystem::path users_file() const { return opts.data_dir / "users.txt"; }
    std::filesystem::path sessions_file() const { return opts.data_dir / "sessions.json"; }
    std::filesystem::path secret_file() const { return opts.data_dir / "secret.key"; }

    std::int64_t wall_now() const { return opts.wall_now_ms ? opts.wall_now_ms() : system_now_ms(); }

    std::string random_hex(std::size_t bits) {
        std::string bytes;
        for (std::size_t i = 0; i < bits / 64; ++i) {
            const std::uint64_t v = rng();
            for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
        }
        return to_hex(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
    }

    void load_users() {
        std::ifstream in(users_file());
        if (!in) return;
        std::string line;
        while (std::getline(in, line)) {
            const std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            const auto tab = t.find('\t');
            if (tab == std::string::npos) continue;
            const std::string user = trim(t.substr(0, tab));
            std::set<std::string> ips;
            for (const auto& ip : split_nonempty(t.substr(tab + 1), ',')) ips.insert(ip);
            users[user] = std::move(ips);
        }
    }

    void save_users() {
        std::filesystem::create_directories(opts.data_dir);
        std::ofstream out(users_file(), std::ios::binary);
        for (const auto& [user, ips] : users) {
            out << user << '\t' << join({ips.begin(), ips.end()}, ",") << '\n';
        }
    }

    void load_sessions() {
        std::ifstream in(sessions_file());
        if (!in) return;
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception&) {
            return;  // corrupt session table: start empty
        }
        const nlohmann::json entries = j.value("sessions", nlohmann::json::array());
        for (const auto& js : entries) {
            Session s;
            s.token = js.value("token", "");
            s.user_id = js.value("user_id", "");
            s.source_ip = js.value("source_ip", "");
            s.expires_at_ms = js.value("expires_at_ms", std::int64_t{0});
            if (!s.token.empty()) sessions[s.token] = std::move(s);
        }
    }

    void save_sessions() {
        std::filesystem::create_directories(opts.data_dir);
        nlohmann::json arr = nlohmann::json::array();
        const std::int64_t now = wall_now();
        for (const auto& [token, s] : sessions) {
            if (s.expires_at_ms <= now) continue;  // prune expired
            arr.push_back({{"token", s.token},
                           {"user_id", s.user_id},
                           {"source_ip", s.source_ip},
                           {"expires_at_ms", s.expires_at_ms}});
        }
        std::ofstream out(sessions_file(), std::ios::binary);
        out << nlohmann::json{{"sessions", arr}}.dump(2) << '\n';
    }

    void load_or_create_secret() {
        {
            std::ifstream in(secret_file());
            if (in) {
                std::string hex;
                in >> hex;
                if (hex.size() == 64) {
                    secret.clear();
                    for (std::size_t i = 0; i < hex.size(); i += 2) {
                        secret.push_back(
                            static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
                    }
                    return;
                }
            }
        }
        const std::string hex = random_hex(256);
        std::filesystem::create_directories(opts.data_dir);
        std::ofstream out(secret_file(), std::ios::binary);
        out << hex << '\n';
        secret.clear();
        for (std::size_t i = 0; i < hex.size(); i += 2) {
            secret.push_back(static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
        }
    }
};

SecurityGate::SecurityGate(Options opts) : impl_(std::make_unique<Impl>()) {
    impl_->opts = std::move(opts);
    if (impl_->opts.seed != 0) {
        impl_->rng.seed(impl_->opts.seed);
    } else {
        std::random_device rd;
        impl_->rng.seed((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
    }
    impl_->load_users();
    impl_->load_sessions();
    impl_->load_or_create_secret();
}

SecurityGate::~SecurityGate() = default;

void SecurityGate::register_user(const std::string& user_id, const std::vector<std::string>& ips) {
    if (user_id.empty()) raise(ErrorCode::InvalidArgument, "user_id must be nonempty");
    std::lock_guard<std::mutex> lk(impl_->mu);
    auto& allow = impl_->users[user_id];
    for (const auto& ip : ips) allow.insert(ip);
    impl_->save_users();
}

bool SecurityGate::has_user(const std::string& user_id) const {
    std::lock_guard<std::mutex> lk(impl_->mu);
    return impl_->users.count(user_id) > 0;
}

Session SecurityGate::login(const Credential& cred) {
    std::lock_guard<std::mutex> lk(impl_->mu);
    auto it = impl_->users.find(cred.user_id);
    const bool ok = it != impl_->users.end() && it->second.count(cred.source_ip) > 0;
    if (!ok) raise(ErrorCode::AuthFailed, "authentication failed");

    Session s;
    do {
        s.token = impl_->random_hex(128);
    } while (impl_->sessions.count(s.token));
    s.user_id = cred.user_id;
    s.source_ip = cred.source_ip;
    s.expires_at_ms =
        impl_->wall_now() + static_cast<std::int64_t>(impl_->opts.session_ttl_minutes * 60000.0);
    impl_->sessions[s.token] = s;
    impl_->save_sessions();
    return s;
}

Session SecurityGate::validate(const std::string& token) const {
    std::lock_guard<std::mutex> lk(impl_->mu);
    auto it = impl_->sessions.find(token);
    if (it == impl_->sessions.end() || it->second.expires_at_ms <= impl_->wall_now()) {
        raise(ErrorCode::AuthRequired, "valid session required");
    }
    return it->second;
}

RecordKey SecurityGate::derive_record_key(const std::string& user_id) {
    std::string nonce;
    {
        std::lock_guard<std::mutex> lk(impl_->mu);
        nonce = impl_->random_hex(128);
    }
    return derive_record_key(user_id, nonce);
}

RecordKey SecurityGate::derive_record_key(const std::string& user_id, const std::string& nonce_hex) const {
    // HMAC-SHA256(secret, user_id || 0x1f || nonce): one-way given the
    // platform secret, deterministic for fixed inputs.
    const std::string message = user_id + '\x1f' + nonce_hex;
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int digest_len = 0;
    HMAC(EVP_sha256(), impl_->secret.data(), static_cast<int>(impl_->secret.size()),
         reinterpret_cast<const unsigned char*>(message.data()), message.size(), digest, &digest_len);
    RecordKey key;
    key.key_hex = to_hex(digest, digest_len);
    key.nonce_hex = nonce_hex;
    return key;
}

namespace {

bool is_identity_key(const std::string& key) {
    return key == "user_id" || key == "token" || key == "session" || key == "session_token";
}

std::string scrub_value(std::string value, const std::vector<std::string>& forbidden) {
    for (const auto& f : forbidden) {
        if (f.empty()) continue;
        std::size_t pos;
        while ((pos = value.find(f)) != std::string::npos) value.erase(pos, f.size());
    }
    return value;
}

nlohmann::json sanitize_node(nlohmann::json node, const std::vector<std::string>& forbidden) {
    if (node.is_object()) {
        nlohmann::json out = nlohmann::json::object();
        for (auto& [key, value] : node.items()) {
            if (is_identity_key(key)) continue;
            out[key] = sanitize_node(value, forbidden);
        }
        return out;
    }
    if (node.is_array()) {
        nlohmann::json out = nlohmann::json::array();
        for (auto& value : node) out.push_back(sanitize_node(value, forbidden));
        return out;
    }
    if (node.is_string()) return scrub_value(node.get<std::string>(), forbidden);
    return node;
}

} // namespace

nlohmann::json SecurityGate::pseudonymize_outbound(nlohmann::json payload, const Session& session,
                                                   const std::vector<std::string>& profile_values) const {
    std::vector<std::string> forbidden;
    forbidden.push_back(session.user_id);
    forbidden.push_back(session.token);
    for (const auto& v : profile_values) {
        if (!v.empty()) forbidden.push_back(v);
    }

    nlohmann::json sanitized = sanitize_node(std::move(payload), forbidden);

    const std::string serialized = sanitized.dump();
    for (const auto& f : forbidden) {
        if (!f.empty() && serialized.find(f) != std::string::npos) {
            raise(ErrorCode::SanitizationFailure, "residual identifier after sanitization");
        }
    }
    return sanitized;
}

const std::filesystem::path& SecurityGate::data_dir() const { return impl_->opts.data_dir; }

} // namespace medsearch::security
