#include "medsearch/cli_config.hpp"

#include <fstream>
#include <sstream>

#include "medsearch/errors.hpp"
#include "medsearch/text_util.hpp"

namespace medsearch::cli {

CliConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) raise(ErrorCode::ConfigError, "cannot open config file: " + file.string());
    CliConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            raise(ErrorCode::ConfigError,
                  "config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        try {
            if (key == "corpus_path") {
                cfg.corpus_path = value;
            } else if (key == "dictionary_path") {
                cfg.dictionary_path = value;
            } else if (key == "data_dir") {
                cfg.data_dir = value;
            } else if (key == "bind_address") {
                cfg.bind_address = value;
            } else if (key == "topology") {
                cfg.topology = topology::topology_from_name(value);
            } else if (key == "required_assurance") {
                cfg.required_assurance = std::stoi(value);
            } else if (key == "session_ttl_minutes") {
                cfg.session_ttl_minutes = std::stod(value);
            } else if (key == "c_msg") {
                cfg.c_msg = std::stod(value);
            } else if (key == "c_move") {
                cfg.c_move = std::stod(value);
            } else if (key == "kappa") {
                cfg.kappa = std::stod(value);
            } else if (key == "repetitions") {
                cfg.repetitions = std::stoi(value);
            } else if (key == "seed") {
                cfg.seed = std::stoull(value);
            } else {
                raise(ErrorCode::ConfigError,
                      "config line " + std::to_string(line_no) + ": unknown key " + key);
            }
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            raise(ErrorCode::ConfigError,
                  "config line " + std::to_string(line_no) + ": bad value for " + key);
        }
    }
    if (cfg.corpus_path.empty() || cfg.dictionary_path.empty() || cfg.data_dir.empty()) {
        raise(ErrorCode::ConfigError, "config must set corpus_path, dictionary_path and data_dir");
    }
    if (!std::filesystem::exists(cfg.corpus_path)) {
        raise(ErrorCode::ConfigError, "corpus_path does not exist: " + cfg.corpus_path.string());
    }
    if (!std::filesystem::exists(cfg.dictionary_path)) {
        raise(ErrorCode::ConfigError,
              "dictionary_path does not exist: " + cfg.dictionary_path.string());
    }
    if (cfg.required_assurance < 0 || cfg.required_assurance > 3) {
        raise(ErrorCode::ConfigError, "required_assurance must be in [0,3]");
    }
    if (cfg.repetitions < 1) raise(ErrorCode::ConfigError, "repetitions must be >= 1");
    if (cfg.c_msg < 0 || cfg.c_move < 0 || cfg.kappa < 0) {
        raise(ErrorCode::ConfigError, "benchmark costs must be nonnegative");
    }
    return cfg;
}

std::string format_config(const CliConfig& config) {
    std::ostringstream out;
    out << "corpus_path = " << config.corpus_path.string() << '\n';
    out << "dictionary_path = " << config.dictionary_path.string() << '\n';
    out << "data_dir = " << config.data_dir.string() << '\n';
    out << "bind_address = " << config.bind_address << '\n';
    out << "topology = " << topology::topology_name(config.topology) << '\n';
    out << "required_assurance = " << config.required_assurance << '\n';
    out << "session_ttl_minutes = " << config.session_ttl_minutes << '\n';
    out << "c_msg = " << config.c_msg << '\n';
    out << "c_move = " << config.c_move << '\n';
    out << "kappa = " << config.kappa << '\n';
    out << "repetitions = " << config.repetitions << '\n';
    out << "seed = " << config.seed << '\n';
    return out.str();
}

BindAddress parse_bind_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) {
        raise(ErrorCode::ConfigError, "bind_address must be host:port, got: " + address);
    }
    BindAddress out;
    out.host = address.substr(0, colon);
    try {
        out.port = std::stoi(address.substr(colon + 1));
    } catch (const std::exception&) {
        raise(ErrorCode::ConfigError, "bad port in bind_address: " + address);
    }
    if (out.host.empty() || out.port < 0 || out.port > 65535) {
        raise(ErrorCode::ConfigError, "bad bind_address: " + address);
    }
    return out;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError: return 2;
        case ErrorCode::EmptyQuery: return 3;
        case ErrorCode::AuthFailed:
        case ErrorCode::AuthRequired: return 4;
        case ErrorCode::SanitizationFailure: return 5;
        case ErrorCode::NoSuchLocation:
        case ErrorCode::UnknownResult: return 6;
        case ErrorCode::ParseError:
        case ErrorCode::FetchError: return 7;
        case ErrorCode::ServeError: return 8;
        case ErrorCode::NameTaken:
        case ErrorCode::AlreadyRegistered:
        case ErrorCode::InvalidArgument: return 9;
        case ErrorCode::Internal: return 1;
    }
    return 1;
}

} // namespace medsearch::cli
