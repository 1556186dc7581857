#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "medsearch/errors.hpp"
#include "medsearch/search_topologies.hpp"

namespace medsearch::cli {

/// Flat `key = value` configuration; keys match the field names.
struct CliConfig {
    std::filesystem::path corpus_path;
    std::filesystem::path dictionary_path;
    std::filesystem::path data_dir;
    std::string bind_address = "127.0.0.1:8300";
    topology::TopologyKind topology = topology::TopologyKind::Static;
    int required_assurance = 2;
    double session_ttl_minutes = 30.0;
    double c_msg = 0.5;
    double c_move = 2.0;
    double kappa = 0.0;
    int repetitions = 10;
    std::uint64_t seed = 1;
};

CliConfig load_config(const std::filesystem::path& file);
std::string format_config(const CliConfig& config);

struct BindAddress {
    std::string host;
    int port = 0;
};
BindAddress parse_bind_address(const std::string& address);

int exit_code_for(medsearch::ErrorCode code);

} // namespace medsearch::cli
