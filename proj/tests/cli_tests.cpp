#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "medsearch/machine_format.hpp"
#include "medsearch/site_corpus.hpp"
#include "medsearch/text_util.hpp"

namespace {

using namespace medsearch;

const char* kCli = MEDSEARCH_CLI_PATH;

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

RunResult run_cli(const std::string& args) {
    const std::string out_file = "/tmp/medsearch_cli_out_" + std::to_string(::getpid());
    const std::string err_file = "/tmp/medsearch_cli_err_" + std::to_string(::getpid());
    const std::string cmd =
        std::string(kCli) + " " + args + " >" + out_file + " 2>" + err_file;
    const int status = std::system(cmd.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    auto slurp = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    result.out = slurp(out_file);
    result.err = slurp(err_file);
    std::remove(out_file.c_str());
    std::remove(err_file.c_str());
    return result;
}

std::filesystem::path workspace() {
    static const auto dir = [] {
        auto d = std::filesystem::temp_directory_path() /
                 ("medsearch_cli_ws_" + std::to_string(::getpid()));
        std::filesystem::remove_all(d);
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir;
}

std::string config_path() { return (workspace() / "config.txt").string(); }

std::string login_token() {
    const auto login = run_cli("login --config " + config_path() + " --format machine");
    REQUIRE(login.exit_code == 0);
    const auto doc = MachineDoc::parse(login.out);
    const auto token = doc.get("token");
    REQUIRE(token.has_value());
    return *token;
}

} // namespace

TEST_CASE("gen creates the corpus, dictionary, suite and a ready config") {
    const auto result = run_cli("gen --out " + workspace().string() + " --seed 1");
    REQUIRE(result.exit_code == 0);
    CHECK(std::filesystem::exists(workspace() / "corpus" / "index.txt"));
    CHECK(std::filesystem::exists(workspace() / "dictionary.tsv"));
    CHECK(std::filesystem::exists(workspace() / "suite.tsv"));
    CHECK(std::filesystem::exists(workspace() / "judgments.tsv"));
    CHECK(std::filesystem::exists(workspace() / "config.txt"));
    CHECK(result.out.find("generated 13 sites") == 0);
}

TEST_CASE("login issues tokens; wrong credentials exit 4 uniformly") {
    const std::string token = login_token();
    CHECK(token.size() == 32);

    const auto bad_ip = run_cli("login --config " + config_path() + " --ip 10.1.2.3");
    CHECK(bad_ip.exit_code == 4);
    const auto bad_user = run_cli("login --config " + config_path() + " --user nobody");
    CHECK(bad_user.exit_code == 4);
    // indistinguishable diagnostics
    CHECK(bad_ip.err == bad_user.err);
}

TEST_CASE("missing corpus path exits 2") {
    const auto bad_cfg = workspace() / "bad_config.txt";
    {
        std::ifstream in(config_path());
        std::ofstream out(bad_cfg);
        std::string line;
        while (std::getline(in, line)) {
            if (line.rfind("corpus_path", 0) == 0) {
                out << "corpus_path = /nonexistent/corpus\n";
            } else {
                out << line << '\n';
            }
        }
    }
    const auto result = run_cli("query --config " + bad_cfg.string() + " --token x fever");
    CHECK(result.exit_code == 2);
}

TEST_CASE("profile updates then query consumes the session") {
    const std::string token = login_token();
    const auto prof = run_cli("profile --config " + config_path() + " --token " + token +
                              " --format machine --set health_conditions=asthma"
                              " \"--set=preferences.respiratory and chest symptom=0.9\"");
    REQUIRE(prof.exit_code == 0);
    const auto doc = MachineDoc::parse(prof.out);
    CHECK(doc.get("health_conditions") == std::string("asthma"));
    CHECK(doc.get("preferences.respiratory and chest symptom") == std::string("0.900000"));

    const auto query = run_cli("query --config " + config_path() + " --token " + token +
                               " --format machine --deterministic asthma");
    REQUIRE(query.exit_code == 0);
    const auto qdoc = MachineDoc::parse(query.out);
    CHECK(qdoc.get("query") == std::string("asthma"));
    REQUIRE(qdoc.get("results").has_value());
}

TEST_CASE("token can come from the environment, flag takes precedence") {
    const std::string token = login_token();
    ::setenv("MEDSEARCH_TOKEN", token.c_str(), 1);
    const auto ok = run_cli("query --config " + config_path() +
                            " --format machine --deterministic fever");
    CHECK(ok.exit_code == 0);
    const auto overridden = run_cli("query --config " + config_path() +
                                    " --token bogus --deterministic fever");
    CHECK(overridden.exit_code == 4);  // flag wins over the valid env token
    ::unsetenv("MEDSEARCH_TOKEN");
}

TEST_CASE("empty query maps to exit 3 with the documented message") {
    const std::string token = login_token();
    const auto result = run_cli("query --config " + config_path() + " --token " + token +
                                " \"do on between\"");
    CHECK(result.exit_code == 3);
    CHECK(result.err.find("empty query after stopword removal") != std::string::npos);
}

TEST_CASE("bench emits machine-parsable reports for both topologies") {
    const auto result = run_cli("bench --config " + config_path() +
                                " --format machine --repetitions 2 --deterministic"
                                " --calibrate-ratio 0.933");
    REQUIRE(result.exit_code == 0);
    // first line is the calibration note, then two blank-line-separated docs
    const auto body = result.out.substr(result.out.find('\n') + 1);
    const auto split_at = body.find("\n\n");
    REQUIRE(split_at != std::string::npos);
    const auto stat = MachineDoc::parse(body.substr(0, split_at + 1));
    const auto mob = MachineDoc::parse(body.substr(split_at + 2));
    CHECK(stat.get("topology") == std::string("static"));
    CHECK(mob.get("topology") == std::string("mobile"));
    CHECK(stat.get("messages_sent") == std::string("28"));
    CHECK(mob.get("messages_sent") == std::string("2"));
    REQUIRE(stat.get("measured_ms").has_value());
    CHECK(split(*stat.get("measured_ms"), ',').size() == 2);
}

TEST_CASE("eval is deterministic byte-for-byte and machine-parsable") {
    const auto a = run_cli("eval --config " + config_path() + " --format machine");
    REQUIRE(a.exit_code == 0);
    const auto b = run_cli("eval --config " + config_path() + " --format machine");
    REQUIRE(b.exit_code == 0);
    CHECK(a.out == b.out);

    const auto doc = MachineDoc::parse(a.out);
    REQUIRE(doc.get("precision").has_value());
    REQUIRE(doc.get("recall").has_value());
    REQUIRE(doc.get("f_measure").has_value());
    CHECK(doc.get("queries_run") == std::string("225"));
    CHECK(doc.get("coverage_gaps") == std::string("0"));
    const double p = std::stod(*doc.get("precision"));
    const double r = std::stod(*doc.get("recall"));
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
}

TEST_CASE("serve accepts queries from a second process over HTTP") {
    // rewrite the config to a test-local port
    const auto serve_cfg = workspace() / "serve_config.txt";
    {
        std::ifstream in(config_path());
        std::ofstream out(serve_cfg);
        std::string line;
        while (std::getline(in, line)) {
            if (line.rfind("bind_address", 0) == 0) {
                out << "bind_address = 127.0.0.1:18643\n";
            } else {
                out << line << '\n';
            }
        }
    }

    const pid_t pid = ::fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        ::execl(kCli, kCli, "serve", "--config", serve_cfg.string().c_str(),
                static_cast<char*>(nullptr));
        ::_exit(127);
    }

    // wait until the site service answers
    bool up = false;
    for (int i = 0; i < 100 && !up; ++i) {
        up = corpus::probe_site_service("127.0.0.1", 18643, "s001");
        if (!up) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    REQUIRE(up);

    const std::string token = login_token();
    const auto query = run_cli("query --config " + serve_cfg.string() + " --token " + token +
                               " --format machine fever");
    CHECK(query.exit_code == 0);
    REQUIRE(query.out.find("results\t") != std::string::npos);

    ::kill(pid, SIGTERM);
    int status = 0;
    ::waitpid(pid, &status, 0);
    CHECK(WIFEXITED(status));
}
