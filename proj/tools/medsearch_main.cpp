#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "medsearch/bench_eval.hpp"
#include "medsearch/cli_config.hpp"
#include "medsearch/errors.hpp"
#include "medsearch/machine_format.hpp"
#include "medsearch/personalization.hpp"
#include "medsearch/query_pipeline.hpp"
#include "medsearch/search_topologies.hpp"
#include "medsearch/security_gate.hpp"
#include "medsearch/site_corpus.hpp"
#include "medsearch/taxonomy.hpp"
#include "medsearch/text_util.hpp"

namespace {

using namespace medsearch;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

std::string resolve_token(const std::string& flag_token) {
    if (!flag_token.empty()) return flag_token;  // flag takes precedence
    const char* env = std::getenv("MEDSEARCH_TOKEN");
    return env ? env : "";
}

void print_table(const std::vector<std::vector<std::string>>& rows) {
    if (rows.empty()) return;
    std::vector<std::size_t> widths;
    for (const auto& row : rows) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
    }
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) {
            line += row[i];
            if (i + 1 < row.size()) line.append(widths[i] - row[i].size() + 2, ' ');
        }
        std::cout << line << '\n';
    }
}

struct World {
    corpus::Corpus corpus;
    query::Dictionary dictionary;
    std::unique_ptr<security::SecurityGate> gate;
    std::unique_ptr<personal::ProfileStore> profiles;
};

World load_world(const cli::CliConfig& cfg) {
    World w;
    w.corpus = corpus::load_corpus(cfg.corpus_path);
    w.dictionary = query::load_dictionary(cfg.dictionary_path);
    security::SecurityGate::Options gopts;
    gopts.data_dir = cfg.data_dir;
    gopts.session_ttl_minutes = cfg.session_ttl_minutes;
    gopts.seed = cfg.seed;
    w.gate = std::make_unique<security::SecurityGate>(gopts);
    w.profiles = std::make_unique<personal::ProfileStore>(cfg.data_dir / "profiles");
    return w;
}

topology::SystemOptions system_options(const cli::CliConfig& cfg, const World& w, bool deterministic,
                                       bool try_http) {
    topology::SystemOptions opts;
    opts.mode = deterministic ? platform::SchedulerMode::Deterministic
                              : platform::SchedulerMode::Threaded;
    opts.topology = cfg.topology;
    opts.profile_store = w.profiles.get();
    if (try_http && !deterministic && !w.corpus.sites.empty()) {
        const auto bind = cli::parse_bind_address(cfg.bind_address);
        if (corpus::probe_site_service(bind.host, bind.port, w.corpus.sites.front().site_id)) {
            opts.http_host = bind.host;
            opts.http_port = bind.port;
        }
    }
    return opts;
}

int cmd_gen(const std::string& out_dir, std::uint64_t seed, int sites_per_category,
            int records_per_site) {
    const std::filesystem::path out = out_dir;
    std::filesystem::create_directories(out);

    const auto corp = corpus::generate_corpus(seed, sites_per_category, records_per_site);
    corpus::save_corpus(corp, out / "corpus");

    const auto dict = query::builtin_fixture_dictionary();
    {
        std::ofstream f(out / "dictionary.tsv", std::ios::binary);
        f << query::format_dictionary(dict);
    }

    const auto generated = bench::generate_query_suite(dict, seed);
    bench::save_suite(generated.suite, out / "suite.tsv");
    bench::save_judgments(bench::derive_judgments(generated, corp), out / "judgments.tsv", corp);

    if (!std::filesystem::exists(out / "users.txt")) {
        std::ofstream f(out / "users.txt", std::ios::binary);
        f << "demo\t127.0.0.1\n";
    }

    cli::CliConfig cfg;
    cfg.corpus_path = std::filesystem::absolute(out / "corpus");
    cfg.dictionary_path = std::filesystem::absolute(out / "dictionary.tsv");
    cfg.data_dir = std::filesystem::absolute(out);
    cfg.seed = seed;
    {
        std::ofstream f(out / "config.txt", std::ios::binary);
        f << cli::format_config(cfg);
    }

    std::cout << "generated " << corp.sites.size() << " sites, " << dict.size()
              << " dictionary entries, " << generated.suite.queries.size() << " queries under "
              << out.string() << '\n';
    return 0;
}

int cmd_serve(const cli::CliConfig& cfg) {
    World w = load_world(cfg);
    if (!w.gate->has_user("demo")) w.gate->register_user("demo", {"127.0.0.1"});

    const auto bind = cli::parse_bind_address(cfg.bind_address);
    corpus::SiteService service(w.corpus);
    const int port = service.start(bind.host, bind.port);

    topology::SystemOptions opts;
    opts.topology = cfg.topology;
    opts.profile_store = w.profiles.get();
    topology::SearchSystem system(w.corpus, opts);

    std::cout << "platform ready: " << system.agent_platform().get_available_locations().size()
              << " locations" << std::endl;
    std::cout << "site service on " << bind.host << ":" << port << std::endl;

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_interrupted) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    service.stop();
    std::cout << "shutting down" << std::endl;
    return 0;
}

int cmd_login(const cli::CliConfig& cfg, const std::string& user, const std::string& ip,
              const std::string& format) {
    World w = load_world(cfg);
    const auto session = w.gate->login({user, ip});
    if (format == "machine") {
        MachineDoc doc;
        doc.add("token", session.token);
        doc.add("user_id", session.user_id);
        doc.add_integer("expires_at_ms", session.expires_at_ms);
        std::cout << doc.to_string();
    } else {
        std::cout << "session token: " << session.token << '\n';
        std::cout << "expires at (epoch ms): " << session.expires_at_ms << '\n';
    }
    return 0;
}

int cmd_profile(const cli::CliConfig& cfg, const std::string& token,
                const std::vector<std::string>& assignments, const std::string& format) {
    World w = load_world(cfg);
    const auto session = w.gate->validate(resolve_token(token));
    std::map<std::string, std::string> form;
    for (const auto& a : assignments) {
        const auto eq = a.find('=');
        if (eq == std::string::npos) {
            raise(ErrorCode::InvalidArgument, "profile assignment needs key=value: " + a);
        }
        form[trim(a.substr(0, eq))] = trim(a.substr(eq + 1));
    }
    const auto profile = personal::create_or_update_profile(*w.profiles, session.user_id, form);
    if (format == "machine") {
        MachineDoc doc;
        doc.add("user_id", profile.user_id);
        doc.add("health_conditions", join(profile.health_conditions, ","));
        for (const auto& [k, v] : profile.preferences) {
            doc.add_number("preferences." + k, v);
        }
        std::cout << doc.to_string();
    } else {
        std::cout << profile.to_json().dump(2) << '\n';
    }
    return 0;
}

int cmd_query(const cli::CliConfig& cfg, const std::string& token, const std::string& text,
              const std::string& format, bool deterministic) {
    World w = load_world(cfg);
    const auto opts = system_options(cfg, w, deterministic, /*try_http=*/true);
    topology::SearchSystem system(w.corpus, opts);

    topology::EndToEndContext ctx;
    ctx.dictionary = &w.dictionary;
    ctx.gate = w.gate.get();
    ctx.profiles = w.profiles.get();
    ctx.system = &system;
    ctx.required_assurance = cfg.required_assurance;

    const auto result = topology::end_to_end_search(ctx, text, resolve_token(token));

    if (format == "machine") {
        MachineDoc doc;
        doc.add("query", text);
        doc.add("topology", topology::topology_name(cfg.topology));
        doc.add_integer("results", static_cast<long long>(result.items.size()));
        doc.add_number("pipeline_ms", result.pipeline_ms);
        doc.add_number("collection_ms", result.outcome.total_ms);
        doc.add_integer("messages_sent", result.outcome.messages_sent);
        for (std::size_t i = 0; i < result.items.size(); ++i) {
            const auto& item = result.items[i];
            const std::string p = "result." + std::to_string(i) + ".";
            doc.add(p + "record_id", item.record.record_id);
            doc.add(p + "disease", item.record.disease);
            doc.add_number(p + "score", item.score);
            doc.add(p + "sources", join(item.sources, ","));
            doc.add(p + "drugs", join(item.record.drugs, ","));
        }
        std::cout << doc.to_string();
    } else {
        std::cout << result.items.size() << " results (topology "
                  << topology::topology_name(cfg.topology) << ", collection "
                  << MachineDoc::format_number(result.outcome.total_ms) << " ms, pipeline "
                  << MachineDoc::format_number(result.pipeline_ms) << " ms)\n";
        std::vector<std::vector<std::string>> rows;
        rows.push_back({"#", "record", "disease", "score", "sources"});
        for (std::size_t i = 0; i < result.items.size(); ++i) {
            const auto& item = result.items[i];
            rows.push_back({std::to_string(i + 1), item.record.record_id, item.record.disease,
                            MachineDoc::format_number(item.score), join(item.sources, ",")});
        }
        print_table(rows);
        for (const auto& f : result.outcome.failures) std::cout << "failure: " << f << '\n';
    }
    return 0;
}

int cmd_bench(const cli::CliConfig& cfg, const std::string& topology_arg, int repetitions_override,
              double calibrate_ratio, const std::string& format, bool deterministic) {
    World w = load_world(cfg);

    bench::BenchmarkConfig bcfg;
    bcfg.c_msg = cfg.c_msg;
    bcfg.c_move = cfg.c_move;
    bcfg.kappa = cfg.kappa;
    bcfg.repetitions = repetitions_override > 0 ? repetitions_override : cfg.repetitions;

    std::vector<double> collects;
    for (const auto& site : w.corpus.sites) collects.push_back(site.collect_latency_ms);
    if (calibrate_ratio > 0) {
        bcfg.kappa = bench::calibrate_kappa(bcfg, collects, calibrate_ratio);
        std::cout << "calibrated kappa = " << MachineDoc::format_number(bcfg.kappa) << '\n';
    }

    const auto mode =
        deterministic ? platform::SchedulerMode::Deterministic : platform::SchedulerMode::Threaded;
    std::vector<topology::TopologyKind> kinds;
    if (topology_arg == "both") {
        kinds = {topology::TopologyKind::Static, topology::TopologyKind::Mobile};
    } else {
        kinds = {topology::topology_from_name(topology_arg)};
    }

    std::vector<bench::BenchmarkReport> reports;
    for (const auto kind : kinds) {
        reports.push_back(bench::run_benchmark(kind, bcfg, w.corpus, "bench", mode));
    }

    if (format == "machine") {
        for (std::size_t i = 0; i < reports.size(); ++i) {
            if (i) std::cout << '\n';
            std::cout << reports[i].to_machine().to_string();
        }
    } else {
        std::vector<std::vector<std::string>> rows;
        rows.push_back({"topology", "modeled_ms", "median_ms", "messages"});
        for (const auto& r : reports) {
            rows.push_back({topology::topology_name(r.topology),
                            MachineDoc::format_number(r.modeled_ms),
                            MachineDoc::format_number(r.median_measured_ms()),
                            std::to_string(r.messages_sent)});
        }
        print_table(rows);
    }
    return 0;
}

int cmd_eval(const cli::CliConfig& cfg, std::string suite_path, std::string judgments_path,
             const std::string& user, const std::string& ip, const std::string& format) {
    World w = load_world(cfg);
    if (suite_path.empty()) suite_path = (cfg.data_dir / "suite.tsv").string();
    if (judgments_path.empty()) judgments_path = (cfg.data_dir / "judgments.tsv").string();

    const auto suite = bench::load_suite(suite_path);
    const auto judgments = bench::load_judgments(judgments_path);

    if (!w.gate->has_user(user)) w.gate->register_user(user, {ip});
    const auto session = w.gate->login({user, ip});

    topology::SystemOptions opts;
    opts.mode = platform::SchedulerMode::Deterministic;
    opts.topology = cfg.topology;
    opts.profile_store = w.profiles.get();
    topology::SearchSystem system(w.corpus, opts);

    topology::EndToEndContext ctx;
    ctx.dictionary = &w.dictionary;
    ctx.gate = w.gate.get();
    ctx.profiles = w.profiles.get();
    ctx.system = &system;
    ctx.required_assurance = cfg.required_assurance;

    const auto report = bench::run_suite(suite, judgments, ctx, session.token);

    if (format == "machine") {
        std::cout << report.to_machine().to_string();
    } else {
        std::vector<std::vector<std::string>> rows;
        rows.push_back({"scope", "precision", "recall", "f_measure"});
        rows.push_back({"overall", MachineDoc::format_number(report.precision),
                        MachineDoc::format_number(report.recall),
                        MachineDoc::format_number(report.f_measure)});
        for (const auto& [cat, m] : report.per_category) {
            rows.push_back({cat, MachineDoc::format_number(m.precision),
                            MachineDoc::format_number(m.recall),
                            MachineDoc::format_number(m.f_measure)});
        }
        print_table(rows);
        std::cout << "queries run: " << report.queries_run
                  << ", coverage gaps: " << report.coverage_gaps << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-agent medical information search platform"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate corpus, dictionary, query suite and config");
    std::string gen_out = "data";
    std::uint64_t gen_seed = 1;
    int gen_spc = 1;
    int gen_rps = 8;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--sites-per-category", gen_spc, "sites per category");
    gen->add_option("--records-per-site", gen_rps, "records per site");

    std::string config_path;
    std::string format = "table";
    std::string token;
    bool deterministic = false;

    auto add_common = [&](CLI::App* cmd, bool with_format = true) {
        cmd->add_option("--config", config_path, "config file path")->required();
        if (with_format) {
            cmd->add_option("--format", format, "output format: table|machine")
                ->check(CLI::IsMember({"table", "machine"}));
        }
    };

    // serve
    auto* serve = app.add_subcommand("serve", "serve the corpus and boot the platform");
    add_common(serve, false);

    // login
    auto* login = app.add_subcommand("login", "authenticate and obtain a session token");
    std::string user = "demo";
    std::string ip = "127.0.0.1";
    add_common(login);
    login->add_option("--user", user, "user id");
    login->add_option("--ip", ip, "source IP address");

    // profile
    auto* profile = app.add_subcommand("profile", "create or update the user profile");
    std::vector<std::string> assignments;
    add_common(profile);
    profile->add_option("--token", token, "session token (else MEDSEARCH_TOKEN)");
    profile->add_option("--set", assignments, "field assignment key=value")->take_all();

    // query
    auto* query_cmd = app.add_subcommand("query", "run one end-to-end search");
    std::string text;
    add_common(query_cmd);
    query_cmd->add_option("--token", token, "session token (else MEDSEARCH_TOKEN)");
    query_cmd->add_option("text", text, "query text")->required();
    query_cmd->add_flag("--deterministic", deterministic, "virtual-time scheduler mode");
    std::string topology_override;
    query_cmd->add_option("--topology", topology_override, "topology override: static|mobile");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "run the timing benchmark");
    std::string bench_topology = "both";
    int repetitions_override = 0;
    double calibrate_ratio = 0.0;
    add_common(bench_cmd);
    bench_cmd->add_option("--topology", bench_topology, "static|mobile|both");
    bench_cmd->add_option("--repetitions", repetitions_override, "repetition override");
    bench_cmd->add_option("--calibrate-ratio", calibrate_ratio,
                          "solve kappa for this modeled mobile/static ratio");
    bench_cmd->add_flag("--deterministic", deterministic, "virtual-time scheduler mode");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "run the retrieval-quality suite");
    std::string suite_path;
    std::string judgments_path;
    std::string eval_user = "demo";
    std::string eval_ip = "127.0.0.1";
    add_common(eval_cmd);
    eval_cmd->add_option("--suite", suite_path, "suite file (default data_dir/suite.tsv)");
    eval_cmd->add_option("--judgments", judgments_path,
                         "judgments file (default data_dir/judgments.tsv)");
    eval_cmd->add_option("--user", eval_user, "user id for the suite session");
    eval_cmd->add_option("--ip", eval_ip, "source IP for the suite session");
    eval_cmd->add_option("--topology", topology_override, "topology override: static|mobile");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(gen_out, gen_seed, gen_spc, gen_rps);

        cli::CliConfig cfg = cli::load_config(config_path);
        if (!topology_override.empty()) cfg.topology = topology::topology_from_name(topology_override);

        if (serve->parsed()) return cmd_serve(cfg);
        if (login->parsed()) return cmd_login(cfg, user, ip, format);
        if (profile->parsed()) return cmd_profile(cfg, token, assignments, format);
        if (query_cmd->parsed()) return cmd_query(cfg, token, text, format, deterministic);
        if (bench_cmd->parsed()) {
            return cmd_bench(cfg, bench_topology, repetitions_override, calibrate_ratio, format,
                             deterministic);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(cfg, suite_path, judgments_path, eval_user, eval_ip, format);
        }
    } catch (const Error& e) {
        std::cerr << "error (" << error_code_name(e.code()) << "): " << e.what() << std::endl;
        return cli::exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
