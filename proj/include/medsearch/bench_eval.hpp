#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "medsearch/machine_format.hpp"
#include "medsearch/query_pipeline.hpp"
#include "medsearch/search_topologies.hpp"
#include "medsearch/site_corpus.hpp"

namespace medsearch::bench {

struct BenchmarkConfig {
    /// Per-site collect latency; cycled over the corpus site order.
    std::vector<double> site_latencies_ms;
    double c_msg = 0.0;   // per-message communication cost, ms
    double c_move = 0.0;  // per-migration cost, ms
    double kappa = 0.0;   // fractional slowdown per concurrently executing agent
    int repetitions = 1;
};

struct BenchmarkReport {
    topology::TopologyKind topology = topology::TopologyKind::Static;
    double modeled_ms = 0.0;
    std::vector<double> measured_ms;
    int messages_sent = 0;

    double median_measured_ms() const;
    nlohmann::ordered_json to_json() const;
    MachineDoc to_machine() const;
};

/// max_i(collect_i * (1 + kappa * n_agents)) + c_msg * m_static
double model_static_time(const BenchmarkConfig& cfg, const std::vector<double>& collect_ms,
                         int n_agents, int m_static);

/// sum_i(collect_i) + c_msg * m_mobile + c_move * n_moves
double model_mobile_time(const BenchmarkConfig& cfg, const std::vector<double>& collect_ms,
                         int m_mobile, int n_moves);

/// Solves kappa so that modeled mobile/static equals target_ratio for a
/// full-corpus run over these collect latencies (message counts 2+2k and 2,
/// k moves). Throws when no nonnegative kappa reaches the ratio.
double calibrate_kappa(const BenchmarkConfig& cfg, const std::vector<double>& collect_ms,
                       double target_ratio);

/// Boots a fresh system per repetition (back-to-back, never overlapped) with
/// the config's latencies injected into the corpus and measures the
/// collection phase on the platform clock.
BenchmarkReport run_benchmark(topology::TopologyKind topology, const BenchmarkConfig& cfg,
                              const corpus::Corpus& base_corpus, const std::string& query_term,
                              platform::SchedulerMode mode);

double precision(const std::set<std::string>& retrieved, const std::set<std::string>& relevant);
double recall(const std::set<std::string>& retrieved, const std::set<std::string>& relevant);
double f_measure(double p, double r);

struct SuiteQuery {
    std::string query_id;
    std::string category;
    std::string raw;
};

struct QuerySuite {
    std::vector<SuiteQuery> queries;
};

struct GeneratedSuite {
    QuerySuite suite;
    /// The intended (pre-misspelling, pre-expansion) terms per query;
    /// ground truth for judgment derivation.
    std::map<std::string, std::vector<std::string>> seed_terms;
};

/// 225 queries by default, 17–18 per category: plain terms, two-term
/// queries, misspellings, stopword-padded phrasings and synonym forms drawn
/// from the dictionary's per-category vocabulary.
GeneratedSuite generate_query_suite(const query::Dictionary& dict, std::uint64_t seed,
                                    int total = 225);

struct RelevanceJudgments {
    std::map<std::string, std::set<std::string>> relevant;  // query_id -> record ids
    std::set<std::string> covered;

    bool covers(const std::string& query_id) const { return covered.count(query_id) > 0; }
};

/// Ground-truth judgments: a record is relevant to a query iff its disease
/// field contains one of the query's seed terms (the module matching rule),
/// scanned over the whole corpus regardless of category or assurance.
RelevanceJudgments derive_judgments(const GeneratedSuite& generated, const corpus::Corpus& corpus);

// Suite file: query_id<TAB>category<TAB>raw query.
void save_suite(const QuerySuite& suite, const std::filesystem::path& file);
QuerySuite load_suite(const std::filesystem::path& file);

// Judgments file: query_id<TAB>record_id<TAB>relevance(0|1). Zero rows mark
// coverage for queries with no relevant records.
void save_judgments(const RelevanceJudgments& judgments, const std::filesystem::path& file,
                    const corpus::Corpus& corpus);
RelevanceJudgments load_judgments(const std::filesystem::path& file);

struct PerQueryResult {
    std::string query_id;
    std::string category;
    std::set<std::string> retrieved;
    std::set<std::string> relevant;
};

struct CategoryMetrics {
    long long retrieved = 0;
    long long relevant = 0;
    long long hits = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
};

struct MetricsReport {
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
    long long queries_run = 0;
    long long coverage_gaps = 0;
    std::map<std::string, CategoryMetrics> per_category;
    std::vector<PerQueryResult> per_query;

    nlohmann::ordered_json to_json() const;
    MachineDoc to_machine() const;
};

/// Micro-averaged fold over raw per-query sets. run_suite uses this;
/// acceptance recomputes it independently.
MetricsReport metrics_from_per_query(const std::vector<PerQueryResult>& per_query,
                                     long long coverage_gaps);

/// Runs end_to_end_search for every covered query, collects retrieved record
/// ids (merged items contribute all constituents) and folds the metrics.
MetricsReport run_suite(const QuerySuite& suite, const RelevanceJudgments& judgments,
                        topology::EndToEndContext& ctx, const std::string& session_token);

} // namespace medsearch::bench
