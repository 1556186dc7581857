#include "medsearch/bench_eval.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "medsearch/errors.hpp"
#include "medsearch/taxonomy.hpp"
#include "medsearch/text_util.hpp"

namespace medsearch::bench {

double BenchmarkReport::median_measured_ms() const {
    if (measured_ms.empty()) return 0.0;
    std::vector<double> sorted = measured_ms;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    return n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
}

nlohmann::ordered_json BenchmarkReport::to_json() const {
    nlohmann::ordered_json j;
    j["topology"] = topology::topology_name(topology);
    j["modeled_ms"] = modeled_ms;
    j["measured_ms"] = measured_ms;
    j["median_measured_ms"] = median_measured_ms();
    j["messages_sent"] = messages_sent;
    return j;
}

MachineDoc BenchmarkReport::to_machine() const {
    MachineDoc doc;
    doc.add("topology", topology::topology_name(topology));
    doc.add_number("modeled_ms", modeled_ms);
    std::vector<std::string> vals;
    for (const double v : measured_ms) vals.push_back(MachineDoc::format_number(v));
    doc.add("measured_ms", join(vals, ","));
    doc.add_number("median_measured_ms", median_measured_ms());
    doc.add_integer("messages_sent", messages_sent);
    return doc;
}

double model_static_time(const BenchmarkConfig& cfg, const std::vector<double>& collect_ms,
                         int n_agents, int m_static) {
    if (collect_ms.empty()) raise(ErrorCode::InvalidArgument, "model needs at least one site");
    const double contention = 1.0 + cfg.kappa * static_cast<double>(n_agents);
    double worst = 0.0;
    for (const double c : collect_ms) worst = std::max(worst, c * contention);
    return worst + cfg.c_msg * static_cast<double>(m_static);
}

double model_mobile_time(const BenchmarkConfig& cfg, const std::vector<double>& collect_ms,
                         int m_mobile, int n_moves) {
    if (collect_ms.empty()) raise(ErrorCode::InvalidArgument, "model needs at least one site");
    double sum = 0.0;
    for (const double c : collect_ms) sum += c;
    return sum + cfg.c_msg * static_cast<double>(m_mobile) +
           cfg.c_move * static_cast<double>(n_moves);
}

double calibrate_kappa(const BenchmarkConfig& cfg, const std::vector<double>& collect_ms,
                       double target_ratio) {
    if (target_ratio <= 0.0) raise(ErrorCode::InvalidArgument, "target ratio must be positive");
    const int k = static_cast<int>(collect_ms.size());
    const double mobile = model_mobile_time(cfg, collect_ms, 2, k);
    const double static_needed = mobile / target_ratio;
    const double worst = *std::max_element(collect_ms.begin(), collect_ms.end());
    if (worst <= 0.0) raise(ErrorCode::InvalidArgument, "collect latencies must be positive");
    const double contention = (static_needed - cfg.c_msg * static_cast<double>(2 + 2 * k)) / worst;
    const double kappa = (contention - 1.0) / static_cast<double>(k);
    if (kappa < 0.0) {
        raise(ErrorCode::InvalidArgument, "no nonnegative kappa reaches the requested ratio");
    }
    return kappa;
}

BenchmarkReport run_benchmark(topology::TopologyKind topo, const BenchmarkConfig& cfg,
                              const corpus::Corpus& base_corpus, const std::string& query_term,
                              platform::SchedulerMode mode) {
    if (cfg.repetitions < 1) raise(ErrorCode::InvalidArgument, "repetitions must be >= 1");
    if (base_corpus.sites.empty()) raise(ErrorCode::InvalidArgument, "benchmark needs a corpus");

    corpus::Corpus corp = base_corpus;
    std::vector<double> collects;
    for (std::size_t i = 0; i < corp.sites.size(); ++i) {
        if (!cfg.site_latencies_ms.empty()) {
            corp.sites[i].collect_latency_ms = cfg.site_latencies_ms[i % cfg.site_latencies_ms.size()];
        }
        collects.push_back(corp.sites[i].collect_latency_ms);
    }
    const int k = static_cast<int>(corp.sites.size());

    BenchmarkReport report;
    report.topology = topo;
    report.modeled_ms = topo == topology::TopologyKind::Static
                            ? model_static_time(cfg, collects, k, 2 + 2 * k)
                            : model_mobile_time(cfg, collects, 2, k);

    const std::set<std::string> all_categories = [] {
        std::set<std::string> s;
        for (const auto& c : kCategories) s.emplace(c);
        return s;
    }();
    nlohmann::json payload;
    payload["probe_terms"] = std::vector<std::string>{query_term};
    payload["record_key"] = "bench";

    for (int rep = 0; rep < cfg.repetitions; ++rep) {
        topology::SystemOptions opts;
        opts.mode = mode;
        opts.topology = topo;
        opts.msg_cost_ms = cfg.c_msg;
        opts.move_cost_ms = cfg.c_move;
        opts.kappa = cfg.kappa;
        topology::SearchSystem system(corp, opts);
        const auto outcome = system.run_collection(all_categories, 0, payload,
                                                   "bench-" + std::to_string(rep));
        report.measured_ms.push_back(outcome.total_ms);
        if (rep == 0) report.messages_sent = outcome.messages_sent;
    }
    return report;
}

double precision(const std::set<std::string>& retrieved, const std::set<std::string>& relevant) {
    if (retrieved.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& r : retrieved) hits += relevant.count(r);
    return static_cast<double>(hits) / static_cast<double>(retrieved.size());
}

double recall(const std::set<std::string>& retrieved, const std::set<std::string>& relevant) {
    if (relevant.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& r : retrieved) hits += relevant.count(r);
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double f_measure(double p, double r) {
    if (p + r <= 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

namespace {

std::vector<std::string> category_terms(const query::Dictionary& dict, const std::string& category) {
    std::vector<std::string> out;
    const auto* index = dict.language_index("en");
    if (!index) return out;
    for (const auto& [term, entry] : *index) {
        if (entry.kind == query::EntryKind::Term && entry.categories.count(category)) {
            out.push_back(term);
        }
    }
    return out;  // map iteration: already sorted
}

std::string misspell(const std::string& term, std::mt19937_64& rng, const query::Dictionary& dict) {
    static const char* alphabet = "abcdefghijklmnopqrstuvwxyz";
    for (int attempt = 0; attempt < 8; ++attempt) {
        std::string out = term;
        const auto op = pick(rng, 3);
        const std::size_t pos = pick(rng, out.size());
        if (op == 0 && out.size() > 3) {
            out.erase(pos, 1);
        } else if (op == 1) {
            out[pos] = alphabet[pick(rng, 26)];
        } else {
            out.insert(pos, 1, alphabet[pick(rng, 26)]);
        }
        // The typo must not be another dictionary word, or the correction
        // target would drift from the seed term.
        if (out != term && !dict.find("en", out)) return out;
    }
    return term;
}

} // namespace

GeneratedSuite generate_query_suite(const query::Dictionary& dict, std::uint64_t seed, int total) {
    if (total < static_cast<int>(kCategories.size())) {
        raise(ErrorCode::InvalidArgument, "suite must cover all categories");
    }
    std::mt19937_64 rng(seed);
    GeneratedSuite out;

    const int base = total / static_cast<int>(kCategories.size());
    int extra = total % static_cast<int>(kCategories.size());

    int qno = 0;
    for (const auto& category_view : kCategories) {
        const std::string category(category_view);
        const auto terms = category_terms(dict, category);
        if (terms.empty()) raise(ErrorCode::InvalidArgument, "no dictionary terms for " + category);
        const int count = base + (extra > 0 ? 1 : 0);
        if (extra > 0) --extra;

        for (int i = 0; i < count; ++i) {
            ++qno;
            char idbuf[16];
            std::snprintf(idbuf, sizeof(idbuf), "q%03d", qno);
            SuiteQuery q;
            q.query_id = idbuf;
            q.category = category;

            const std::string& term = terms[pick(rng, terms.size())];
            std::vector<std::string> seeds{term};
            switch (i % 5) {
                case 0:
                    q.raw = term;
                    break;
                case 1: {
                    const std::string& second = terms[pick(rng, terms.size())];
                    q.raw = term + " and " + second;
                    if (second != term) seeds.push_back(second);
                    break;
                }
                case 2:
                    q.raw = misspell(term, rng, dict);
                    break;
                case 3:
                    q.raw = "what is " + term;
                    break;
                default: {
                    const auto* entry = dict.find("en", term);
                    if (entry && !entry->synonyms.empty()) {
                        q.raw = entry->synonyms.front();
                        seeds = {entry->synonyms.front()};
                    } else {
                        q.raw = term + " disease";
                    }
                    break;
                }
            }
            out.seed_terms[q.query_id] = std::move(seeds);
            out.suite.queries.push_back(std::move(q));
        }
    }
    return out;
}

RelevanceJudgments derive_judgments(const GeneratedSuite& generated, const corpus::Corpus& corpus) {
    RelevanceJudgments out;
    for (const auto& q : generated.suite.queries) {
        std::set<std::string> relevant;
        const auto it = generated.seed_terms.find(q.query_id);
        if (it != generated.seed_terms.end()) {
            for (const auto& site : corpus.sites) {
                for (const auto& rec : site.records) {
                    for (const auto& seed : it->second) {
                        if (corpus::disease_matches(rec.disease, seed)) {
                            relevant.insert(rec.record_id);
                            break;
                        }
                    }
                }
            }
        }
        out.covered.insert(q.query_id);
        out.relevant[q.query_id] = std::move(relevant);
    }
    return out;
}

void save_suite(const QuerySuite& suite, const std::filesystem::path& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) raise(ErrorCode::ConfigError, "cannot write suite file: " + file.string());
    for (const auto& q : suite.queries) {
        out << q.query_id << '\t' << q.category << '\t' << q.raw << '\n';
    }
}

QuerySuite load_suite(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) raise(ErrorCode::ConfigError, "cannot open suite file: " + file.string());
    QuerySuite suite;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line, '\t');
        if (fields.size() != 3) {
            raise(ErrorCode::ParseError, "suite line " + std::to_string(line_no) + ": need 3 fields");
        }
        if (!is_category(fields[1])) {
            raise(ErrorCode::ParseError, "suite line " + std::to_string(line_no) + ": bad category");
        }
        suite.queries.push_back({fields[0], fields[1], fields[2]});
    }
    return suite;
}

void save_judgments(const RelevanceJudgments& judgments, const std::filesystem::path& file,
                    const corpus::Corpus& corpus) {
    std::ofstream out(file, std::ios::binary);
    if (!out) raise(ErrorCode::ConfigError, "cannot write judgments file: " + file.string());
    const std::string fallback =
        corpus.sites.empty() || corpus.sites.front().records.empty()
            ? ""
            : corpus.sites.front().records.front().record_id;
    for (const auto& qid : judgments.covered) {
        const auto it = judgments.relevant.find(qid);
        if (it == judgments.relevant.end() || it->second.empty()) {
            if (!fallback.empty()) out << qid << '\t' << fallback << "\t0\n";
            continue;
        }
        for (const auto& rid : it->second) out << qid << '\t' << rid << "\t1\n";
    }
}

RelevanceJudgments load_judgments(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) raise(ErrorCode::ConfigError, "cannot open judgments file: " + file.string());
    RelevanceJudgments out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line, '\t');
        if (fields.size() != 3 || (fields[2] != "0" && fields[2] != "1")) {
            raise(ErrorCode::ParseError,
                  "judgments line " + std::to_string(line_no) + ": need qid, rid, 0|1");
        }
        out.covered.insert(fields[0]);
        if (fields[2] == "1") out.relevant[fields[0]].insert(fields[1]);
    }
    return out;
}

MetricsReport metrics_from_per_query(const std::vector<PerQueryResult>& per_query,
                                     long long coverage_gaps) {
    MetricsReport report;
    report.coverage_gaps = coverage_gaps;
    long long total_retrieved = 0;
    long long total_relevant = 0;
    long long total_hits = 0;
    for (const auto& q : per_query) {
        ++report.queries_run;
        long long hits = 0;
        for (const auto& r : q.retrieved) hits += q.relevant.count(r);
        total_retrieved += static_cast<long long>(q.retrieved.size());
        total_relevant += static_cast<long long>(q.relevant.size());
        total_hits += hits;
        auto& cat = report.per_category[q.category];
        cat.retrieved += static_cast<long long>(q.retrieved.size());
        cat.relevant += static_cast<long long>(q.relevant.size());
        cat.hits += hits;
    }
    auto finish = [](long long hits, long long retrieved, long long relevant, double& p, double& r,
                     double& f) {
        p = retrieved > 0 ? static_cast<double>(hits) / static_cast<double>(retrieved) : 0.0;
        r = relevant > 0 ? static_cast<double>(hits) / static_cast<double>(relevant) : 0.0;
        f = f_measure(p, r);
    };
    finish(total_hits, total_retrieved, total_relevant, report.precision, report.recall,
           report.f_measure);
    for (auto& [_, cat] : report.per_category) {
        finish(cat.hits, cat.retrieved, cat.relevant, cat.precision, cat.recall, cat.f_measure);
    }
    report.per_query = per_query;
    return report;
}

MetricsReport run_suite(const QuerySuite& suite, const RelevanceJudgments& judgments,
                        topology::EndToEndContext& ctx, const std::string& session_token) {
    std::vector<PerQueryResult> per_query;
    long long gaps = 0;
    for (const auto& q : suite.queries) {
        if (!judgments.covers(q.query_id)) {
            ++gaps;
            continue;
        }
        PerQueryResult result;
        result.query_id = q.query_id;
        result.category = q.category;
        const auto it = judgments.relevant.find(q.query_id);
        if (it != judgments.relevant.end()) result.relevant = it->second;
        try {
            const auto search = topology::end_to_end_search(ctx, q.raw, session_token);
            for (const auto& item : search.items) {
                for (const auto& rid : item.constituent_record_ids) result.retrieved.insert(rid);
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EmptyQuery) throw;
            // degenerate query: counted with an empty retrieved set
        }
        per_query.push_back(std::move(result));
    }
    return metrics_from_per_query(per_query, gaps);
}

nlohmann::ordered_json MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["precision"] = precision;
    j["recall"] = recall;
    j["f_measure"] = f_measure;
    j["queries_run"] = queries_run;
    j["coverage_gaps"] = coverage_gaps;
    j["per_category"] = nlohmann::ordered_json::object();
    for (const auto& [cat, m] : per_category) {
        nlohmann::ordered_json jc;
        jc["retrieved"] = m.retrieved;
        jc["relevant"] = m.relevant;
        jc["hits"] = m.hits;
        jc["precision"] = m.precision;
        jc["recall"] = m.recall;
        jc["f_measure"] = m.f_measure;
        j["per_category"][cat] = std::move(jc);
    }
    j["per_query"] = nlohmann::ordered_json::array();
    for (const auto& q : per_query) {
        nlohmann::ordered_json jq;
        jq["query_id"] = q.query_id;
        jq["category"] = q.category;
        jq["retrieved"] = std::vector<std::string>(q.retrieved.begin(), q.retrieved.end());
        jq["relevant"] = std::vector<std::string>(q.relevant.begin(), q.relevant.end());
        j["per_query"].push_back(std::move(jq));
    }
    return j;
}

MachineDoc MetricsReport::to_machine() const {
    MachineDoc doc;
    doc.add_number("precision", precision);
    doc.add_number("recall", recall);
    doc.add_number("f_measure", f_measure);
    doc.add_integer("queries_run", queries_run);
    doc.add_integer("coverage_gaps", coverage_gaps);
    for (const auto& [cat, m] : per_category) {
        doc.add_number("category." + cat + ".precision", m.precision);
        doc.add_number("category." + cat + ".recall", m.recall);
        doc.add_number("category." + cat + ".f_measure", m.f_measure);
    }
    return doc;
}

} // namespace medsearch::bench
