#pragma once

#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "medsearch/agent_platform.hpp"
#include "medsearch/personalization.hpp"
#include "medsearch/query_pipeline.hpp"
#include "medsearch/security_gate.hpp"
#include "medsearch/site_corpus.hpp"

namespace medsearch::topology {

enum class TopologyKind { Static, Mobile };

const char* topology_name(TopologyKind kind);
TopologyKind topology_from_name(const std::string& name);

struct ItineraryPlan {
    std::vector<platform::Location> locations;
    std::string conversation_id;
};

struct CollectionOutcome {
    std::vector<personal::ResultItem> items;
    std::map<std::string, double> per_location_ms;
    int messages_sent = 0;
    double total_ms = 0.0;
    std::vector<std::string> failures;
};

/// Locations whose categories intersect the target set and whose assurance
/// level passes the check, original order preserved.
std::vector<platform::Location> filter_locations(const std::vector<platform::Location>& all,
                                                 const std::set<std::string>& categories,
                                                 int required_assurance);

/// Interface-agent behavior: resolves per-conversation futures when the
/// final INFORM arrives, stamping the delivery time.
class ReplySink : public platform::Behavior {
public:
    struct Reply {
        platform::Message msg;
        double t_ms = 0.0;
    };

    std::future<Reply> expect(const std::string& conversation_id);
    void on_message(const platform::Message& msg, platform::AgentContext& ctx) override;

private:
    std::mutex mu_;
    std::map<std::string, std::promise<Reply>> waiting_;
};

/// Every site-bound artifact produced during collection: the payloads handed
/// to web/mobile agents and the fetch paths they issued. This is the surface
/// the security scanners audit.
class OutboundLog {
public:
    void add_payload(nlohmann::json payload);
    void add_fetch(const std::string& path);
    std::vector<nlohmann::json> payloads() const;
    std::vector<std::string> fetches() const;

private:
    mutable std::mutex mu_;
    std::vector<nlohmann::json> payloads_;
    std::vector<std::string> fetches_;
};

struct SystemOptions {
    platform::SchedulerMode mode = platform::SchedulerMode::Threaded;
    TopologyKind topology = TopologyKind::Static;
    double msg_cost_ms = 0.0;
    double move_cost_ms = 0.0;
    /// Contention coefficient: static web agents scale their collect latency
    /// by (1 + kappa * n_dispatched). In-process transport only.
    double kappa = 0.0;
    bool trace_enabled = true;
    /// When http_port > 0, agents fetch over loopback HTTP instead of the
    /// in-process corpus.
    std::string http_host = "127.0.0.1";
    int http_port = 0;
    personal::ProfileStore* profile_store = nullptr;
};

/// One booted Fig.1 world: platform + locations from the corpus + the agent
/// set for the configured topology (interface, profile, query-mod,
/// personalize, coordinator, and per-site web agents when static).
class SearchSystem {
public:
    SearchSystem(corpus::Corpus corpus, SystemOptions opts);
    ~SearchSystem();

    SearchSystem(const SearchSystem&) = delete;
    SearchSystem& operator=(const SearchSystem&) = delete;

    platform::Platform& agent_platform();
    const corpus::Corpus& site_corpus() const;
    const SystemOptions& options() const;
    const OutboundLog& outbound_log() const;

    void set_broken_site(const std::string& site_id, bool broken);

    /// Drives one collection conversation through the agents and blocks for
    /// the outcome. `profile` non-null routes the outcome through the
    /// personalize agent for ranking before delivery to the interface.
    CollectionOutcome run_collection(const std::set<std::string>& categories, int required_assurance,
                                     const nlohmann::json& sanitized_payload,
                                     const std::string& conversation_id,
                                     const personal::UserProfile* profile = nullptr);

    /// Round-trips through the user-profile agent.
    personal::UserProfile fetch_profile(const std::string& user_id,
                                        const std::string& conversation_id);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

CollectionOutcome run_static(SearchSystem& system, const query::AnnotatedQuery& annotated,
                             const nlohmann::json& sanitized_payload, int required_assurance,
                             const std::string& conversation_id);

CollectionOutcome run_mobile(SearchSystem& system, const query::AnnotatedQuery& annotated,
                             const nlohmann::json& sanitized_payload, int required_assurance,
                             const std::string& conversation_id);

struct EndToEndContext {
    const query::Dictionary* dictionary = nullptr;
    security::SecurityGate* gate = nullptr;
    personal::ProfileStore* profiles = nullptr;
    SearchSystem* system = nullptr;
    int required_assurance = 2;
};

struct SearchResult {
    std::vector<personal::ResultItem> items;
    CollectionOutcome outcome;
    query::AnnotatedQuery annotated;
    double pipeline_ms = 0.0;
    std::string conversation_id;
};

/// Full §-style flow: authenticate, fetch profile (via the profile agent),
/// annotate + enrich, pseudonymize, collect per the configured topology,
/// post-process through the personalize agent, deliver ranked items.
SearchResult end_to_end_search(EndToEndContext& ctx, const std::string& raw_query,
                               const std::string& session_token);

// JSON codecs shared by the agent payloads.
nlohmann::json result_item_to_json(const personal::ResultItem& item);
personal::ResultItem result_item_from_json(const nlohmann::json& j);

} // namespace medsearch::topology
