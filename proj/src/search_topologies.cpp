#include "medsearch/search_topologies.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>

#include "medsearch/errors.hpp"
#include "medsearch/text_util.hpp"

namespace medsearch::topology {

using platform::AgentContext;
using platform::AgentId;
using platform::Location;
using platform::Message;
using platform::Performative;

const char* topology_name(TopologyKind kind) {
    return kind == TopologyKind::Static ? "static" : "mobile";
}

TopologyKind topology_from_name(const std::string& name) {
    const std::string n = to_lower_ascii(name);
    if (n == "static") return TopologyKind::Static;
    if (n == "mobile") return TopologyKind::Mobile;
    raise(ErrorCode::ConfigError, "unknown topology: " + name);
}

std::vector<Location> filter_locations(const std::vector<Location>& all,
                                       const std::set<std::string>& categories,
                                       int required_assurance) {
    std::vector<Location> out;
    for (const auto& loc : all) {
        const bool category_hit = std::any_of(loc.categories.begin(), loc.categories.end(),
                                              [&](const std::string& c) { return categories.count(c) > 0; });
        if (category_hit && security::check_assurance(loc.assurance_level, required_assurance)) {
            out.push_back(loc);
        }
    }
    return out;
}

// --- ReplySink ---

std::future<ReplySink::Reply> ReplySink::expect(const std::string& conversation_id) {
    std::lock_guard<std::mutex> lk(mu_);
    auto [it, inserted] = waiting_.emplace(conversation_id, std::promise<Reply>{});
    if (!inserted) raise(ErrorCode::InvalidArgument, "conversation already awaited: " + conversation_id);
    return it->second.get_future();
}

void ReplySink::on_message(const Message& msg, AgentContext& ctx) {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = waiting_.find(msg.conversation_id);
    if (it == waiting_.end()) return;  // unsolicited or late; drop
    it->second.set_value(Reply{msg, ctx.now_ms()});
    waiting_.erase(it);
}

// --- OutboundLog ---

void OutboundLog::add_payload(nlohmann::json payload) {
    std::lock_guard<std::mutex> lk(mu_);
    payloads_.push_back(std::move(payload));
}

void OutboundLog::add_fetch(const std::string& path) {
    std::lock_guard<std::mutex> lk(mu_);
    fetches_.push_back(path);
}

std::vector<nlohmann::json> OutboundLog::payloads() const {
    std::lock_guard<std::mutex> lk(mu_);
    return payloads_;
}

std::vector<std::string> OutboundLog::fetches() const {
    std::lock_guard<std::mutex> lk(mu_);
    return fetches_;
}

// --- shared helpers ---

namespace {

constexpr const char* kInterface = "interface";
constexpr const char* kProfileAgent = "profile";
constexpr const char* kQueryMod = "query-mod";
constexpr const char* kPersonalize = "personalize";
constexpr const char* kCoordinator = "coordinator";
constexpr const char* kWebPrefix = "web-";

bool is_collection_role(const std::string& name) {
    return name == kQueryMod || name == kCoordinator || name == "ams" ||
           name.rfind(kWebPrefix, 0) == 0;
}

struct BrokenSites {
    mutable std::mutex mu;
    std::set<std::string> sites;

    bool contains(const std::string& site_id) const {
        std::lock_guard<std::mutex> lk(mu);
        return sites.count(site_id) > 0;
    }
    void set(const std::string& site_id, bool broken) {
        std::lock_guard<std::mutex> lk(mu);
        if (broken) {
            sites.insert(site_id);
        } else {
            sites.erase(site_id);
        }
    }
};

class BrokenGuardFetcher : public corpus::SiteFetcher {
public:
    BrokenGuardFetcher(std::unique_ptr<corpus::SiteFetcher> inner, std::shared_ptr<BrokenSites> broken)
        : inner_(std::move(inner)), broken_(std::move(broken)) {}

    std::string fetch(const std::string& path) override {
        // path shape: /site/{id}[...]
        if (path.rfind("/site/", 0) == 0) {
            std::string rest = path.substr(6);
            const auto cut = rest.find_first_of("/?");
            const std::string site_id = cut == std::string::npos ? rest : rest.substr(0, cut);
            if (broken_->contains(site_id)) {
                raise(ErrorCode::FetchError, "site unreachable: " + site_id);
            }
        }
        return inner_->fetch(path);
    }

private:
    std::unique_ptr<corpus::SiteFetcher> inner_;
    std::shared_ptr<BrokenSites> broken_;
};

class LoggingFetcher : public corpus::SiteFetcher {
public:
    LoggingFetcher(std::unique_ptr<corpus::SiteFetcher> inner, OutboundLog* log)
        : inner_(std::move(inner)), log_(log) {}

    std::string fetch(const std::string& path) override {
        log_->add_fetch(path);
        return inner_->fetch(path);
    }

private:
    std::unique_ptr<corpus::SiteFetcher> inner_;
    OutboundLog* log_;
};

struct FetcherHandle {
    std::unique_ptr<corpus::SiteFetcher> fetcher;
    corpus::InProcessFetcher* inproc = nullptr;
};

using FetcherFactory = std::function<FetcherHandle(corpus::SleepFn)>;

/// Runs every probe term through the Algorithm-1 scrape against one site and
/// unions the hits, remembering which probes matched each record.
nlohmann::json collect_from_site(corpus::SiteFetcher& fetcher, const Location& loc,
                                 const std::vector<std::string>& probes) {
    std::map<std::string, nlohmann::json> by_record;
    for (const auto& term : probes) {
        for (const auto& rec : corpus::get_results(fetcher, loc.site_id, term)) {
            auto it = by_record.find(rec.record_id);
            if (it == by_record.end()) {
                nlohmann::json entry;
                entry["record_id"] = rec.record_id;
                entry["disease"] = rec.disease;
                entry["description"] = rec.description;
                entry["drugs"] = rec.drugs;
                entry["matched"] = nlohmann::json::array({term});
                entry["location_id"] = loc.location_id;
                entry["site_id"] = loc.site_id;
                entry["category"] = loc.categories.empty() ? "" : loc.categories.front();
                entry["assurance_level"] = loc.assurance_level;
                by_record.emplace(rec.record_id, std::move(entry));
            } else {
                it->second["matched"].push_back(term);
            }
        }
    }
    nlohmann::json records = nlohmann::json::array();
    for (auto& [_, entry] : by_record) records.push_back(std::move(entry));
    return records;
}

std::vector<std::string> probes_from_payload(const nlohmann::json& payload) {
    std::vector<std::string> probes;
    const nlohmann::json terms = payload.value("probe_terms", nlohmann::json::array());
    for (const auto& p : terms) {
        probes.push_back(p.get<std::string>());
    }
    return probes;
}

// --- agent behaviors ---

class ProfileAgentBehavior : public platform::Behavior {
public:
    explicit ProfileAgentBehavior(personal::ProfileStore* store) : store_(store) {}

    void on_message(const Message& msg, AgentContext& ctx) override {
        if (msg.performative != Performative::Request) return;
        const std::string user_id = msg.content.value("user_id", "");
        const std::string reply_to = msg.content.value("reply_to", std::string(kInterface));
        personal::UserProfile profile;
        profile.user_id = user_id;
        if (store_) profile = store_->load_or_create(user_id);
        ctx.send(Performative::Inform, reply_to, msg.conversation_id,
                 {{"profile", profile.to_json()}});
    }

private:
    personal::ProfileStore* store_;
};

class PersonalizeBehavior : public platform::Behavior {
public:
    void on_message(const Message& msg, AgentContext& ctx) override {
        if (msg.performative != Performative::Request) return;
        const std::string reply_to = msg.content.value("reply_to", std::string(kInterface));
        const nlohmann::json& outcome = msg.content.at("outcome");
        personal::UserProfile profile;
        if (msg.content.contains("profile")) {
            profile = personal::UserProfile::from_json(msg.content["profile"]);
        }
        std::vector<personal::ResultItem> items;
        const nlohmann::json records = outcome.value("records", nlohmann::json::array());
        for (const auto& entry : records) {
            items.push_back(result_item_from_json(entry));
        }
        items = personal::resolve_conflicts(std::move(items));
        items = personal::merge_similar(std::move(items));
        items = personal::rank_and_sort(std::move(items), profile);

        nlohmann::json ranked = nlohmann::json::array();
        for (const auto& item : items) ranked.push_back(result_item_to_json(item));
        nlohmann::json reply;
        reply["items"] = std::move(ranked);
        reply["per_location_ms"] = outcome.value("per_location_ms", nlohmann::json::object());
        reply["failures"] = outcome.value("failures", nlohmann::json::array());
        ctx.send(Performative::Inform, reply_to, msg.conversation_id, std::move(reply));
    }
};

/// The agent-for-modification-of-the-query in its choreography role: finds
/// the coordination service, forwards the collection request, and routes the
/// completed outcome onward (personalize agent when ranking was requested,
/// straight back to the requester otherwise).
class QueryModBehavior : public platform::Behavior {
public:
    void on_message(const Message& msg, AgentContext& ctx) override {
        if (msg.performative == Performative::Request) {
            start(msg, ctx);
            return;
        }
        auto it = pending_.find(msg.conversation_id);
        if (it == pending_.end()) return;
        Pending pending = std::move(it->second);
        pending_.erase(it);
        if (msg.performative == Performative::Failure) {
            ctx.send(Performative::Failure, pending.reply_to, msg.conversation_id, msg.content);
            return;
        }
        if (!pending.profile.is_null()) {
            ctx.send(Performative::Request, kPersonalize, msg.conversation_id,
                     {{"outcome", msg.content},
                      {"profile", pending.profile},
                      {"reply_to", pending.reply_to}});
        } else {
            ctx.send(Performative::Inform, pending.reply_to, msg.conversation_id, msg.content);
        }
    }

private:
    struct Pending {
        std::string reply_to;
        nlohmann::json profile;  // null when ranking not requested
    };

    void start(const Message& msg, AgentContext& ctx) {
        const std::string reply_to = msg.content.value("reply_to", std::string(kInterface));
        const auto coordinators = ctx.search_service("coordinator");
        if (coordinators.empty()) {
            ctx.send(Performative::Failure, reply_to, msg.conversation_id,
                     {{"error", "no coordination service registered"}});
            return;
        }
        Pending pending;
        pending.reply_to = reply_to;
        pending.profile =
            msg.content.contains("profile") ? msg.content["profile"] : nlohmann::json(nullptr);
        pending_[msg.conversation_id] = std::move(pending);
        ctx.send(Performative::Request, coordinators.front().name, msg.conversation_id,
                 {{"payload", msg.content.at("payload")},
                  {"categories", msg.content.at("categories")},
                  {"required_assurance", msg.content.at("required_assurance")}});
    }

    std::map<std::string, Pending> pending_;
};

/// Fig.2 web agent: owns one site, answers collection requests by scraping
/// its site once per probe term.
class WebAgentBehavior : public platform::Behavior {
public:
    WebAgentBehavior(Location loc, FetcherFactory factory, OutboundLog* log)
        : loc_(std::move(loc)), factory_(std::move(factory)), log_(log) {}

    void on_message(const Message& msg, AgentContext& ctx) override {
        if (msg.performative != Performative::Request) return;
        ensure_fetcher(ctx);
        const nlohmann::json& payload = msg.content.at("payload");
        log_->add_payload(payload);
        if (handle_.inproc) handle_.inproc->set_latency_scale(payload.value("latency_scale", 1.0));
        const double t0 = ctx.now_ms();
        try {
            nlohmann::json records = collect_from_site(*handle_.fetcher, loc_, probes_from_payload(payload));
            ctx.send(Performative::Confirm, msg.sender.name, msg.conversation_id,
                     {{"location_id", loc_.location_id},
                      {"records", std::move(records)},
                      {"elapsed_ms", ctx.now_ms() - t0}});
        } catch (const Error& e) {
            ctx.send(Performative::Failure, msg.sender.name, msg.conversation_id,
                     {{"location_id", loc_.location_id}, {"error", e.what()}});
        }
    }

private:
    void ensure_fetcher(AgentContext& ctx) {
        if (handle_.fetcher) return;
        ctx_ = ctx;
        AgentContext saved = *ctx_;
        handle_ = factory_([saved](double ms) mutable { saved.work(ms); });
    }

    Location loc_;
    FetcherFactory factory_;
    OutboundLog* log_;
    FetcherHandle handle_;
    std::optional<AgentContext> ctx_;
};

/// Fig.2 static coordinator: fans a collection request out to the web agents
/// of the filtered locations and confirms completion once every agent has
/// confirmed (or failed).
class StaticCoordinatorBehavior : public platform::Behavior {
public:
    explicit StaticCoordinatorBehavior(double kappa) : kappa_(kappa) {}

    void on_message(const Message& msg, AgentContext& ctx) override {
        if (msg.performative == Performative::Request && msg.content.contains("categories")) {
            start(msg, ctx);
            return;
        }
        auto it = pending_.find(msg.conversation_id);
        if (it == pending_.end()) return;
        Pending& pending = it->second;

        if (msg.performative == Performative::Confirm) {
            const std::string from = msg.sender.name;
            if (pending.awaiting.erase(from) > 0) {
                const nlohmann::json recs = msg.content.value("records", nlohmann::json::array());
                for (const auto& rec : recs) {
                    pending.records.push_back(rec);
                }
                pending.per_location_ms[msg.content.value("location_id", "")] =
                    msg.content.value("elapsed_ms", 0.0);
            }
        } else if (msg.performative == Performative::Failure) {
            std::string failed_agent = msg.sender.name;
            if (msg.sender.name == "ams") {
                failed_agent = msg.content.value("original_receiver", "");
            }
            if (pending.awaiting.erase(failed_agent) > 0) {
                pending.failures.push_back(failed_agent + ": " +
                                           msg.content.value("error", "failure"));
            }
        }
        if (pending.awaiting.empty()) finish(msg.conversation_id, ctx);
    }

private:
    struct Pending {
        std::string requester;
        std::set<std::string> awaiting;
        nlohmann::json records = nlohmann::json::array();
        std::map<std::string, double> per_location_ms;
        std::vector<std::string> failures;
    };

    void start(const Message& msg, AgentContext& ctx) {
        std::set<std::string> categories;
        for (const auto& c : msg.content.at("categories")) categories.insert(c.get<std::string>());
        const int required = msg.content.value("required_assurance", 0);
        const auto locations = filter_locations(ctx.available_locations(), categories, required);

        Pending pending;
        pending.requester = msg.sender.name;

        // Resolve the web agent for every filtered location through the
        // yellow pages before dispatching, so the contention scale reflects
        // the real fan-out.
        std::vector<std::pair<Location, std::string>> targets;
        for (const auto& loc : locations) {
            const std::string wanted = kWebPrefix + loc.site_id;
            bool found = false;
            for (const auto& cat : loc.categories) {
                for (const auto& id : ctx.search_service(cat)) {
                    if (id.name == wanted) {
                        found = true;
                        break;
                    }
                }
                if (found) break;
            }
            if (found) {
                targets.emplace_back(loc, wanted);
            } else {
                pending.failures.push_back("no web agent for " + loc.location_id);
            }
        }

        nlohmann::json payload = msg.content.at("payload");
        payload["latency_scale"] = 1.0 + kappa_ * static_cast<double>(targets.size());

        for (const auto& [loc, agent_name] : targets) {
            ctx.send(Performative::Request, agent_name, msg.conversation_id, {{"payload", payload}});
            pending.awaiting.insert(agent_name);
        }
        const bool done = pending.awaiting.empty();
        pending_[msg.conversation_id] = std::move(pending);
        if (done) finish(msg.conversation_id, ctx);
    }

    void finish(const std::string& conversation_id, AgentContext& ctx) {
        auto it = pending_.find(conversation_id);
        if (it == pending_.end()) return;
        Pending pending = std::move(it->second);
        pending_.erase(it);
        nlohmann::json per_loc = nlohmann::json::object();
        for (const auto& [loc, ms] : pending.per_location_ms) per_loc[loc] = ms;
        ctx.send(Performative::Confirm, pending.requester, conversation_id,
                 {{"records", std::move(pending.records)},
                  {"per_location_ms", std::move(per_loc)},
                  {"failures", pending.failures}});
    }

    double kappa_;
    std::map<std::string, Pending> pending_;
};

/// Fig.3 mobile coordinator: walks the filtered itinerary with move(),
/// collecting at each arrival into its migrating state, then informs the
/// query-mod agent once every place has been visited.
class MobileCoordinatorBehavior : public platform::Behavior {
public:
    MobileCoordinatorBehavior(FetcherFactory factory, OutboundLog* log)
        : factory_(std::move(factory)), log_(log) {}

    void on_message(const Message& msg, AgentContext& ctx) override {
        if (msg.performative != Performative::Request || !msg.content.contains("categories")) return;
        ensure_fetcher(ctx);

        std::set<std::string> categories;
        for (const auto& c : msg.content.at("categories")) categories.insert(c.get<std::string>());
        const int required = msg.content.value("required_assurance", 0);

        payload_ = msg.content.at("payload");
        log_->add_payload(payload_);
        collected_ = nlohmann::json::array();
        per_location_ms_ = nlohmann::json::object();
        failures_.clear();
        collecting_ = true;

        ItineraryPlan plan;
        plan.conversation_id = msg.conversation_id;
        plan.locations = filter_locations(ctx.available_locations(), categories, required);

        for (const auto& loc : plan.locations) {
            try {
                ctx.move(loc.location_id);  // collection happens in after_move
            } catch (const Error& e) {
                failures_.push_back(loc.location_id + ": " + e.what());
            }
        }
        collecting_ = false;

        ctx.send(Performative::Inform, msg.sender.name, msg.conversation_id,
                 {{"records", collected_},
                  {"per_location_ms", per_location_ms_},
                  {"failures", failures_}});
        payload_ = nlohmann::json();
        collected_ = nlohmann::json::array();
        per_location_ms_ = nlohmann::json::object();
        failures_.clear();
    }

    void after_move(const Location& dest, AgentContext& ctx) override {
        if (!collecting_) return;
        const double t0 = ctx.now_ms();
        try {
            nlohmann::json records =
                collect_from_site(*handle_.fetcher, dest, probes_from_payload(payload_));
            for (auto& rec : records) collected_.push_back(std::move(rec));
        } catch (const Error& e) {
            failures_.push_back(dest.location_id + ": " + e.what());
        }
        per_location_ms_[dest.location_id] = ctx.now_ms() - t0;
    }

    nlohmann::json snapshot_state() const override {
        return {{"payload", payload_},
                {"collected", collected_},
                {"per_location_ms", per_location_ms_},
                {"failures", failures_},
                {"collecting", collecting_}};
    }

    void restore_state(const nlohmann::json& state) override {
        payload_ = state.value("payload", nlohmann::json());
        collected_ = state.value("collected", nlohmann::json::array());
        per_location_ms_ = state.value("per_location_ms", nlohmann::json::object());
        failures_ = state.value("failures", std::vector<std::string>{});
        collecting_ = state.value("collecting", false);
    }

private:
    void ensure_fetcher(AgentContext& ctx) {
        if (handle_.fetcher) return;
        AgentContext saved = ctx;
        handle_ = factory_([saved](double ms) mutable { saved.work(ms); });
    }

    // Migrating state: serialized through every hop.
    nlohmann::json payload_;
    nlohmann::json collected_ = nlohmann::json::array();
    nlohmann::json per_location_ms_ = nlohmann::json::object();
    std::vector<std::string> failures_;
    bool collecting_ = false;

    // Runtime capabilities, reacquired rather than migrated.
    FetcherFactory factory_;
    OutboundLog* log_;
    FetcherHandle handle_;
};

std::atomic<std::uint64_t> g_conversation_counter{1};

} // namespace

// --- result item codecs ---

nlohmann::json result_item_to_json(const personal::ResultItem& item) {
    nlohmann::json j;
    j["record_id"] = item.record.record_id;
    j["disease"] = item.record.disease;
    j["description"] = item.record.description;
    j["drugs"] = item.record.drugs;
    j["location_id"] = item.source_location;
    j["sources"] = item.sources;
    j["assurance_level"] = item.source_assurance;
    j["matched"] = std::vector<std::string>(item.matched_terms.begin(), item.matched_terms.end());
    j["categories"] = std::vector<std::string>(item.categories.begin(), item.categories.end());
    j["constituents"] = item.constituent_record_ids;
    j["score"] = item.score;
    return j;
}

personal::ResultItem result_item_from_json(const nlohmann::json& j) {
    personal::ResultItem item;
    item.record.record_id = j.value("record_id", "");
    item.record.disease = j.value("disease", "");
    item.record.description = j.value("description", "");
    item.record.drugs = j.value("drugs", std::vector<std::string>{});
    item.source_location = j.value("location_id", "");
    item.sources = j.value("sources", std::vector<std::string>{item.source_location});
    if (item.sources.empty()) item.sources.push_back(item.source_location);
    item.source_assurance = j.value("assurance_level", 0);
    const nlohmann::json matched = j.value("matched", nlohmann::json::array());
    for (const auto& m : matched) {
        item.matched_terms.insert(m.get<std::string>());
    }
    if (j.contains("categories")) {
        for (const auto& c : j["categories"]) item.categories.insert(c.get<std::string>());
    } else if (j.contains("category")) {
        item.categories.insert(j["category"].get<std::string>());
    }
    item.constituent_record_ids =
        j.value("constituents", std::vector<std::string>{item.record.record_id});
    if (item.constituent_record_ids.empty()) {
        item.constituent_record_ids.push_back(item.record.record_id);
    }
    item.score = j.value("score", 0.0);
    return item;
}

// --- SearchSystem ---

struct SearchSystem::Impl {
    corpus::Corpus corpus;
    SystemOptions opts;
    OutboundLog log;
    std::shared_ptr<BrokenSites> broken = std::make_shared<BrokenSites>();
    platform::Platform plat;
    std::shared_ptr<ReplySink> sink;

    Impl(corpus::Corpus c, SystemOptions o)
        : corpus(std::move(c)),
          opts(o),
          plat(platform::PlatformConfig{o.mode, o.msg_cost_ms, o.move_cost_ms, o.trace_enabled}) {}

    FetcherFactory make_factory() {
        if (opts.http_port > 0) {
            const std::string host = opts.http_host;
            const int port = opts.http_port;
            OutboundLog* log_ptr = &log;
            return [host, port, log_ptr](corpus::SleepFn) {
                FetcherHandle h;
                h.fetcher = std::make_unique<LoggingFetcher>(
                    std::make_unique<corpus::HttpFetcher>(host, port), log_ptr);
                return h;
            };
        }
        const corpus::Corpus* corpus_ptr = &corpus;
        OutboundLog* log_ptr = &log;
        std::shared_ptr<BrokenSites> broken_ptr = broken;
        return [corpus_ptr, log_ptr, broken_ptr](corpus::SleepFn sleep) {
            auto inproc = std::make_unique<corpus::InProcessFetcher>(*corpus_ptr, std::move(sleep));
            FetcherHandle h;
            h.inproc = inproc.get();
            h.fetcher = std::make_unique<LoggingFetcher>(
                std::make_unique<BrokenGuardFetcher>(std::move(inproc), broken_ptr), log_ptr);
            return h;
        };
    }

    void boot() {
        for (const auto& site : corpus.sites) {
            plat.add_location(Location{"loc-" + site.site_id, site.site_id,
                                       {site.category}, site.assurance_level,
                                       site.collect_latency_ms});
        }
        sink = std::make_shared<ReplySink>();
        plat.spawn_agent(kInterface, sink);
        plat.spawn_agent(kProfileAgent, std::make_shared<ProfileAgentBehavior>(opts.profile_store));
        plat.spawn_agent(kPersonalize, std::make_shared<PersonalizeBehavior>());
        plat.spawn_agent(kQueryMod, std::make_shared<QueryModBehavior>());

        if (opts.topology == TopologyKind::Static) {
            const auto coord_id =
                plat.spawn_agent(kCoordinator, std::make_shared<StaticCoordinatorBehavior>(opts.kappa));
            plat.register_service(coord_id, {"coordinator", "coord-1"});
            for (const auto& site : corpus.sites) {
                const auto id = plat.spawn_agent(
                    kWebPrefix + site.site_id,
                    std::make_shared<WebAgentBehavior>(
                        Location{"loc-" + site.site_id, site.site_id, {site.category},
                                 site.assurance_level, site.collect_latency_ms},
                        make_factory(), &log),
                    "loc-" + site.site_id);
                plat.register_service(id, {site.category, site.site_id});
            }
        } else {
            const auto coord_id = plat.spawn_agent(
                kCoordinator, std::make_shared<MobileCoordinatorBehavior>(make_factory(), &log));
            plat.register_service(coord_id, {"coordinator", "coord-1"});
        }
    }
};

SearchSystem::SearchSystem(corpus::Corpus corpus, SystemOptions opts)
    : impl_(std::make_unique<Impl>(std::move(corpus), opts)) {
    impl_->boot();
}

SearchSystem::~SearchSystem() {
    if (impl_) impl_->plat.shutdown();
}

platform::Platform& SearchSystem::agent_platform() { return impl_->plat; }

const corpus::Corpus& SearchSystem::site_corpus() const { return impl_->corpus; }

const SystemOptions& SearchSystem::options() const { return impl_->opts; }

const OutboundLog& SearchSystem::outbound_log() const { return impl_->log; }

void SearchSystem::set_broken_site(const std::string& site_id, bool broken) {
    impl_->broken->set(site_id, broken);
}

namespace {

/// Collection-phase span from the sniffer trace: delivery of the request to
/// the coordinator through delivery of its completion back to query-mod,
/// plus one message cost for the inbound request's own transmission.
double collection_span(const std::vector<platform::TraceEvent>& trace, const std::string& conv,
                       double msg_cost_ms) {
    double t1 = -1.0;
    double t2 = -1.0;
    for (const auto& ev : trace) {
        if (ev.conversation_id != conv) continue;
        if (t1 < 0 && ev.from == kQueryMod && ev.to == kCoordinator &&
            ev.performative == Performative::Request) {
            t1 = ev.t_ms;
        }
        if (ev.from == kCoordinator && ev.to == kQueryMod &&
            (ev.performative == Performative::Confirm || ev.performative == Performative::Inform)) {
            t2 = ev.t_ms;
        }
    }
    if (t1 < 0 || t2 < t1) return -1.0;
    return t2 - t1 + msg_cost_ms;
}

} // namespace

CollectionOutcome SearchSystem::run_collection(const std::set<std::string>& categories,
                                               int required_assurance,
                                               const nlohmann::json& sanitized_payload,
                                               const std::string& conversation_id,
                                               const personal::UserProfile* profile) {
    auto& plat = impl_->plat;
    auto fut = impl_->sink->expect(conversation_id);
    plat.await_quiescent();

    const double t_inject = plat.now_ms();
    nlohmann::json content;
    content["payload"] = sanitized_payload;
    content["categories"] = std::vector<std::string>(categories.begin(), categories.end());
    content["required_assurance"] = required_assurance;
    content["reply_to"] = kInterface;
    if (profile) content["profile"] = profile->to_json();

    Message req;
    req.performative = Performative::Request;
    req.sender = plat.agent_id(kInterface).value_or(AgentId{kInterface, 1});
    req.receiver = AgentId{kQueryMod, 0};
    req.conversation_id = conversation_id;
    req.content = std::move(content);
    plat.send(std::move(req));

    const ReplySink::Reply reply = fut.get();

    CollectionOutcome out;
    const nlohmann::json& body = reply.msg.content;
    if (reply.msg.performative == Performative::Failure) {
        out.failures.push_back(body.value("error", "collection failed"));
    }
    if (body.contains("items")) {
        for (const auto& entry : body["items"]) out.items.push_back(result_item_from_json(entry));
    } else {
        const nlohmann::json records = body.value("records", nlohmann::json::array());
        for (const auto& entry : records) {
            out.items.push_back(result_item_from_json(entry));
        }
    }
    const nlohmann::json per_loc = body.value("per_location_ms", nlohmann::json::object());
    for (const auto& [loc, ms] : per_loc.items()) {
        out.per_location_ms[loc] = ms.get<double>();
    }
    const nlohmann::json failures = body.value("failures", nlohmann::json::array());
    for (const auto& f : failures) {
        out.failures.push_back(f.get<std::string>());
    }

    const auto trace = plat.sniffer_trace();
    const double span = collection_span(trace, conversation_id, impl_->opts.msg_cost_ms);
    out.total_ms = span >= 0 ? span : reply.t_ms - t_inject;
    for (const auto& ev : trace) {
        if (ev.conversation_id == conversation_id && is_collection_role(ev.from) &&
            is_collection_role(ev.to)) {
            ++out.messages_sent;
        }
    }
    return out;
}

personal::UserProfile SearchSystem::fetch_profile(const std::string& user_id,
                                                  const std::string& conversation_id) {
    auto& plat = impl_->plat;
    auto fut = impl_->sink->expect(conversation_id);
    plat.await_quiescent();
    Message req;
    req.performative = Performative::Request;
    req.sender = plat.agent_id(kInterface).value_or(AgentId{kInterface, 1});
    req.receiver = AgentId{kProfileAgent, 0};
    req.conversation_id = conversation_id;
    req.content = {{"user_id", user_id}, {"reply_to", kInterface}};
    plat.send(std::move(req));
    return personal::UserProfile::from_json(fut.get().msg.content.at("profile"));
}

CollectionOutcome run_static(SearchSystem& system, const query::AnnotatedQuery& annotated,
                             const nlohmann::json& sanitized_payload, int required_assurance,
                             const std::string& conversation_id) {
    if (system.options().topology != TopologyKind::Static) {
        raise(ErrorCode::InvalidArgument, "system is not booted for the static topology");
    }
    return system.run_collection(annotated.target_categories, required_assurance, sanitized_payload,
                                 conversation_id);
}

CollectionOutcome run_mobile(SearchSystem& system, const query::AnnotatedQuery& annotated,
                             const nlohmann::json& sanitized_payload, int required_assurance,
                             const std::string& conversation_id) {
    if (system.options().topology != TopologyKind::Mobile) {
        raise(ErrorCode::InvalidArgument, "system is not booted for the mobile topology");
    }
    return system.run_collection(annotated.target_categories, required_assurance, sanitized_payload,
                                 conversation_id);
}

SearchResult end_to_end_search(EndToEndContext& ctx, const std::string& raw_query,
                               const std::string& session_token) {
    if (!ctx.dictionary || !ctx.gate || !ctx.system) {
        raise(ErrorCode::InvalidArgument, "end-to-end context incomplete");
    }
    auto& system = *ctx.system;

    // Gate first: nothing moves toward a site without a valid session.
    const security::Session session = ctx.gate->validate(session_token);

    const std::string conv = "q" + std::to_string(g_conversation_counter.fetch_add(1));

    const auto pipe_start = std::chrono::steady_clock::now();

    // Profile via the user-profile agent.
    personal::UserProfile profile = system.fetch_profile(session.user_id, conv + "/profile");

    std::optional<query::ProfileTerms> profile_terms;
    if (!profile.health_conditions.empty()) profile_terms = profile.health_conditions;
    query::AnnotatedQuery annotated = query::annotate(raw_query, *ctx.dictionary, profile_terms);
    annotated = personal::enrich_query(std::move(annotated), profile);

    const security::RecordKey key = ctx.gate->derive_record_key(session.user_id);
    nlohmann::json payload;
    payload["record_key"] = key.key_hex;
    payload["probe_terms"] = annotated.probe_terms();
    payload["category_weights"] = annotated.category_weights;
    const nlohmann::json sanitized =
        ctx.gate->pseudonymize_outbound(payload, session, profile.identity_values());

    const double pipeline_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - pipe_start)
            .count();

    CollectionOutcome outcome = system.run_collection(
        annotated.target_categories, ctx.required_assurance, sanitized, conv, &profile);

    SearchResult result;
    result.items = outcome.items;
    result.outcome = std::move(outcome);
    result.annotated = std::move(annotated);
    result.pipeline_ms = pipeline_ms;
    result.conversation_id = conv;
    return result;
}

} // namespace medsearch::topology
