#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace medsearch::platform {

enum class Performative { Request, Inform, Confirm, Failure };

const char* performative_name(Performative p);
Performative performative_from_name(const std::string& name);

struct AgentId {
    std::string name;
    std::uint64_t incarnation = 0;

    bool operator==(const AgentId&) const = default;
};

struct ServiceDescription {
    std::string service_type;
    std::string service_name;
};

/// A place hosting one synthetic medical site. Carries the manifest summary
/// agents need for filtering (categories, assurance) without pulling in the
/// full corpus module.
struct Location {
    std::string location_id;
    std::string site_id;
    std::vector<std::string> categories;
    int assurance_level = 0;
    double collect_latency_ms = 0.0;
};

struct Message {
    Performative performative = Performative::Request;
    AgentId sender;
    AgentId receiver;
    std::string conversation_id;
    nlohmann::json content;
    std::uint64_t seq = 0;  // platform-assigned at delivery
    std::uint64_t uid = 0;  // platform-assigned at send; delivery bookkeeping
    bool bounce = false;    // set on platform-generated FAILURE returns
};

struct TraceEvent {
    std::uint64_t seq = 0;
    double t_ms = 0.0;
    Performative performative = Performative::Request;
    std::string from;
    std::string to;
    std::string conversation_id;
};

enum class SchedulerMode { Threaded, Deterministic };

struct PlatformConfig {
    SchedulerMode mode = SchedulerMode::Threaded;
    /// Bus occupancy per delivered message: deliveries serialize through one
    /// channel, each taking msg_cost_ms.
    double msg_cost_ms = 0.0;
    /// Transfer latency per migration hop.
    double move_cost_ms = 0.0;
    bool trace_enabled = true;
};

class Platform;
class AgentContext;

/// An agent's logic. Handlers run strictly sequentially per agent; the
/// snapshot/restore pair is the migration contract — everything an agent
/// must carry across a move() has to round-trip through it.
class Behavior {
public:
    virtual ~Behavior() = default;

    virtual void on_message(const Message& msg, AgentContext& ctx) = 0;

    virtual void after_move(const Location& dest, AgentContext& ctx) {
        (void)dest;
        (void)ctx;
    }

    virtual nlohmann::json snapshot_state() const { return nlohmann::json::object(); }
    virtual void restore_state(const nlohmann::json& state) { (void)state; }
};

/// Handle passed to behavior callbacks; all platform services an agent may
/// touch while it runs.
class AgentContext {
public:
    AgentContext(Platform& platform, void* agent) : platform_(&platform), agent_(agent) {}

    AgentId self() const;
    std::optional<Location> location() const;
    double now_ms() const;

    void send(Performative p, const std::string& receiver, const std::string& conversation_id,
              nlohmann::json content);

    /// Blocking next-message receive; usable inside a handler for nested
    /// request/reply conversations.
    Message receive();

    /// Migrates this agent: serialize state, suspend, transfer, restore,
    /// bump incarnation, run the after-move hook. Returns after arrival.
    void move(const std::string& location_id);

    /// Simulated labor: advances this agent's timeline (real or virtual).
    void work(double ms);

    void register_service(const ServiceDescription& svc);
    void deregister_service(const std::string& service_type);
    std::vector<AgentId> search_service(const std::string& service_type) const;
    std::vector<Location> available_locations() const;

    void kill(const std::string& agent_name);

private:
    Platform* platform_;
    void* agent_;
};

/// The agent platform: lifecycle, white/yellow pages, mailbox messaging with
/// a global delivery order, logical migration between locations, and the
/// sniffer trace. Runs agents on real threads; in Deterministic mode a
/// cooperative virtual-time scheduler lets exactly one agent run at a time
/// so runs are reproducible and timing is measured on a virtual clock.
class Platform {
public:
    explicit Platform(PlatformConfig cfg = {});
    ~Platform();

    Platform(const Platform&) = delete;
    Platform& operator=(const Platform&) = delete;

    void add_location(Location loc);
    std::vector<Location> get_available_locations() const;
    std::optional<Location> find_location(const std::string& location_id) const;

    AgentId spawn_agent(const std::string& name, std::shared_ptr<Behavior> behavior,
                        const std::optional<std::string>& home_location = std::nullopt);
    void kill_agent(const std::string& name);
    bool is_live(const std::string& name) const;
    std::optional<AgentId> agent_id(const std::string& name) const;
    std::optional<Location> agent_location(const std::string& name) const;

    void register_service(const AgentId& agent, const ServiceDescription& svc);
    void deregister_service(const std::string& owner_name, const std::string& service_type);
    std::vector<AgentId> search_service(const std::string& service_type) const;

    /// Enqueues for delivery. Exactly-once to the receiver's mailbox, FIFO
    /// per (sender, receiver) pair; a permanently dead receiver produces one
    /// FAILURE back to the sender.
    void send(Message msg);

    std::vector<TraceEvent> sniffer_trace() const;
    /// One record per line: seq, t_ms, performative, from, to, conversation.
    std::string export_trace() const;

    double now_ms() const;
    /// Sleeps on the platform clock (virtual in Deterministic mode). Only
    /// meaningful from agent threads or, in Threaded mode, anywhere.
    void sleep_ms(double ms, void* agent);

    /// Deterministic mode: blocks the calling (non-agent) thread until no
    /// agent is runnable and no delivery is pending, so external injections
    /// land at reproducible points. No-op in Threaded mode.
    void await_quiescent() const;

    const PlatformConfig& config() const;

    void shutdown();

private:
    friend class AgentContext;
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace medsearch::platform
