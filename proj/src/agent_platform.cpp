#include "medsearch/agent_platform.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <map>
#include <mutex>
#include <queue>
#include <set>
#include <thread>

#include "medsearch/errors.hpp"

namespace medsearch::platform {

const char* performative_name(Performative p) {
    switch (p) {
        case Performative::Request: return "REQUEST";
        case Performative::Inform: return "INFORM";
        case Performative::Confirm: return "CONFIRM";
        case Performative::Failure: return "FAILURE";
    }
    return "UNKNOWN";
}

Performative performative_from_name(const std::string& name) {
    if (name == "REQUEST") return Performative::Request;
    if (name == "INFORM") return Performative::Inform;
    if (name == "CONFIRM") return Performative::Confirm;
    if (name == "FAILURE") return Performative::Failure;
    raise(ErrorCode::ParseError, "unknown performative: " + name);
}

namespace {

/// Thrown inside agent threads to unwind a dying agent.
struct StopAgentSignal {};

constexpr const char* kPlatformName = "ams";

} // namespace

struct Agent {
    std::string name;
    std::uint64_t incarnation = 1;
    std::shared_ptr<Behavior> behavior;
    std::optional<std::string> location_id;
    std::deque<Message> mailbox;
    std::thread thread;
    bool dying = false;
    bool live = true;

    // Threaded-mode wakeup.
    std::condition_variable mailbox_cv;

    // Deterministic-mode task state.
    enum class TState { Running, Ready, Sleeping, WaitingMail, Done };
    TState tstate = TState::WaitingMail;
    double ready_at = 0.0;
    bool may_run = false;
    bool holds_token = false;
    std::condition_variable task_cv;
};

struct Platform::Impl {
    PlatformConfig cfg;

    mutable std::mutex mu;
    bool stopping = false;

    std::map<std::string, std::unique_ptr<Agent>> agents;

    struct Registration {
        ServiceDescription svc;
        std::string owner;
    };
    std::vector<Registration> registry;

    std::map<std::string, Location> locations;

    std::vector<TraceEvent> trace;
    std::uint64_t next_seq = 1;
    std::uint64_t next_uid = 1;

    // Threaded mode: a single router thread serializes deliveries.
    std::deque<Message> send_queue;
    std::condition_variable router_cv;
    std::thread router_thread;

    // Deterministic mode: virtual clock + delivery event heap. Exactly one
    // agent task runs at a time; scheduling decisions happen in the context
    // of whichever thread releases the token.
    double vnow = 0.0;
    double bus_free = 0.0;
    bool someone_running = false;
    std::condition_variable quiescent_cv;
    std::uint64_t event_tie = 0;
    struct Event {
        double time;
        std::uint64_t tie;
        Message msg;
    };
    struct EventLater {
        bool operator()(const Event& a, const Event& b) const {
            if (a.time != b.time) return a.time > b.time;
            return a.tie > b.tie;
        }
    };
    std::priority_queue<Event, std::vector<Event>, EventLater> events;

    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    Platform* owner = nullptr;

    double now_ms_locked() const {
        if (cfg.mode == SchedulerMode::Deterministic) return vnow;
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }

    void enqueue_locked(Message&& msg) {
        if (cfg.mode == SchedulerMode::Threaded) {
            send_queue.push_back(std::move(msg));
            router_cv.notify_one();
        } else {
            const double at = std::max(vnow, bus_free) + cfg.msg_cost_ms;
            bus_free = at;
            events.push(Event{at, event_tie++, std::move(msg)});
        }
    }

    void deliver_locked(Message&& msg) {
        auto it = agents.find(msg.receiver.name);
        Agent* agent =
            (it != agents.end() && it->second->live && !it->second->dying) ? it->second.get() : nullptr;
        if (!agent) {
            if (msg.bounce) return;  // a failed bounce is dropped, never re-bounced
            Message failure;
            failure.performative = Performative::Failure;
            failure.bounce = true;
            failure.sender = AgentId{kPlatformName, 0};
            failure.receiver = msg.sender;
            failure.conversation_id = msg.conversation_id;
            failure.content = {{"error", "receiver dead"},
                               {"original_receiver", msg.receiver.name},
                               {"original_performative", performative_name(msg.performative)}};
            failure.uid = next_uid++;
            enqueue_locked(std::move(failure));
            return;
        }
        msg.seq = next_seq++;
        msg.receiver.incarnation = agent->incarnation;
        if (cfg.trace_enabled) {
            trace.push_back(TraceEvent{msg.seq, now_ms_locked(), msg.performative, msg.sender.name,
                                       msg.receiver.name, msg.conversation_id});
        }
        agent->mailbox.push_back(std::move(msg));
        if (cfg.mode == SchedulerMode::Threaded) {
            agent->mailbox_cv.notify_one();
        } else if (agent->tstate == Agent::TState::WaitingMail) {
            agent->tstate = Agent::TState::Ready;
            agent->ready_at = vnow;
        }
    }

    /// Deterministic-mode core: with no task running, fire due delivery
    /// events and grant the token to the earliest-ready task (ties break on
    /// the agent name; deliveries at equal time precede execution).
    void dispatch_locked() {
        for (;;) {
            Agent* best = nullptr;
            for (auto& [_, a] : agents) {
                if (a->tstate == Agent::TState::Ready || a->tstate == Agent::TState::Sleeping) {
                    if (!best || a->ready_at < best->ready_at ||
                        (a->ready_at == best->ready_at && a->name < best->name)) {
                        best = a.get();
                    }
                }
            }
            const bool have_event = !events.empty();
            const double event_time = have_event ? events.top().time : 0.0;
            if (!best && !have_event) {
                someone_running = false;
                quiescent_cv.notify_all();
                return;
            }
            if (have_event && (!best || event_time <= best->ready_at)) {
                Event ev = events.top();
                events.pop();
                vnow = std::max(vnow, ev.time);
                deliver_locked(std::move(ev.msg));
                continue;
            }
            vnow = std::max(vnow, best->ready_at);
            best->tstate = Agent::TState::Running;
            best->may_run = true;
            someone_running = true;
            best->task_cv.notify_one();
            return;
        }
    }

    void release_token_locked(Agent& a, Agent::TState next_state) {
        a.tstate = next_state;
        a.holds_token = false;
        a.may_run = false;
        someone_running = false;
        dispatch_locked();
    }

    void acquire_token(Agent& a, std::unique_lock<std::mutex>& lk) {
        a.task_cv.wait(lk, [&] { return a.may_run; });
        a.may_run = false;
        a.holds_token = true;
        a.tstate = Agent::TState::Running;
    }

    Message pop_mail(Agent& a) {
        std::unique_lock<std::mutex> lk(mu);
        if (cfg.mode == SchedulerMode::Threaded) {
            a.mailbox_cv.wait(lk, [&] { return a.dying || !a.mailbox.empty(); });
            if (a.dying) throw StopAgentSignal{};
            Message m = std::move(a.mailbox.front());
            a.mailbox.pop_front();
            return m;
        }
        for (;;) {
            if (a.holds_token) {
                if (a.dying) {
                    release_token_locked(a, Agent::TState::Done);
                    throw StopAgentSignal{};
                }
                if (!a.mailbox.empty()) {
                    Message m = std::move(a.mailbox.front());
                    a.mailbox.pop_front();
                    return m;
                }
                release_token_locked(a, Agent::TState::WaitingMail);
            }
            acquire_token(a, lk);
        }
    }

    void sleep_agent(Agent& a, double ms) {
        if (ms <= 0) return;
        if (cfg.mode == SchedulerMode::Threaded) {
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
            return;
        }
        std::unique_lock<std::mutex> lk(mu);
        a.ready_at = vnow + ms;
        release_token_locked(a, Agent::TState::Sleeping);
        acquire_token(a, lk);
    }

    void terminate_agent(Agent& a) {
        std::unique_lock<std::mutex> lk(mu);
        a.live = false;
        a.dying = true;
        registry.erase(std::remove_if(registry.begin(), registry.end(),
                                      [&](const Registration& r) { return r.owner == a.name; }),
                       registry.end());
        if (cfg.mode == SchedulerMode::Deterministic && a.holds_token) {
            release_token_locked(a, Agent::TState::Done);
        } else {
            a.tstate = Agent::TState::Done;
        }
    }

    void agent_main(Agent* a) {
        try {
            for (;;) {
                Message m = pop_mail(*a);
                AgentContext ctx(*owner, a);
                a->behavior->on_message(m, ctx);
            }
        } catch (const StopAgentSignal&) {
        } catch (const std::exception& e) {
            std::fprintf(stderr, "agent %s terminated on error: %s\n", a->name.c_str(), e.what());
        }
        terminate_agent(*a);
    }

    void router_main() {
        std::unique_lock<std::mutex> lk(mu);
        for (;;) {
            router_cv.wait(lk, [&] { return stopping || !send_queue.empty(); });
            if (send_queue.empty()) {
                if (stopping) return;
                continue;
            }
            Message m = std::move(send_queue.front());
            send_queue.pop_front();
            if (cfg.msg_cost_ms > 0) {
                lk.unlock();
                std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(cfg.msg_cost_ms));
                lk.lock();
            }
            deliver_locked(std::move(m));
        }
    }
};

Platform::Platform(PlatformConfig cfg) : impl_(std::make_unique<Impl>()) {
    impl_->cfg = cfg;
    impl_->owner = this;
    if (cfg.mode == SchedulerMode::Threaded) {
        impl_->router_thread = std::thread([this] { impl_->router_main(); });
    }
}

Platform::~Platform() { shutdown(); }

void Platform::add_location(Location loc) {
    if (loc.location_id.empty()) raise(ErrorCode::InvalidArgument, "location_id must be nonempty");
    if (loc.categories.empty()) raise(ErrorCode::InvalidArgument, "location categories must be nonempty");
    std::lock_guard<std::mutex> lk(impl_->mu);
    if (impl_->locations.count(loc.location_id)) {
        raise(ErrorCode::InvalidArgument, "duplicate location: " + loc.location_id);
    }
    impl_->locations[loc.location_id] = std::move(loc);
}

std::vector<Location> Platform::get_available_locations() const {
    std::lock_guard<std::mutex> lk(impl_->mu);
    std::vector<Location> out;
    out.reserve(impl_->locations.size());
    for (const auto& [_, loc] : impl_->locations) out.push_back(loc);
    return out;  // std::map iteration: stable order by location_id
}

std::optional<Location> Platform::find_location(const std::string& location_id) const {
    std::lock_guard<std::mutex> lk(impl_->mu);
    auto it = impl_->locations.find(location_id);
    if (it == impl_->locations.end()) return std::nullopt;
    return it->second;
}

AgentId Platform::spawn_agent(const std::string& name, std::shared_ptr<Behavior> behavior,
                              const std::optional<std::string>& home_location) {
    if (name.empty() || name == kPlatformName) {
        raise(ErrorCode::InvalidArgument, "invalid agent name: " + name);
    }
    if (!behavior) raise(ErrorCode::InvalidArgument, "behavior must be non-null");
    std::unique_lock<std::mutex> lk(impl_->mu);
    if (impl_->stopping) raise(ErrorCode::Internal, "platform is shutting down");
    auto it = impl_->agents.find(name);
    if (it != impl_->agents.end()) {
        if (it->second->live) raise(ErrorCode::NameTaken, "agent name taken: " + name);
        // Replace a dead incarnation-less entry: reap its thread first.
        std::thread old = std::move(it->second->thread);
        impl_->agents.erase(it);
        lk.unlock();
        if (old.joinable()) old.join();
        lk.lock();
        if (impl_->agents.count(name)) raise(ErrorCode::NameTaken, "agent name taken: " + name);
    }
    if (home_location && !impl_->locations.count(*home_location)) {
        raise(ErrorCode::NoSuchLocation, "no such location: " + *home_location);
    }
    auto agent = std::make_unique<Agent>();
    agent->name = name;
    agent->behavior = std::move(behavior);
    agent->location_id = home_location;
    Agent* ptr = agent.get();
    impl_->agents[name] = std::move(agent);
    ptr->thread = std::thread([this, ptr] { impl_->agent_main(ptr); });
    return AgentId{name, ptr->incarnation};
}

void Platform::kill_agent(const std::string& name) {
    std::lock_guard<std::mutex> lk(impl_->mu);
    auto it = impl_->agents.find(name);
    if (it == impl_->agents.end() || !it->second->live) return;
    Agent& a = *it->second;
    a.dying = true;
    if (impl_->cfg.mode == SchedulerMode::Threaded) {
        a.mailbox_cv.notify_all();
    } else {
        if (a.tstate == Agent::TState::WaitingMail) {
            a.tstate = Agent::TState::Ready;
            a.ready_at = impl_->vnow;
        }
        if (!impl_->someone_running) impl_->dispatch_locked();
    }
}

bool Platform::is_live(const std::string& name) const {
    std::lock_guard<std::mutex> lk(impl_->mu);
    auto it = impl_->agents.find(name);
    return it != impl_->agents.end() && it->second->live && !it->second->dying;
}

std::optional<AgentId> Platform::agent_id(const std::string& name) const {
    std::lock_guard<std::mutex> lk(impl_->mu);
    auto it = impl_->agents.find(name);
    if (it == impl_->agents.end() || !it->second->live) return std::nullopt;
    return AgentId{name, it->second->incarnation};
}

std::optional<Location> Platform::agent_location(const std::string& name) const {
    std::lock_guard<std::mutex> lk(impl_->mu);
    auto it = impl_->agents.find(name);
    if (it == impl_->agents.end() || !it->second->location_id) return std::nullopt;
    auto loc = impl_->locations.find(*it->second->location_id);
    if (loc == impl_->locations.end()) return std::nullopt;
    return loc->second;
}

void Platform::register_service(const AgentId& agent, const ServiceDescription& svc) {
    std::lock_guard<std::mutex> lk(impl_->mu);
    auto it = impl_->agents.find(agent.name);
    if (it == impl_->agents.end() || !it->second->live || it->second->dying) {
        raise(ErrorCode::InvalidArgument, "cannot register service for non-live agent: " + agent.name);
    }
    for (const auto& r : impl_->registry) {
        if (r.owner == agent.name && r.svc.service_type == svc.service_type) {
            raise(ErrorCode::AlreadyRegistered,
                  "service already registered: (" + svc.service_type + ", " + agent.name + ")");
        }
    }
    impl_->registry.push_back({svc, agent.name});
}

void Platform::deregister_service(const std::string& owner_name, const std::string& service_type) {
    std::lock_guard<std::mutex> lk(impl_->mu);
    auto& reg = impl_->registry;
    reg.erase(std::remove_if(reg.begin(), reg.end(),
                             [&](const Impl::Registration& r) {
                                 return r.owner == owner_name && r.svc.service_type == service_type;
                             }),
              reg.end());
}

std::vector<AgentId> Platform::search_service(const std::string& service_type) const {
    std::lock_guard<std::mutex> lk(impl_->mu);
    std::vector<AgentId> out;
    for (const auto& r : impl_->registry) {
        if (r.svc.service_type != service_type) continue;
        auto it = impl_->agents.find(r.owner);
        if (it != impl_->agents.end() && it->second->live && !it->second->dying) {
            out.push_back(AgentId{r.owner, it->second->incarnation});
        }
    }
    return out;
}

void Platform::send(Message msg) {
    if (msg.sender.name == msg.receiver.name) {
        raise(ErrorCode::InvalidArgument, "sender must differ from receiver");
    }
    if (msg.receiver.name.empty()) raise(ErrorCode::InvalidArgument, "receiver must be named");
    std::lock_guard<std::mutex> lk(impl_->mu);
    if (impl_->stopping) return;
    msg.uid = impl_->next_uid++;
    impl_->enqueue_locked(std::move(msg));
    if (impl_->cfg.mode == SchedulerMode::Deterministic && !impl_->someone_running) {
        impl_->dispatch_locked();
    }
}

std::vector<TraceEvent> Platform::sniffer_trace() const {
    std::lock_guard<std::mutex> lk(impl_->mu);
    return impl_->trace;
}

std::string Platform::export_trace() const {
    const auto events = sniffer_trace();
    std::string out;
    for (const auto& ev : events) {
        nlohmann::ordered_json j;
        j["seq"] = ev.seq;
        j["t_ms"] = std::round(ev.t_ms * 1000.0) / 1000.0;
        j["performative"] = performative_name(ev.performative);
        j["from"] = ev.from;
        j["to"] = ev.to;
        j["conversation"] = ev.conversation_id;
        out += j.dump();
        out += '\n';
    }
    return out;
}

double Platform::now_ms() const {
    std::lock_guard<std::mutex> lk(impl_->mu);
    return impl_->now_ms_locked();
}

void Platform::sleep_ms(double ms, void* agent) {
    if (agent) {
        impl_->sleep_agent(*static_cast<Agent*>(agent), ms);
        return;
    }
    if (impl_->cfg.mode == SchedulerMode::Deterministic) {
        raise(ErrorCode::Internal, "virtual sleep requires an agent context");
    }
    std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

const PlatformConfig& Platform::config() const { return impl_->cfg; }

void Platform::await_quiescent() const {
    if (impl_->cfg.mode != SchedulerMode::Deterministic) return;
    std::unique_lock<std::mutex> lk(impl_->mu);
    impl_->quiescent_cv.wait(lk, [&] {
        if (impl_->someone_running || !impl_->events.empty()) return false;
        for (const auto& [_, a] : impl_->agents) {
            if (a->tstate == Agent::TState::Ready || a->tstate == Agent::TState::Sleeping) return false;
        }
        return true;
    });
}

void Platform::shutdown() {
    {
        std::lock_guard<std::mutex> lk(impl_->mu);
        if (impl_->stopping) {
            // already shut down; fall through to joins for idempotence
        }
        impl_->stopping = true;
        for (auto& [_, a] : impl_->agents) {
            a->dying = true;
            if (impl_->cfg.mode == SchedulerMode::Threaded) {
                a->mailbox_cv.notify_all();
            } else if (a->tstate == Agent::TState::WaitingMail) {
                a->tstate = Agent::TState::Ready;
                a->ready_at = impl_->vnow;
            }
        }
        impl_->router_cv.notify_all();
        if (impl_->cfg.mode == SchedulerMode::Deterministic && !impl_->someone_running) {
            impl_->dispatch_locked();
        }
    }
    if (impl_->router_thread.joinable()) impl_->router_thread.join();
    for (auto& [_, a] : impl_->agents) {
        if (a->thread.joinable()) a->thread.join();
    }
}

// --- AgentContext ---

namespace {
Agent& as_agent(void* p) { return *static_cast<Agent*>(p); }
} // namespace

AgentId AgentContext::self() const {
    Agent& a = as_agent(agent_);
    return AgentId{a.name, a.incarnation};
}

std::optional<Location> AgentContext::location() const {
    return platform_->agent_location(as_agent(agent_).name);
}

double AgentContext::now_ms() const { return platform_->now_ms(); }

void AgentContext::send(Performative p, const std::string& receiver, const std::string& conversation_id,
                        nlohmann::json content) {
    Message msg;
    msg.performative = p;
    msg.sender = self();
    msg.receiver = AgentId{receiver, 0};
    msg.conversation_id = conversation_id;
    msg.content = std::move(content);
    platform_->send(std::move(msg));
}

Message AgentContext::receive() { return platform_->impl_->pop_mail(as_agent(agent_)); }

void AgentContext::move(const std::string& location_id) {
    Agent& a = as_agent(agent_);
    const auto dest = platform_->find_location(location_id);
    if (!dest) raise(ErrorCode::NoSuchLocation, "no such location: " + location_id);

    // Serialize, transfer, restore: the state crosses the hop as bytes so
    // behaviors cannot smuggle unserialized state through a migration.
    const std::string state_bytes = a.behavior->snapshot_state().dump();
    platform_->sleep_ms(platform_->impl_->cfg.move_cost_ms, agent_);
    {
        std::lock_guard<std::mutex> lk(platform_->impl_->mu);
        if (a.dying) throw StopAgentSignal{};  // at-most-once arrival: stay at origin
        a.incarnation += 1;
        a.location_id = location_id;
    }
    a.behavior->restore_state(nlohmann::json::parse(state_bytes));
    a.behavior->after_move(*dest, *this);
}

void AgentContext::work(double ms) { platform_->sleep_ms(ms, agent_); }

void AgentContext::register_service(const ServiceDescription& svc) {
    platform_->register_service(self(), svc);
}

void AgentContext::deregister_service(const std::string& service_type) {
    platform_->deregister_service(as_agent(agent_).name, service_type);
}

std::vector<AgentId> AgentContext::search_service(const std::string& service_type) const {
    return platform_->search_service(service_type);
}

std::vector<Location> AgentContext::available_locations() const {
    return platform_->get_available_locations();
}

void AgentContext::kill(const std::string& agent_name) { platform_->kill_agent(agent_name); }

} // namespace medsearch::platform
