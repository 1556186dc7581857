#include <doctest.h>

#include <atomic>
#include <future>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "medsearch/agent_platform.hpp"
#include "medsearch/errors.hpp"
#include "medsearch/text_util.hpp"

using namespace medsearch;
using namespace medsearch::platform;

namespace {

/// Records everything it receives; optionally echoes to a peer.
class Recorder : public Behavior {
public:
    void on_message(const Message& msg, AgentContext& ctx) override {
        std::lock_guard<std::mutex> lk(mu_);
        received_.push_back(msg);
        (void)ctx;
    }

    std::vector<Message> received() const {
        std::lock_guard<std::mutex> lk(mu_);
        return received_;
    }

private:
    mutable std::mutex mu_;
    std::vector<Message> received_;
};

class Script : public Behavior {
public:
    explicit Script(std::function<void(const Message&, AgentContext&)> fn) : fn_(std::move(fn)) {}
    void on_message(const Message& msg, AgentContext& ctx) override { fn_(msg, ctx); }

private:
    std::function<void(const Message&, AgentContext&)> fn_;
};

Message make_msg(Performative p, const std::string& from, const std::string& to,
                 const std::string& conv, nlohmann::json content = nlohmann::json::object()) {
    Message m;
    m.performative = p;
    m.sender = AgentId{from, 1};
    m.receiver = AgentId{to, 0};
    m.conversation_id = conv;
    m.content = std::move(content);
    return m;
}

Location loc(const std::string& id, const std::string& category = "abdominal symptom") {
    return Location{id, "site-" + id, {category}, 3, 0.0};
}

} // namespace

TEST_CASE("spawn assigns unique names and rejects duplicates") {
    Platform plat;
    const auto id = plat.spawn_agent("interface", std::make_shared<Recorder>());
    CHECK(id.name == "interface");
    CHECK(id.incarnation == 1);
    CHECK_THROWS_AS(plat.spawn_agent("interface", std::make_shared<Recorder>()), Error);
    try {
        plat.spawn_agent("interface", std::make_shared<Recorder>());
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NameTaken);
    }
    plat.shutdown();
}

TEST_CASE("boot of the conceptual topology yields six distinct agents") {
    Platform plat;
    plat.add_location(loc("loc-a"));
    const std::vector<std::string> names = {"interface", "profile",     "query-mod",
                                            "personalize", "coordinator", "web-a"};
    std::set<std::string> seen;
    for (const auto& n : names) seen.insert(plat.spawn_agent(n, std::make_shared<Recorder>()).name);
    CHECK(seen.size() == 6);
    for (const auto& n : names) CHECK(plat.is_live(n));
    plat.shutdown();
}

TEST_CASE("service registry round-trip, duplicates and ordering") {
    Platform plat;
    const auto coord = plat.spawn_agent("coordinator", std::make_shared<Recorder>());
    plat.register_service(coord, {"coordinator", "coord-1"});
    const auto found = plat.search_service("coordinator");
    REQUIRE(found.size() == 1);
    CHECK(found[0].name == "coordinator");

    CHECK_THROWS_AS(plat.register_service(coord, {"coordinator", "again"}), Error);

    // category registration round-trip
    const auto web = plat.spawn_agent("web-1", std::make_shared<Recorder>());
    plat.register_service(web, {"cardiovascular system symptom", "site-1"});
    const auto cardio = plat.search_service("cardiovascular system symptom");
    REQUIRE(cardio.size() == 1);
    CHECK(cardio[0].name == "web-1");

    CHECK(plat.search_service("nonexistent").empty());

    // three agents registered under one type, one deregistered -> two remain, in order
    const auto w2 = plat.spawn_agent("web-2", std::make_shared<Recorder>());
    const auto w3 = plat.spawn_agent("web-3", std::make_shared<Recorder>());
    plat.register_service(w2, {"cardiovascular system symptom", "site-2"});
    plat.register_service(w3, {"cardiovascular system symptom", "site-3"});
    plat.deregister_service("web-2", "cardiovascular system symptom");
    const auto rest = plat.search_service("cardiovascular system symptom");
    REQUIRE(rest.size() == 2);
    CHECK(rest[0].name == "web-1");
    CHECK(rest[1].name == "web-3");

    // dead agents drop out of search results
    plat.kill_agent("web-3");
    while (plat.is_live("web-3")) std::this_thread::yield();
    CHECK(plat.search_service("cardiovascular system symptom").size() == 1);
    plat.shutdown();
}

TEST_CASE("registering a service for a dead agent fails") {
    Platform plat;
    plat.spawn_agent("a", std::make_shared<Recorder>());
    plat.kill_agent("a");
    while (plat.is_live("a")) std::this_thread::yield();
    CHECK_THROWS_AS(plat.register_service(AgentId{"a", 1}, {"t", "n"}), Error);
    plat.shutdown();
}

TEST_CASE("self-send is rejected") {
    Platform plat;
    plat.spawn_agent("a", std::make_shared<Recorder>());
    CHECK_THROWS_AS(plat.send(make_msg(Performative::Request, "a", "a", "c")), Error);
    plat.shutdown();
}

TEST_CASE("per-pair FIFO: 100 messages arrive in send order") {
    Platform plat;
    auto recorder = std::make_shared<Recorder>();
    plat.spawn_agent("sink", recorder);
    plat.spawn_agent("src", std::make_shared<Recorder>());
    for (int i = 0; i < 100; ++i) {
        plat.send(make_msg(Performative::Inform, "src", "sink", "c", {{"n", i}}));
    }
    // drain
    while (recorder->received().size() < 100) std::this_thread::yield();
    const auto got = recorder->received();
    for (int i = 0; i < 100; ++i) CHECK(got[i].content["n"] == i);
    plat.shutdown();
}

TEST_CASE("send to a dead or unknown receiver returns one FAILURE to the sender") {
    Platform plat;
    auto recorder = std::make_shared<Recorder>();
    plat.spawn_agent("src", recorder);
    plat.send(make_msg(Performative::Request, "src", "ghost", "c1"));
    while (recorder->received().empty()) std::this_thread::yield();
    const auto got = recorder->received();
    REQUIRE(got.size() == 1);
    CHECK(got[0].performative == Performative::Failure);
    CHECK(got[0].sender.name == "ams");
    CHECK(got[0].conversation_id == "c1");
    CHECK(got[0].content["original_receiver"] == "ghost");
    plat.shutdown();
}

TEST_CASE("exactly-once delivery under randomized interleaving") {
    Platform plat;
    constexpr int kSenders = 4;
    constexpr int kPerSender = 250;

    auto sink = std::make_shared<Recorder>();
    plat.spawn_agent("sink", sink);
    for (int s = 0; s < kSenders; ++s) {
        plat.spawn_agent("src" + std::to_string(s), std::make_shared<Recorder>());
    }
    std::vector<std::thread> threads;
    for (int s = 0; s < kSenders; ++s) {
        threads.emplace_back([&, s] {
            std::mt19937_64 rng(s);
            for (int i = 0; i < kPerSender; ++i) {
                plat.send(make_msg(Performative::Inform, "src" + std::to_string(s), "sink", "c",
                                   {{"sender", s}, {"n", i}}));
                if (pick(rng, 4) == 0) std::this_thread::yield();
            }
        });
    }
    for (auto& t : threads) t.join();
    while (sink->received().size() < kSenders * kPerSender) std::this_thread::yield();

    const auto got = sink->received();
    REQUIRE(got.size() == kSenders * kPerSender);

    // exactly once per uid, and per-pair FIFO despite the interleaving
    std::set<std::uint64_t> uids;
    std::map<int, int> next_per_sender;
    for (const auto& m : got) {
        CHECK(uids.insert(m.uid).second);
        const int s = m.content["sender"].get<int>();
        const int n = m.content["n"].get<int>();
        CHECK(n == next_per_sender[s]);
        next_per_sender[s] = n + 1;
    }

    // trace completeness: every delivered message traced, seq contiguous
    const auto trace = plat.sniffer_trace();
    CHECK(trace.size() == got.size());
    for (std::size_t i = 0; i < trace.size(); ++i) CHECK(trace[i].seq == i + 1);
    plat.shutdown();
}

TEST_CASE("get_available_locations is stable and sorted") {
    Platform plat;
    plat.add_location(loc("loc-b"));
    plat.add_location(loc("loc-a"));
    plat.add_location(loc("loc-c"));
    const auto locs = plat.get_available_locations();
    REQUIRE(locs.size() == 3);
    CHECK(locs[0].location_id == "loc-a");
    CHECK(locs[1].location_id == "loc-b");
    CHECK(locs[2].location_id == "loc-c");
    CHECK_THROWS_AS(plat.add_location(loc("loc-a")), Error);
    CHECK(Platform{}.get_available_locations().empty());
    plat.shutdown();
}

TEST_CASE("move runs the hook per arrival with incremented incarnation") {
    PlatformConfig cfg;
    cfg.mode = SchedulerMode::Deterministic;
    Platform plat(cfg);
    plat.add_location(loc("loc-a"));
    plat.add_location(loc("loc-b"));
    plat.add_location(loc("loc-c"));

    struct Itinerant : Behavior {
        std::vector<std::pair<std::string, std::uint64_t>> arrivals;  // (loc, incarnation)
        int state_restores = 0;
        void on_message(const Message& msg, AgentContext& ctx) override {
            for (const auto& dest : msg.content["itinerary"]) {
                ctx.move(dest.get<std::string>());
            }
            ctx.send(Performative::Inform, msg.sender.name, msg.conversation_id,
                     {{"done", true}});
        }
        void after_move(const Location& dest, AgentContext& ctx) override {
            arrivals.emplace_back(dest.location_id, ctx.self().incarnation);
        }
        nlohmann::json snapshot_state() const override { return {{"n", arrivals.size()}}; }
        void restore_state(const nlohmann::json&) override { ++state_restores; }
    };

    auto itinerant = std::make_shared<Itinerant>();
    plat.spawn_agent("mover", itinerant);
    auto sink = std::make_shared<Recorder>();
    plat.spawn_agent("driver", sink);

    plat.send(make_msg(Performative::Request, "driver", "mover", "trip",
                       {{"itinerary", {"loc-a", "loc-b", "loc-c"}}}));
    while (sink->received().empty()) std::this_thread::yield();

    REQUIRE(itinerant->arrivals.size() == 3);
    CHECK(itinerant->arrivals[0] == std::pair<std::string, std::uint64_t>{"loc-a", 2});
    CHECK(itinerant->arrivals[1] == std::pair<std::string, std::uint64_t>{"loc-b", 3});
    CHECK(itinerant->arrivals[2] == std::pair<std::string, std::uint64_t>{"loc-c", 4});
    CHECK(itinerant->state_restores == 3);
    CHECK(plat.agent_location("mover")->location_id == "loc-c");
    plat.shutdown();
}

TEST_CASE("self-move still runs the hook once") {
    PlatformConfig cfg;
    cfg.mode = SchedulerMode::Deterministic;
    Platform plat(cfg);
    plat.add_location(loc("loc-a"));

    struct SelfMover : Behavior {
        int hooks = 0;
        void on_message(const Message& msg, AgentContext& ctx) override {
            ctx.move("loc-a");
            ctx.move("loc-a");
            ctx.send(Performative::Inform, msg.sender.name, msg.conversation_id, {});
        }
        void after_move(const Location&, AgentContext&) override { ++hooks; }
    };
    auto mover = std::make_shared<SelfMover>();
    plat.spawn_agent("mover", mover, std::optional<std::string>{"loc-a"});
    auto sink = std::make_shared<Recorder>();
    plat.spawn_agent("driver", sink);
    plat.send(make_msg(Performative::Request, "driver", "mover", "c"));
    while (sink->received().empty()) std::this_thread::yield();
    CHECK(mover->hooks == 2);
    plat.shutdown();
}

TEST_CASE("move to an unknown location raises and leaves the agent in place") {
    PlatformConfig cfg;
    cfg.mode = SchedulerMode::Deterministic;
    Platform plat(cfg);
    plat.add_location(loc("loc-a"));

    struct BadMover : Behavior {
        void on_message(const Message& msg, AgentContext& ctx) override {
            try {
                ctx.move("loc-nowhere");
                ctx.send(Performative::Inform, msg.sender.name, msg.conversation_id,
                         {{"moved", true}});
            } catch (const Error& e) {
                ctx.send(Performative::Failure, msg.sender.name, msg.conversation_id,
                         {{"code", error_code_name(e.code())}});
            }
        }
    };
    plat.spawn_agent("mover", std::make_shared<BadMover>(), std::optional<std::string>{"loc-a"});
    auto sink = std::make_shared<Recorder>();
    plat.spawn_agent("driver", sink);
    plat.send(make_msg(Performative::Request, "driver", "mover", "c"));
    while (sink->received().empty()) std::this_thread::yield();
    CHECK(sink->received()[0].content["code"] == "NoSuchLocation");
    CHECK(plat.agent_location("mover")->location_id == "loc-a");
    CHECK(plat.agent_id("mover")->incarnation == 1);
    plat.shutdown();
}

TEST_CASE("kill mid-transfer aborts the migration at the origin") {
    PlatformConfig cfg;
    cfg.mode = SchedulerMode::Deterministic;
    cfg.move_cost_ms = 50.0;  // transfer window in virtual time
    Platform plat(cfg);
    plat.add_location(loc("loc-a"));
    plat.add_location(loc("loc-b"));

    struct Victim : Behavior {
        std::atomic<int> hooks{0};
        void on_message(const Message&, AgentContext& ctx) override { ctx.move("loc-b"); }
        void after_move(const Location&, AgentContext&) override { ++hooks; }
    };
    auto victim = std::make_shared<Victim>();
    plat.spawn_agent("victim", victim, std::optional<std::string>{"loc-a"});

    // assassin strikes in the middle of the 50ms transfer window
    auto assassin_behavior = std::make_shared<Script>([&](const Message&, AgentContext& ctx) {
        ctx.work(10.0);
        ctx.kill("victim");
    });
    plat.spawn_agent("assassin", assassin_behavior);
    plat.spawn_agent("driver", std::make_shared<Recorder>());

    plat.send(make_msg(Performative::Request, "driver", "victim", "go"));
    plat.send(make_msg(Performative::Request, "driver", "assassin", "strike"));
    while (plat.is_live("victim")) std::this_thread::yield();
    plat.await_quiescent();

    CHECK(victim->hooks == 0);                                  // never arrived
    CHECK(plat.agent_location("victim")->location_id == "loc-a");  // stayed at origin
    plat.shutdown();
}

TEST_CASE("no execution during migration: hook completes before the new incarnation speaks") {
    PlatformConfig cfg;
    cfg.mode = SchedulerMode::Deterministic;
    cfg.move_cost_ms = 5.0;
    Platform plat(cfg);
    plat.add_location(loc("loc-a"));
    plat.add_location(loc("loc-b"));

    struct Hopper : Behavior {
        std::map<std::uint64_t, double> hook_done_at;  // incarnation -> vtime
        void on_message(const Message& msg, AgentContext& ctx) override {
            for (const auto& dest : {"loc-a", "loc-b"}) {
                ctx.move(dest);
                ctx.send(Performative::Inform, msg.sender.name, msg.conversation_id,
                         {{"incarnation", ctx.self().incarnation}, {"sent_at", ctx.now_ms()}});
            }
        }
        void after_move(const Location&, AgentContext& ctx) override {
            ctx.work(3.0);  // hook takes nonzero virtual time
            hook_done_at[ctx.self().incarnation] = ctx.now_ms();
        }
    };
    auto hopper = std::make_shared<Hopper>();
    plat.spawn_agent("hopper", hopper);
    auto sink = std::make_shared<Recorder>();
    plat.spawn_agent("driver", sink);
    plat.send(make_msg(Performative::Request, "driver", "hopper", "c"));
    while (sink->received().size() < 2) std::this_thread::yield();

    const auto trace = plat.sniffer_trace();
    for (const auto& m : sink->received()) {
        const auto inc = m.content["incarnation"].get<std::uint64_t>();
        REQUIRE(hopper->hook_done_at.count(inc) == 1);
        // the message sent by incarnation k appears in the trace no earlier
        // than the completion of the hook that created incarnation k
        for (const auto& ev : trace) {
            if (ev.from == "hopper" && ev.seq == m.seq) {
                CHECK(ev.t_ms >= hopper->hook_done_at[inc]);
            }
        }
    }
    plat.shutdown();
}

TEST_CASE("nested receive supports request-reply inside a handler") {
    Platform plat;
    auto echo = std::make_shared<Script>([](const Message& msg, AgentContext& ctx) {
        ctx.send(Performative::Confirm, msg.sender.name, msg.conversation_id, msg.content);
    });
    plat.spawn_agent("echo", echo);

    std::promise<bool> done;
    auto relay = std::make_shared<Script>([&](const Message& msg, AgentContext& ctx) {
        ctx.send(Performative::Request, "echo", msg.conversation_id, {{"ping", 1}});
        const Message reply = ctx.receive();
        done.set_value(reply.performative == Performative::Confirm &&
                       reply.content["ping"] == 1);
    });
    plat.spawn_agent("relay", relay);
    plat.spawn_agent("driver", std::make_shared<Recorder>());
    plat.send(make_msg(Performative::Request, "driver", "relay", "c"));
    CHECK(done.get_future().get());
    plat.shutdown();
}

TEST_CASE("deterministic mode is reproducible byte-for-byte") {
    auto run_once = [] {
        PlatformConfig cfg;
        cfg.mode = SchedulerMode::Deterministic;
        cfg.msg_cost_ms = 1.5;
        Platform plat(cfg);
        auto pong = std::make_shared<Script>([](const Message& msg, AgentContext& ctx) {
            ctx.work(4.0);
            ctx.send(Performative::Confirm, msg.sender.name, msg.conversation_id, {});
        });
        plat.spawn_agent("pong", pong);
        auto sink = std::make_shared<Recorder>();
        plat.spawn_agent("driver", sink);
        for (int i = 0; i < 5; ++i) {
            plat.await_quiescent();
            plat.send(make_msg(Performative::Request, "driver", "pong", "c" + std::to_string(i)));
            while (sink->received().size() < static_cast<std::size_t>(i + 1)) {
                std::this_thread::yield();
            }
        }
        plat.await_quiescent();
        const std::string trace = plat.export_trace();
        plat.shutdown();
        return trace;
    };
    const std::string a = run_once();
    const std::string b = run_once();
    CHECK(a == b);
    CHECK(a.find("\"t_ms\":") != std::string::npos);
}

TEST_CASE("trace export format is one flat record per line with exact keys") {
    Platform plat;
    auto sink = std::make_shared<Recorder>();
    plat.spawn_agent("sink", sink);
    plat.spawn_agent("src", std::make_shared<Recorder>());
    plat.send(make_msg(Performative::Request, "src", "sink", "conv-1"));
    while (sink->received().empty()) std::this_thread::yield();

    const std::string text = plat.export_trace();
    const auto line = text.substr(0, text.find('\n'));
    const auto j = nlohmann::json::parse(line);
    const std::vector<std::string> keys = {"seq", "t_ms", "performative", "from", "to",
                                           "conversation"};
    const auto ordered = nlohmann::ordered_json::parse(line);
    std::size_t i = 0;
    for (const auto& [key, _] : ordered.items()) {
        REQUIRE(i < keys.size());
        CHECK(key == keys[i]);
        ++i;
    }
    CHECK(j["performative"] == "REQUEST");
    CHECK(j["from"] == "src");
    CHECK(j["to"] == "sink");
    CHECK(j["conversation"] == "conv-1");
    CHECK(plat.sniffer_trace().size() == 1);
    plat.shutdown();
}

TEST_CASE("empty trace when nothing was delivered") {
    Platform plat;
    CHECK(plat.sniffer_trace().empty());
    CHECK(plat.export_trace().empty());
    plat.shutdown();
}
