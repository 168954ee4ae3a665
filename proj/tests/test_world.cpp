#include "doctest.h"
#include "support.hpp"

#include "metagadget/devices.hpp"
#include "metagadget/gateway.hpp"
#include "metagadget/world.hpp"

#include <deque>
#include <mutex>

using namespace metagadget;
using namespace metagadget::world;

namespace {

// Records every POST and answers {"response": <request>}.
struct RecordingTransport {
    std::shared_ptr<std::vector<std::pair<std::string, TriggerEnvelope>>> seen =
        std::make_shared<std::vector<std::pair<std::string, TriggerEnvelope>>>();
    std::shared_ptr<std::mutex> mutex = std::make_shared<std::mutex>();

    Transport transport() const {
        return [seen = seen, mutex = mutex](const std::string& url, const std::string& body) {
            auto env = decode_envelope(body);
            std::lock_guard lock(*mutex);
            seen->emplace_back(url, *env);
            return HttpResult{200, Json{{"response", env->request}}.dump(), {}};
        };
    }
};

struct DeviceGateway {
    DeviceRegistry devices = DeviceRegistry::demo_defaults();
    std::optional<ServerHandle> server;

    DeviceGateway() {
        HandlerRegistration reg;
        devices.bind_routes(reg);
        server.emplace(run({}, std::move(reg)));
    }
    [[nodiscard]] std::string url() const { return server->local_url(); }
};

std::string error_of(const std::string& text) {
    try {
        (void)parse_scenario(text, "s.json");
    } catch (const ScenarioError& e) {
        return e.what();
    }
    return {};
}

std::size_t line_of(const std::string& text) {
    try {
        (void)parse_scenario(text, "s.json");
    } catch (const ScenarioError& e) {
        return e.line();
    }
    return 0;
}

} // namespace

TEST_CASE("fixture scenarios load") {
    auto fan = load_scenario(testsupport::fixtures() / "fan_3users.json");
    CHECK(fan.seed == 7);
    CHECK(fan.rate_limit == RateLimit{5, 1000});
    CHECK(fan.users.size() == 3);
    CHECK(fan.users[0].is_owner);
    REQUIRE(fan.items.size() == 1);
    CHECK(fan.items[0].target_route == "/fan");
    CHECK(fan.events.size() == 6);
    CHECK(fan.events[3].action == Action::Click);

    auto lamp = load_scenario(testsupport::fixtures() / "presence_lamp.json");
    CHECK(lamp.users.size() == 10);
    CHECK(lamp.events.size() == 20);
    CHECK(lamp.rate_limit == RateLimit{});

    CHECK_THROWS_AS((void)load_scenario("/does/not/exist.json"), ScenarioError);
}

TEST_CASE("scenario errors carry line numbers") {
    const std::string head = R"({
  "users": [
    {"userId": "a"},
    {"userId": "b"}
  ],
  "items": [
    {"itemId": "fan", "kind": "Clickable", "script": {"targetRoute": "/fan", "payloadTemplate": "on"}},
    {"itemId": "zone", "kind": "FloorRegion", "script": {"targetRoute": "/z", "payloadTemplate": ""}}
  ],
  "events": [
    {"tMs": 10, "action": "Join", "userId": "a"},
)";
    auto with = [&](const std::string& last) { return head + "    " + last + "\n  ]\n}\n"; };

    auto out_of_order = with(R"({"tMs": 5, "action": "Join", "userId": "b"})");
    CHECK(line_of(out_of_order) == 12);
    CHECK(error_of(out_of_order).rfind("s.json:12: events[1]:", 0) == 0);
    CHECK(error_of(out_of_order).find("time order") != std::string::npos);

    CHECK(line_of(with(R"({"tMs": 20, "action": "Join", "userId": "zed"})")) == 12);
    CHECK(error_of(with(R"({"tMs": 20, "action": "Click", "userId": "a", "itemId": "zone"})")).find("needs a Clickable")
          != std::string::npos);
    CHECK(error_of(with(R"({"tMs": 20, "action": "EnterRegion", "userId": "a", "itemId": "fan"})"))
              .find("needs a FloorRegion")
          != std::string::npos);
    CHECK(error_of(with(R"({"tMs": 20, "action": "Click", "userId": "a", "itemId": "nope"})")).find("unknown itemId")
          != std::string::npos);
    CHECK(error_of(with(R"({"tMs": 20, "action": "Dance", "userId": "a"})")).find("action") != std::string::npos);
    CHECK(error_of(with(R"({"tMs": -1, "action": "Join", "userId": "a"})")).find("tMs") != std::string::npos);

    CHECK(line_of(head + "    {\"tMs\": 20,,}\n  ]\n}\n") == 12);
    CHECK(line_of(R"({"users": [{"userId": "a"}, {"userId": "a"}]})") == 1);

    auto bad_item = R"({
  "items": [
    {"itemId": "x", "kind": "Clickable", "script": {"targetRoute": "fan", "payloadTemplate": ""}}
  ]
})";
    CHECK(line_of(bad_item) == 3);
    auto bad_template = R"({
  "items": [
    {"itemId": "x", "kind": "Clickable", "script": {"targetRoute": "/f", "payloadTemplate": "${nope}"}}
  ]
})";
    CHECK(error_of(bad_template).rfind("s.json:3: items[0]:", 0) == 0);
}

TEST_CASE("payload templates") {
    std::mt19937_64 rng(1);
    TriggerContext ctx{1500, Action::Click, "w1", "alice", "fan", 4, 3, &rng};
    CHECK(PayloadTemplate::parse("${userId}@${itemId} in ${worldId}").render(ctx) == "alice@fan in w1");
    CHECK(PayloadTemplate::parse("${userCount}/${count}/${tMs}").render(ctx) == "4/3/1500");
    CHECK(PayloadTemplate::parse("${cycle:on|off}").render(ctx) == "on");
    ctx.activation = 2;
    CHECK(PayloadTemplate::parse("${cycle:on|off}").render(ctx) == "off");
    CHECK(PayloadTemplate::parse("plain $ text").render(ctx) == "plain $ text");
    auto pick = PayloadTemplate::parse("${pick:a|b|c}").render(ctx);
    CHECK((pick == "a" || pick == "b" || pick == "c"));

    CHECK_THROWS_AS((void)PayloadTemplate::parse("${userId"), ScenarioError);
    CHECK_THROWS_AS((void)PayloadTemplate::parse("${bogus}"), ScenarioError);
    CHECK_THROWS_AS((void)PayloadTemplate::parse("${cycle}"), ScenarioError);
    CHECK(PayloadTemplate::parse("[${cycle:}]").render(ctx) == "[]");
}

TEST_CASE("rate limiter drops the excess") {
    RateLimiter limiter;
    int admitted = 0;
    for (int i = 0; i < 10; ++i) admitted += limiter.admit("u", 100) ? 1 : 0;
    CHECK(admitted == 5);
    CHECK(limiter.forwarded("u") == 5);
    CHECK(limiter.dropped("u") == 5);
    CHECK(limiter.admit("other", 100));

    CHECK_FALSE(limiter.admit("u", 1099));
    CHECK(limiter.admit("u", 1100));
}

TEST_CASE("rate limit soundness over random timelines") {
    std::mt19937_64 rng(555);
    for (int trial = 0; trial < 100; ++trial) {
        const RateLimit limit{1 + static_cast<int>(rng() % 6), 50 + static_cast<std::int64_t>(rng() % 1000)};
        RateLimiter limiter(limit);
        std::vector<std::int64_t> admitted;
        std::int64_t t = 0;
        for (int i = 0; i < 300; ++i) {
            t += static_cast<std::int64_t>(rng() % 60);
            if (limiter.admit("u", t)) admitted.push_back(t);
        }
        for (std::size_t i = 0; i < admitted.size(); ++i) {
            const auto in_window = std::count_if(admitted.begin(), admitted.end(), [&](std::int64_t x) {
                return x > admitted[i] - limit.window_ms && x <= admitted[i];
            });
            REQUIRE(in_window <= limit.max_calls);
        }
        CHECK(limiter.forwarded("u") + limiter.dropped("u") == 300);
    }
}

TEST_CASE("world semantics with an in-process transport") {
    RecordingTransport rec;
    World world(WorldOptions{"w", {}, 1, rec.transport()});
    world.add_user({"owner", false, true});
    world.add_user({"guest", false, false});

    std::vector<std::string> responses;
    AttachedScript script;
    script.target_url = "http://gw/trigger/fan";
    script.on_event = [](const TriggerContext& ctx) -> std::optional<std::string> {
        return std::string(ctx.user_id) + ":" + std::to_string(ctx.connected_users);
    };
    script.on_response = [&](const std::string& r) { responses.push_back(r); };
    world.add_item({"fan", ItemKind::Clickable, script});
    world.add_item({"mat", ItemKind::FloorRegion, {}});

    world.interact("guest", "fan", 0);
    world.flush();
    CHECK(rec.seen->empty());
    CHECK(world.report().ignored_events == 1);

    world.join("guest", 10);
    world.interact("guest", "fan", 20);
    world.flush();
    REQUIRE(rec.seen->size() == 1);
    const auto& [url, env] = rec.seen->front();
    CHECK(url == "http://gw/trigger/fan");
    CHECK(env.user_id == "guest");
    CHECK(env.world_id == "w");
    CHECK(env.item_id == "fan");
    CHECK(env.timestamp_ms == 20);
    CHECK(env.request == "guest:1");
    CHECK(responses == std::vector<std::string>{"guest:1"});

    CHECK_THROWS_AS(world.interact("guest", "mat", 30), ScenarioError);
    CHECK_THROWS_AS(world.enter_region("guest", "fan", 30), ScenarioError);
    CHECK_THROWS_AS(world.interact("guest", "nothing", 30), ScenarioError);
    CHECK_NOTHROW(world.enter_region("guest", "mat", 30));

    world.leave("guest", 40);
    world.interact("guest", "fan", 50);
    world.flush();
    CHECK(rec.seen->size() == 1);

    auto report = world.report();
    CHECK(report.forwarded_calls == 1);
    CHECK(report.failed_calls == 0);
    CHECK(report.ignored_events == 2);
    CHECK(report.connected_users == 0);
}

TEST_CASE("rate-limited calls are recorded as dropped") {
    RecordingTransport rec;
    World world(WorldOptions{"w", {2, 1000}, 0, rec.transport()});
    world.add_user({"u", false, false});
    AttachedScript script;
    script.on_event = [](const TriggerContext&) -> std::optional<std::string> { return "x"; };
    world.add_item({"b", ItemKind::Clickable, script});
    world.join("u");
    for (int i = 0; i < 5; ++i) world.interact("u", "b", i);
    world.flush();
    auto report = world.report();
    CHECK(report.forwarded_calls == 2);
    CHECK(report.dropped_calls == 3);
    CHECK(rec.seen->size() == 2);
    CHECK(report.users[0].dropped == 3);
}

TEST_CASE("fan scenario against a live gateway") {
    DeviceGateway gw;
    auto report = run_scenario(load_scenario(testsupport::fixtures() / "fan_3users.json"), gw.url());
    CHECK(report.forwarded_calls == 3);
    CHECK(report.failed_calls == 0);
    CHECK(gw.devices.get<Fan>("fan")->state() == FanState::Running);

    auto log = gw.server->request_log().snapshot();
    REQUIRE(log.size() == 3);
    const char* users[] = {"u1", "u2", "u3"};
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(log[i].envelope->user_id == users[i]);
        CHECK(log[i].envelope->world_id == "world");
    }
}

TEST_CASE("doorbell works with the owner offline") {
    DeviceGateway gw;
    auto report = run_scenario(load_scenario(testsupport::fixtures() / "doorbell_owner_offline.json"), gw.url());
    CHECK(gw.devices.get<Doorbell>("doorbell")->chime_count() == 2);
    for (const auto& u : report.users) {
        if (u.is_owner) CHECK_FALSE(u.connected);
    }
    for (const auto& e : gw.server->request_log().snapshot()) CHECK(e.envelope->user_id != "owner");
}

TEST_CASE("doorbell chimes equal admitted entries from connected users") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        DeviceGateway gw;
        Scenario sc;
        sc.rate_limit = {3, 500};
        sc.users = {{"a", false}, {"b", false}, {"c", false}};
        sc.items = {{"door", ItemKind::FloorRegion, "/doorbell", "ring"}};
        std::int64_t t = 0;
        std::set<std::string> online;
        std::size_t expected_events = 0;
        for (int i = 0; i < 40; ++i) {
            t += static_cast<std::int64_t>(rng() % 120);
            const std::string user(1, static_cast<char>('a' + rng() % 3));
            switch (rng() % 4) {
            case 0:
                sc.events.push_back({t, Action::Join, user, "", 0});
                online.insert(user);
                break;
            case 1:
                sc.events.push_back({t, Action::Leave, user, "", 0});
                online.erase(user);
                break;
            default:
                sc.events.push_back({t, Action::EnterRegion, user, "door", 0});
                expected_events += online.count(user);
                break;
            }
        }
        auto report = run_scenario(sc, gw.url());
        CHECK(report.forwarded_calls + report.dropped_calls == expected_events);
        CHECK(gw.devices.get<Doorbell>("doorbell")->chime_count()
              == static_cast<std::int64_t>(report.forwarded_calls));
    }
}

TEST_CASE("presence lamp trace") {
    DeviceGateway gw;
    auto report = run_scenario(load_scenario(testsupport::fixtures() / "presence_lamp.json"), gw.url());
    auto responses = report.responses_by_item()["lobby"];
    REQUIRE(responses.size() == 10);
    for (std::size_t k = 0; k < responses.size(); ++k) {
        CHECK(Json::parse(responses[k])["brightness"] == std::min<int>(100, 20 * static_cast<int>(k + 1)));
    }
}

TEST_CASE("runs are deterministic for a fixed seed") {
    auto sc = load_scenario(testsupport::fixtures() / "fan_demo.json");
    sc.items[0].payload_template = "${pick:on|off|on}";
    std::string first;
    for (int i = 0; i < 3; ++i) {
        DeviceGateway gw;
        auto text = run_scenario(sc, gw.url()).to_json().dump();
        if (i == 0) first = text;
        CHECK(text == first);
    }
    sc.seed += 1;
    DeviceGateway gw;
    CHECK(run_scenario(sc, gw.url()).to_json().dump() != first);
}

TEST_CASE("a dead gateway fails every forwarded call without throwing") {
    auto sc = load_scenario(testsupport::fixtures() / "fan_3users.json");
    auto report = run_scenario(sc, "http://127.0.0.1:1/trigger");
    CHECK(report.forwarded_calls == 3);
    CHECK(report.failed_calls == 3);
    for (const auto& c : report.calls) CHECK(c.status == 0);
}

TEST_CASE("report JSON shape") {
    RecordingTransport rec;
    auto report = run_scenario(load_scenario(testsupport::fixtures() / "fan_3users.json"), "http://gw/trigger/",
                               RunOptions{"w9", rec.transport(), false});
    CHECK(rec.seen->front().first == "http://gw/trigger/fan");
    auto doc = report.to_json();
    std::vector<std::string> keys;
    for (auto it = doc.begin(); it != doc.end(); ++it) keys.push_back(it.key());
    CHECK(keys == std::vector<std::string>{"worldId", "seed", "rateLimit", "forwardedCalls", "droppedCalls",
                                           "failedCalls", "ignoredEvents", "connectedUsers", "users", "calls",
                                           "items"});
    CHECK(doc["worldId"] == "w9");
    CHECK(doc["items"][0]["itemId"] == "fan");
    CHECK(doc["items"][0]["responses"] == Json::parse(R"(["on","off","on"])"));
    CHECK(report.to_text().find("forwarded=3") != std::string::npos);
}
