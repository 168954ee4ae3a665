#include "metagadget/world.hpp"

#include "http_url.hpp"

#include "httplib.h"

#include <algorithm>
#include <sstream>
#include <thread>

namespace metagadget::world {

std::string_view to_string(ItemKind kind) noexcept {
    return kind == ItemKind::Clickable ? "Clickable" : "FloorRegion";
}

std::string_view to_string(Action action) noexcept {
    switch (action) {
    case Action::Join: return "Join";
    case Action::Leave: return "Leave";
    case Action::Click: return "Click";
    case Action::EnterRegion: return "EnterRegion";
    }
    return "Join";
}

ScenarioError::ScenarioError(std::string message, std::size_t line)
    : std::runtime_error(std::move(message)), line_(line) {}

// ---- PayloadTemplate ------------------------------------------------------

namespace {

[[nodiscard]] std::vector<std::string> split_choices(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto bar = text.find('|', start);
        out.emplace_back(text.substr(start, bar == std::string_view::npos ? text.npos : bar - start));
        if (bar == std::string_view::npos) break;
        start = bar + 1;
    }
    return out;
}

} // namespace

PayloadTemplate PayloadTemplate::parse(std::string_view text) {
    using K = Part::Kind;
    PayloadTemplate tpl;
    std::string literal;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, 2, "${") != 0) {
            literal += text[i++];
            continue;
        }
        auto close = text.find('}', i + 2);
        if (close == std::string_view::npos) {
            throw ScenarioError("unterminated placeholder in payload template '" + std::string(text) + "'");
        }
        auto name = text.substr(i + 2, close - i - 2);
        if (!literal.empty()) {
            tpl.parts_.push_back({K::Literal, std::move(literal), {}});
            literal.clear();
        }
        if (name == "userId") {
            tpl.parts_.push_back({K::UserId, {}, {}});
        } else if (name == "itemId") {
            tpl.parts_.push_back({K::ItemId, {}, {}});
        } else if (name == "worldId") {
            tpl.parts_.push_back({K::WorldId, {}, {}});
        } else if (name == "userCount") {
            tpl.parts_.push_back({K::UserCount, {}, {}});
        } else if (name == "count") {
            tpl.parts_.push_back({K::Count, {}, {}});
        } else if (name == "tMs") {
            tpl.parts_.push_back({K::TMs, {}, {}});
        } else if (name.substr(0, 6) == "cycle:") {
            tpl.parts_.push_back({K::Cycle, {}, split_choices(name.substr(6))});
        } else if (name.substr(0, 5) == "pick:") {
            tpl.parts_.push_back({K::Pick, {}, split_choices(name.substr(5))});
        } else {
            throw ScenarioError("unknown placeholder ${" + std::string(name) + "} in payload template");
        }
        i = close + 1;
    }
    if (!literal.empty()) tpl.parts_.push_back({K::Literal, std::move(literal), {}});
    return tpl;
}

std::string PayloadTemplate::render(const TriggerContext& ctx) const {
    using K = Part::Kind;
    std::string out;
    for (const auto& part : parts_) {
        switch (part.kind) {
        case K::Literal: out += part.literal; break;
        case K::UserId: out += ctx.user_id; break;
        case K::ItemId: out += ctx.item_id; break;
        case K::WorldId: out += ctx.world_id; break;
        case K::UserCount: out += std::to_string(ctx.connected_users); break;
        case K::Count: out += std::to_string(ctx.activation); break;
        case K::TMs: out += std::to_string(ctx.t_ms); break;
        case K::Cycle: {
            auto idx = ctx.activation == 0 ? 0 : (ctx.activation - 1) % part.choices.size();
            out += part.choices[idx];
            break;
        }
        case K::Pick: {
            if (ctx.rng == nullptr) throw ScenarioError("${pick:...} needs a seeded world");
            std::uniform_int_distribution<std::size_t> dist(0, part.choices.size() - 1);
            out += part.choices[dist(*ctx.rng)];
            break;
        }
        }
    }
    return out;
}

// ---- RateLimiter ----------------------------------------------------------

RateLimiter::RateLimiter(RateLimit limit) : limit_(limit) {
    if (limit_.max_calls < 1 || limit_.window_ms < 1) throw std::invalid_argument("rate limit must be positive");
}

bool RateLimiter::admit(const std::string& user_id, std::int64_t t_ms) {
    auto& c = users_[user_id];
    while (!c.admitted.empty() && c.admitted.front() <= t_ms - limit_.window_ms) c.admitted.pop_front();
    if (c.admitted.size() >= static_cast<std::size_t>(limit_.max_calls)) {
        ++c.dropped;
        return false;
    }
    c.admitted.push_back(t_ms);
    ++c.forwarded;
    return true;
}

std::uint64_t RateLimiter::dropped(const std::string& user_id) const {
    auto it = users_.find(user_id);
    return it == users_.end() ? 0 : it->second.dropped;
}

std::uint64_t RateLimiter::forwarded(const std::string& user_id) const {
    auto it = users_.find(user_id);
    return it == users_.end() ? 0 : it->second.forwarded;
}

// ---- Transport ------------------------------------------------------------

Transport http_transport(std::chrono::milliseconds timeout) {
    return [timeout](const std::string& url, const std::string& body) {
        auto split = detail::split_url(url);
        if (!split) return HttpResult{0, {}, "unsupported URL '" + url + "'"};
        httplib::Client client(split->origin);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        auto res = client.Post(split->path.empty() ? "/" : split->path, body, "application/json");
        if (!res) return HttpResult{0, {}, "POST " + url + " failed: " + httplib::to_string(res.error())};
        return HttpResult{res->status, res->body, {}};
    };
}

// ---- World ----------------------------------------------------------------

namespace {

// The string a script's on_response receives.
[[nodiscard]] std::string response_text(const HttpResult& result) {
    if (result.status == 0) return result.error;
    auto doc = Json::parse(result.body, nullptr, false);
    if (!doc.is_discarded() && doc.is_object()) {
        if (auto r = doc.find("response"); r != doc.end() && r->is_string()) return r->get<std::string>();
        if (auto e = doc.find("error"); e != doc.end() && e->is_object()) {
            if (auto m = e->find("message"); m != e->end() && m->is_string()) return m->get<std::string>();
        }
    }
    return result.body;
}

} // namespace

World::World(WorldOptions options)
    : options_(std::move(options)), limiter_(options_.rate_limit), rng_(options_.seed) {
    if (!options_.transport) options_.transport = http_transport();
}

World::~World() {
    // Outstanding futures must not outlive the world.
    for (auto& p : pending_) {
        if (p.result.valid()) p.result.wait();
    }
}

void World::add_user(SimulatedUser user) {
    if (find_user(user.user_id) != nullptr) throw ScenarioError("duplicate user '" + user.user_id + "'");
    users_.push_back(std::move(user));
}

void World::add_item(WorldItem item) {
    if (find_item(item.item_id) != nullptr) throw ScenarioError("duplicate item '" + item.item_id + "'");
    items_.push_back(std::move(item));
}

SimulatedUser* World::find_user(const std::string& user_id) {
    auto it = std::find_if(users_.begin(), users_.end(), [&](const auto& u) { return u.user_id == user_id; });
    return it == users_.end() ? nullptr : &*it;
}

WorldItem* World::find_item(const std::string& item_id) {
    auto it = std::find_if(items_.begin(), items_.end(), [&](const auto& i) { return i.item_id == item_id; });
    return it == items_.end() ? nullptr : &*it;
}

void World::join(const std::string& user_id, std::int64_t) {
    auto* user = find_user(user_id);
    if (user == nullptr) throw ScenarioError("unknown user '" + user_id + "'");
    user->connected = true;
}

void World::leave(const std::string& user_id, std::int64_t) {
    auto* user = find_user(user_id);
    if (user == nullptr) throw ScenarioError("unknown user '" + user_id + "'");
    user->connected = false;
}

void World::interact(const std::string& user_id, const std::string& item_id, std::int64_t t_ms) {
    fire(user_id, item_id, Action::Click, ItemKind::Clickable, t_ms);
}

void World::enter_region(const std::string& user_id, const std::string& item_id, std::int64_t t_ms) {
    fire(user_id, item_id, Action::EnterRegion, ItemKind::FloorRegion, t_ms);
}

void World::fire(const std::string& user_id, const std::string& item_id, Action action, ItemKind expected,
                 std::int64_t t_ms) {
    auto* item = find_item(item_id);
    if (item == nullptr) throw ScenarioError("unknown item '" + item_id + "'");
    if (item->kind != expected) {
        throw ScenarioError(std::string(to_string(action)) + " on " + std::string(to_string(item->kind)) + " item '"
                            + item_id + "'");
    }
    auto* user = find_user(user_id);
    if (user == nullptr) throw ScenarioError("unknown user '" + user_id + "'");
    if (!user->connected) {
        ++ignored_;
        return;
    }

    const auto activation = ++activations_[item_id];
    if (!item->script.on_event) return;
    TriggerContext ctx{t_ms, action, options_.world_id, user_id, item_id, connected_users(), activation, &rng_};
    if (auto payload = item->script.on_event(ctx)) call_external(user_id, item_id, std::move(*payload), t_ms);
}

void World::call_external(const std::string& user_id, const std::string& item_id, std::string payload,
                          std::int64_t t_ms) {
    auto* user = find_user(user_id);
    if (user == nullptr || !user->connected) {
        ++ignored_;
        return;
    }
    auto* item = find_item(item_id);
    if (item == nullptr) throw ScenarioError("unknown item '" + item_id + "'");

    CallRecord record{t_ms, user_id, item_id, payload, false, 0, {}};
    if (!limiter_.admit(user_id, t_ms)) {
        calls_.push_back(std::move(record));
        return;
    }
    record.forwarded = true;
    calls_.push_back(std::move(record));

    TriggerEnvelope env{std::move(payload), generate_request_id(), options_.world_id, item_id, user_id, t_ms};
    pending_.push_back(Pending{calls_.size() - 1,
                               std::async(std::launch::async,
                                          [transport = options_.transport, url = item->script.target_url,
                                           body = encode_envelope(env)]() {
                                              try {
                                                  return transport(url, body);
                                              } catch (const std::exception& ex) {
                                                  return HttpResult{0, {}, ex.what()};
                                              }
                                          })});
}

void World::flush() {
    auto pending = std::move(pending_);
    pending_.clear();
    for (auto& p : pending) {
        auto result = p.result.get();
        auto& record = calls_[p.call_index];
        record.status = result.status;
        record.response = response_text(result);
        if (result.status != 200) ++failed_;
        if (auto* item = find_item(record.item_id); item != nullptr && item->script.on_response) {
            item->script.on_response(record.response);
        }
    }
}

std::size_t World::connected_users() const {
    return static_cast<std::size_t>(std::count_if(users_.begin(), users_.end(), [](const auto& u) { return u.connected; }));
}

WorldReport World::report() const {
    WorldReport r;
    r.world_id = options_.world_id;
    r.seed = options_.seed;
    r.rate_limit = limiter_.limit();
    r.calls = calls_;
    r.failed_calls = failed_;
    r.ignored_events = ignored_;
    r.connected_users = connected_users();
    for (const auto& c : calls_) (c.forwarded ? r.forwarded_calls : r.dropped_calls)++;
    for (const auto& u : users_) {
        r.users.push_back({u.user_id, u.is_owner, u.connected, limiter_.forwarded(u.user_id), limiter_.dropped(u.user_id)});
    }
    for (const auto& i : items_) r.item_order.push_back(i.item_id);
    return r;
}

// ---- Report ---------------------------------------------------------------

std::map<std::string, std::vector<std::string>> WorldReport::responses_by_item() const {
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& id : item_order) out[id];
    for (const auto& c : calls) {
        if (c.forwarded) out[c.item_id].push_back(c.response);
    }
    return out;
}

nlohmann::ordered_json WorldReport::to_json() const {
    nlohmann::ordered_json doc;
    doc["worldId"] = world_id;
    doc["seed"] = seed;
    doc["rateLimit"] = {{"maxCalls", rate_limit.max_calls}, {"windowMs", rate_limit.window_ms}};
    doc["forwardedCalls"] = forwarded_calls;
    doc["droppedCalls"] = dropped_calls;
    doc["failedCalls"] = failed_calls;
    doc["ignoredEvents"] = ignored_events;
    doc["connectedUsers"] = connected_users;

    auto& user_list = doc["users"] = nlohmann::ordered_json::array();
    for (const auto& u : users) {
        user_list.push_back({{"userId", u.user_id},
                             {"isOwner", u.is_owner},
                             {"connected", u.connected},
                             {"forwarded", u.forwarded},
                             {"dropped", u.dropped}});
    }

    auto& call_list = doc["calls"] = nlohmann::ordered_json::array();
    for (const auto& c : calls) {
        call_list.push_back({{"tMs", c.t_ms},
                             {"userId", c.user_id},
                             {"itemId", c.item_id},
                             {"payload", c.payload},
                             {"forwarded", c.forwarded},
                             {"status", c.status},
                             {"response", c.response}});
    }

    auto& item_list = doc["items"] = nlohmann::ordered_json::array();
    const auto by_item = responses_by_item();
    for (const auto& id : item_order) item_list.push_back({{"itemId", id}, {"responses", by_item.at(id)}});
    return doc;
}

std::string WorldReport::to_text() const {
    std::ostringstream out;
    out << "world " << world_id << " seed " << seed << '\n';
    out << "forwarded=" << forwarded_calls << " dropped=" << dropped_calls << " failed=" << failed_calls
        << " ignored=" << ignored_events << " connected=" << connected_users << '\n';
    for (const auto& c : calls) {
        out << "  t=" << c.t_ms << ' ' << c.user_id << " -> " << c.item_id << " \"" << c.payload << "\" ";
        if (!c.forwarded) {
            out << "dropped (rate limit)\n";
        } else {
            out << c.status << ' ' << c.response << '\n';
        }
    }
    return out.str();
}

// ---- run_scenario ---------------------------------------------------------

WorldReport run_scenario(const Scenario& scenario, const std::string& gateway_url, const RunOptions& options) {
    World world(WorldOptions{options.world_id, scenario.rate_limit, scenario.seed, options.transport});
    for (const auto& u : scenario.users) world.add_user({u.user_id, false, u.is_owner});

    auto base = gateway_url;
    while (!base.empty() && base.back() == '/') base.pop_back();
    for (const auto& item : scenario.items) {
        auto tpl = PayloadTemplate::parse(item.payload_template);
        AttachedScript script;
        script.target_url = base + item.target_route;
        script.on_event = [tpl](const TriggerContext& ctx) -> std::optional<std::string> { return tpl.render(ctx); };
        world.add_item({item.item_id, item.kind, std::move(script)});
    }

    std::optional<std::int64_t> previous;
    for (const auto& ev : scenario.events) {
        if (options.real_time && previous && ev.t_ms > *previous) {
            std::this_thread::sleep_for(std::chrono::milliseconds(ev.t_ms - *previous));
        }
        previous = ev.t_ms;
        switch (ev.action) {
        case Action::Join: world.join(ev.user_id, ev.t_ms); break;
        case Action::Leave: world.leave(ev.user_id, ev.t_ms); break;
        case Action::Click: world.interact(ev.user_id, ev.item_id, ev.t_ms); break;
        case Action::EnterRegion: world.enter_region(ev.user_id, ev.item_id, ev.t_ms); break;
        }
        world.flush();
    }
    return world.report();
}

} // namespace metagadget::world
