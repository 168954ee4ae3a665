#pragma once

// Deterministic stand-in for a multi-user virtual world. Users join and
// leave, click items or walk into floor regions; attached scripts turn those
// events into callExternal-style POSTs carrying a TriggerEnvelope, issued on
// behalf of the triggering user. Time is virtual (scenario t_ms).

#include "metagadget/envelope.hpp"

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace metagadget::world {

enum class ItemKind { Clickable, FloorRegion };
enum class Action { Join, Leave, Click, EnterRegion };

[[nodiscard]] std::string_view to_string(ItemKind kind) noexcept;
[[nodiscard]] std::string_view to_string(Action action) noexcept;

class ScenarioError : public std::runtime_error {
public:
    ScenarioError(std::string message, std::size_t line = 0);
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct SimulatedUser {
    std::string user_id;
    bool connected = false;
    bool is_owner = false;
};

/// What a script sees when its item fires.
struct TriggerContext {
    std::int64_t t_ms = 0;
    Action action = Action::Click;
    std::string_view world_id;
    std::string_view user_id;
    std::string_view item_id;
    std::size_t connected_users = 0;
    std::uint64_t activation = 0; // 1-based count of this item's firings
    std::mt19937_64* rng = nullptr;
};

struct AttachedScript {
    std::function<std::optional<std::string>(const TriggerContext&)> on_event;
    std::function<void(const std::string& response)> on_response;
    std::string target_url;
};

struct WorldItem {
    std::string item_id;
    ItemKind kind = ItemKind::Clickable;
    AttachedScript script;
};

/// Payload template with ${...} placeholders:
///   ${userId} ${itemId} ${worldId} ${userCount} ${count} ${tMs}
///   ${cycle:a|b|c}  picks by activation count (a, b, c, a, ...)
///   ${pick:a|b|c}   picks with the world's seeded RNG
class PayloadTemplate {
public:
    /// Throws ScenarioError on an unknown or unterminated placeholder.
    static PayloadTemplate parse(std::string_view text);

    [[nodiscard]] std::string render(const TriggerContext& ctx) const;

private:
    struct Part {
        enum class Kind { Literal, UserId, ItemId, WorldId, UserCount, Count, TMs, Cycle, Pick } kind;
        std::string literal;
        std::vector<std::string> choices;
    };
    std::vector<Part> parts_;
};

struct RateLimit {
    int max_calls = 5;
    std::int64_t window_ms = 1000;

    friend bool operator==(const RateLimit&, const RateLimit&) = default;
};

/// Sliding window per user: a call at t is admitted when fewer than
/// max_calls were admitted in (t - window_ms, t].
class RateLimiter {
public:
    explicit RateLimiter(RateLimit limit = {});

    bool admit(const std::string& user_id, std::int64_t t_ms);
    [[nodiscard]] std::uint64_t dropped(const std::string& user_id) const;
    [[nodiscard]] std::uint64_t forwarded(const std::string& user_id) const;
    [[nodiscard]] const RateLimit& limit() const noexcept { return limit_; }

private:
    struct Counter {
        std::deque<std::int64_t> admitted;
        std::uint64_t forwarded = 0;
        std::uint64_t dropped = 0;
    };
    RateLimit limit_;
    std::map<std::string, Counter, std::less<>> users_;
};

struct ScenarioEvent {
    std::int64_t t_ms = 0;
    Action action = Action::Join;
    std::string user_id;
    std::string item_id; // Click / EnterRegion only
    std::size_t line = 0;
};

struct ScenarioUser {
    std::string user_id;
    bool is_owner = false;
};

struct ScenarioItem {
    std::string item_id;
    ItemKind kind = ItemKind::Clickable;
    std::string target_route;
    std::string payload_template;
};

struct Scenario {
    std::uint64_t seed = 0;
    RateLimit rate_limit;
    std::vector<ScenarioUser> users;
    std::vector<ScenarioItem> items;
    std::vector<ScenarioEvent> events;
};

/// Throws ScenarioError carrying the offending line.
[[nodiscard]] Scenario parse_scenario(std::string_view text, std::string_view source = "scenario");
[[nodiscard]] Scenario load_scenario(const std::filesystem::path& path);

struct CallRecord {
    std::int64_t t_ms = 0;
    std::string user_id;
    std::string item_id;
    std::string payload;
    bool forwarded = false; // false when the rate limiter dropped it
    int status = 0;         // HTTP status; 0 when not sent or the transport failed
    std::string response;   // "response" string, error message, or transport error
};

struct UserSummary {
    std::string user_id;
    bool is_owner = false;
    bool connected = false;
    std::uint64_t forwarded = 0;
    std::uint64_t dropped = 0;
};

struct WorldReport {
    std::string world_id;
    std::uint64_t seed = 0;
    RateLimit rate_limit;
    std::uint64_t forwarded_calls = 0;
    std::uint64_t dropped_calls = 0;
    std::uint64_t failed_calls = 0; // forwarded calls that did not get a 200
    std::uint64_t ignored_events = 0; // events from disconnected users
    std::size_t connected_users = 0;
    std::vector<UserSummary> users;
    std::vector<CallRecord> calls;
    std::vector<std::string> item_order;

    /// Responses per item, in delivery order.
    [[nodiscard]] std::map<std::string, std::vector<std::string>> responses_by_item() const;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
    [[nodiscard]] std::string to_text() const;
};

struct HttpResult {
    int status = 0; // 0 on transport failure
    std::string body;
    std::string error;
};

using Transport = std::function<HttpResult(const std::string& url, const std::string& body)>;

/// POSTs with cpp-httplib; http:// URLs only.
[[nodiscard]] Transport http_transport(std::chrono::milliseconds timeout = std::chrono::milliseconds{15'000});

struct WorldOptions {
    std::string world_id = "world";
    RateLimit rate_limit;
    std::uint64_t seed = 0;
    Transport transport; // defaults to http_transport()
};

class World {
public:
    explicit World(WorldOptions options = {});
    World(const World&) = delete;
    World& operator=(const World&) = delete;
    ~World();

    void add_user(SimulatedUser user);
    void add_item(WorldItem item);

    void join(const std::string& user_id, std::int64_t t_ms = 0);
    void leave(const std::string& user_id, std::int64_t t_ms = 0);

    /// Throws ScenarioError for an unknown item or a FloorRegion item.
    void interact(const std::string& user_id, const std::string& item_id, std::int64_t t_ms = 0);
    /// Throws ScenarioError for an unknown item or a Clickable item.
    void enter_region(const std::string& user_id, const std::string& item_id, std::int64_t t_ms = 0);

    /// Fire-and-forget POST of `payload` on behalf of `user_id`. Dropped
    /// silently (and counted) when the user is over the rate limit. The
    /// response reaches the item's on_response on the next flush().
    void call_external(const std::string& user_id, const std::string& item_id, std::string payload,
                       std::int64_t t_ms);

    /// Waits for outstanding calls and delivers their responses, in emission order.
    void flush();

    [[nodiscard]] std::size_t connected_users() const;
    [[nodiscard]] WorldReport report() const;

private:
    struct Pending {
        std::size_t call_index;
        std::future<HttpResult> result;
    };

    void fire(const std::string& user_id, const std::string& item_id, Action action, ItemKind expected,
              std::int64_t t_ms);
    [[nodiscard]] SimulatedUser* find_user(const std::string& user_id);
    [[nodiscard]] WorldItem* find_item(const std::string& item_id);

    WorldOptions options_;
    RateLimiter limiter_;
    std::mt19937_64 rng_;
    std::vector<SimulatedUser> users_;
    std::vector<WorldItem> items_;
    std::map<std::string, std::uint64_t, std::less<>> activations_;
    std::vector<CallRecord> calls_;
    std::vector<Pending> pending_;
    std::uint64_t failed_ = 0;
    std::uint64_t ignored_ = 0;
};

struct RunOptions {
    std::string world_id = "world";
    Transport transport;
    /// Sleep between events according to their t_ms deltas.
    bool real_time = false;
};

/// Executes the scenario in t_ms order against gateway_url (item target
/// routes are appended to it). Never throws for transport failures; those
/// are counted in failed_calls.
[[nodiscard]] WorldReport run_scenario(const Scenario& scenario, const std::string& gateway_url,
                                       const RunOptions& options = {});

} // namespace metagadget::world
