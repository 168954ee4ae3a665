#include "metagadget/world.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace metagadget::world {
namespace {

// Line on which each element of the top-level arrays ("users", "items",
// "events") starts; nlohmann::json does not keep source positions.
using LineIndex = std::map<std::pair<std::string, std::size_t>, std::size_t>;

[[nodiscard]] LineIndex index_lines(std::string_view text) {
    LineIndex index;
    std::vector<char> stack;
    std::string buffer, last_string, current_key, array_key;
    std::size_t line = 1, element = 0;
    bool in_string = false, escaped = false, want_element = false;

    for (char c : text) {
        if (c == '\n') ++line;
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
                last_string = buffer;
            } else {
                buffer += c;
            }
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') continue;
        if (stack.size() == 2 && stack.back() == '[' && want_element && c != ']') {
            index[{array_key, element++}] = line;
            want_element = false;
        }
        switch (c) {
        case '"':
            in_string = true;
            buffer.clear();
            break;
        case ':':
            if (stack.size() == 1) current_key = last_string;
            break;
        case '[':
            if (stack.size() == 1) {
                array_key = current_key;
                element = 0;
                want_element = true;
            }
            stack.push_back(c);
            break;
        case '{': stack.push_back(c); break;
        case '}':
        case ']':
            if (!stack.empty()) stack.pop_back();
            break;
        case ',':
            if (stack.size() == 2 && stack.back() == '[') want_element = true;
            break;
        default: break;
        }
    }
    return index;
}

class Reader {
public:
    Reader(std::string_view source, LineIndex lines) : source_(source), lines_(std::move(lines)) {}

    [[noreturn]] void fail(const std::string& where, std::size_t line, const std::string& message) const {
        std::ostringstream out;
        out << source_ << ':' << line << ": " << where << ": " << message;
        throw ScenarioError(out.str(), line);
    }

    [[nodiscard]] std::size_t line_of(const std::string& array, std::size_t i) const {
        auto it = lines_.find({array, i});
        return it == lines_.end() ? 1 : it->second;
    }

    [[nodiscard]] std::string require_string(const Json& obj, const char* key, const std::string& where,
                                             std::size_t line, bool allow_empty = false) const {
        auto it = obj.find(key);
        if (it == obj.end() || !it->is_string()) fail(where, line, std::string("\"") + key + "\" must be a string");
        auto value = it->get<std::string>();
        if (!allow_empty && value.empty()) fail(where, line, std::string("\"") + key + "\" must not be empty");
        return value;
    }

private:
    std::string_view source_;
    LineIndex lines_;
};

[[nodiscard]] std::optional<Action> parse_action(std::string_view s) {
    for (auto a : {Action::Join, Action::Leave, Action::Click, Action::EnterRegion}) {
        if (to_string(a) == s) return a;
    }
    return std::nullopt;
}

[[nodiscard]] std::optional<ItemKind> parse_kind(std::string_view s) {
    if (s == "Clickable") return ItemKind::Clickable;
    if (s == "FloorRegion") return ItemKind::FloorRegion;
    return std::nullopt;
}

} // namespace

Scenario parse_scenario(std::string_view text, std::string_view source) {
    Json doc;
    try {
        doc = Json::parse(text.begin(), text.end());
    } catch (const Json::parse_error& e) {
        // nlohmann reports "parse error at line L, column C: ..."
        std::size_t line = 1;
        for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i) {
            if (text[i] == '\n') ++line;
        }
        throw ScenarioError(std::string(source) + ":" + std::to_string(line) + ": invalid JSON: " + e.what(), line);
    }

    Reader r(source, index_lines(text));
    if (!doc.is_object()) r.fail("scenario", 1, "top level must be a JSON object");

    Scenario sc;
    if (auto seed = doc.find("seed"); seed != doc.end()) {
        if (!seed->is_number_unsigned()) r.fail("seed", 1, "must be a non-negative integer");
        sc.seed = seed->get<std::uint64_t>();
    }
    if (auto rl = doc.find("rateLimit"); rl != doc.end()) {
        if (!rl->is_object()) r.fail("rateLimit", 1, "must be an object");
        auto max_calls = rl->value("maxCalls", Json(sc.rate_limit.max_calls));
        auto window = rl->value("windowMs", Json(sc.rate_limit.window_ms));
        if (!max_calls.is_number_integer() || max_calls.get<std::int64_t>() < 1
            || max_calls.get<std::int64_t>() > INT32_MAX) {
            r.fail("rateLimit", 1, "maxCalls must be a positive integer");
        }
        if (!window.is_number_integer() || window.get<std::int64_t>() < 1) {
            r.fail("rateLimit", 1, "windowMs must be a positive integer");
        }
        sc.rate_limit = {max_calls.get<int>(), window.get<std::int64_t>()};
    }

    auto array = [&](const char* key) -> const Json& {
        static const Json empty = Json::array();
        auto it = doc.find(key);
        if (it == doc.end()) return empty;
        if (!it->is_array()) r.fail(key, 1, "must be an array");
        return *it;
    };

    std::set<std::string> user_ids;
    const auto& users = array("users");
    for (std::size_t i = 0; i < users.size(); ++i) {
        const auto where = "users[" + std::to_string(i) + "]";
        const auto line = r.line_of("users", i);
        const auto& u = users[i];
        if (!u.is_object()) r.fail(where, line, "must be an object");
        ScenarioUser user{r.require_string(u, "userId", where, line), false};
        if (auto owner = u.find("isOwner"); owner != u.end()) {
            if (!owner->is_boolean()) r.fail(where, line, "\"isOwner\" must be a boolean");
            user.is_owner = owner->get<bool>();
        }
        if (!user_ids.insert(user.user_id).second) r.fail(where, line, "duplicate userId '" + user.user_id + "'");
        sc.users.push_back(std::move(user));
    }

    std::map<std::string, ItemKind> item_kinds;
    const auto& items = array("items");
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto where = "items[" + std::to_string(i) + "]";
        const auto line = r.line_of("items", i);
        const auto& it = items[i];
        if (!it.is_object()) r.fail(where, line, "must be an object");
        ScenarioItem item;
        item.item_id = r.require_string(it, "itemId", where, line);
        auto kind = parse_kind(r.require_string(it, "kind", where, line));
        if (!kind) r.fail(where, line, "\"kind\" must be Clickable or FloorRegion");
        item.kind = *kind;
        auto script = it.find("script");
        if (script == it.end() || !script->is_object()) r.fail(where, line, "\"script\" must be an object");
        item.target_route = r.require_string(*script, "targetRoute", where, line, true);
        if (!item.target_route.empty() && item.target_route.front() != '/') {
            r.fail(where, line, "\"targetRoute\" must be empty or start with '/'");
        }
        item.payload_template = r.require_string(*script, "payloadTemplate", where, line, true);
        try {
            (void)PayloadTemplate::parse(item.payload_template);
        } catch (const ScenarioError& e) {
            r.fail(where, line, e.what());
        }
        if (!item_kinds.emplace(item.item_id, item.kind).second) {
            r.fail(where, line, "duplicate itemId '" + item.item_id + "'");
        }
        sc.items.push_back(std::move(item));
    }

    const auto& events = array("events");
    std::int64_t last_t = 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto where = "events[" + std::to_string(i) + "]";
        const auto line = r.line_of("events", i);
        const auto& e = events[i];
        if (!e.is_object()) r.fail(where, line, "must be an object");
        ScenarioEvent ev;
        ev.line = line;
        auto t = e.find("tMs");
        if (t == e.end() || !t->is_number_integer() || t->get<std::int64_t>() < 0) {
            r.fail(where, line, "\"tMs\" must be a non-negative integer");
        }
        ev.t_ms = t->get<std::int64_t>();
        if (i > 0 && ev.t_ms < last_t) {
            r.fail(where, line,
                   "events out of time order (" + std::to_string(ev.t_ms) + " after " + std::to_string(last_t) + ")");
        }
        last_t = ev.t_ms;

        auto action = parse_action(r.require_string(e, "action", where, line));
        if (!action) r.fail(where, line, "\"action\" must be Join, Leave, Click or EnterRegion");
        ev.action = *action;
        ev.user_id = r.require_string(e, "userId", where, line);
        if (user_ids.count(ev.user_id) == 0) r.fail(where, line, "unknown userId '" + ev.user_id + "'");

        if (ev.action == Action::Click || ev.action == Action::EnterRegion) {
            ev.item_id = r.require_string(e, "itemId", where, line);
            auto kind = item_kinds.find(ev.item_id);
            if (kind == item_kinds.end()) r.fail(where, line, "unknown itemId '" + ev.item_id + "'");
            const auto needed = ev.action == Action::Click ? ItemKind::Clickable : ItemKind::FloorRegion;
            if (kind->second != needed) {
                r.fail(where, line,
                       std::string(to_string(ev.action)) + " needs a " + std::string(to_string(needed)) + " item, '"
                           + ev.item_id + "' is " + std::string(to_string(kind->second)));
            }
        }
        sc.events.push_back(std::move(ev));
    }
    return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario(buffer.str(), path.string());
}

} // namespace metagadget::world
