#include "metagadget/smarthome.hpp"

#include "http_url.hpp"

#include "httplib.h"

#include <algorithm>
#include <cstdint>
#include <functional>

namespace metagadget::smarthome {
namespace {

using E = Unexpected<ClientError>;

[[nodiscard]] ClientError protocol(std::string message) {
    return ClientError{ClientErrorKind::Protocol, std::move(message)};
}

[[nodiscard]] ClientResult<DeviceStatus> parse_status(ClientResult<Json> body) {
    if (!body) return E{body.error()};
    auto status = status_from_json(*body);
    if (!status) return E{protocol("bad status body: " + status.error())};
    return std::move(*status);
}

} // namespace

SwitchBotClient::SwitchBotClient(std::string base_url, std::string token, std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), token_(std::move(token)), timeout_(timeout) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

ClientResult<Json> SwitchBotClient::call(const std::string& method, const std::string& path,
                                         const std::string* body) const {
    auto url = detail::split_url(base_url_);
    if (!url) return E{ClientError{ClientErrorKind::Transport, "unsupported base URL '" + base_url_ + "'"}};

    httplib::Client http(url->origin);
    http.set_connection_timeout(timeout_);
    http.set_read_timeout(timeout_);
    http.set_write_timeout(timeout_);
    httplib::Headers headers{{"Authorization", token_}};

    const auto full_path = url->path + path;
    auto res = method == "POST" ? http.Post(full_path, headers, *body, "application/json")
                                : http.Get(full_path, headers);
    if (!res) {
        return E{ClientError{ClientErrorKind::Transport,
                             method + " " + base_url_ + path + " failed: " + httplib::to_string(res.error())}};
    }

    auto doc = Json::parse(res->body, nullptr, false);
    std::string message = "HTTP " + std::to_string(res->status);
    if (!doc.is_discarded() && doc.is_object() && doc.contains("message") && doc["message"].is_string()) {
        message = doc["message"].get<std::string>();
    }
    switch (res->status) {
    case 200: break;
    case 401: return E{ClientError{ClientErrorKind::Unauthorized, message}};
    case 404: return E{ClientError{ClientErrorKind::NotFound, message}};
    case 400: return E{ClientError{ClientErrorKind::InvalidCommand, message}};
    default: return E{protocol("unexpected " + message)};
    }
    if (doc.is_discarded() || !doc.is_object() || doc.value("statusCode", 0) != 100 || !doc.contains("body")) {
        return E{protocol("malformed response envelope")};
    }
    return doc["body"];
}

ClientResult<std::vector<SmartHomeDevice>> SwitchBotClient::list_devices() const {
    auto body = call("GET", "/v1.1/devices", nullptr);
    if (!body) return E{body.error()};
    auto list = body->find("deviceList");
    if (list == body->end() || !list->is_array()) return E{protocol("missing deviceList")};
    std::vector<SmartHomeDevice> devices;
    for (const auto& item : *list) {
        auto device = device_from_json(item);
        if (!device) return E{protocol("bad device entry: " + device.error())};
        devices.push_back(std::move(*device));
    }
    return devices;
}

ClientResult<DeviceStatus> SwitchBotClient::send_command(std::string_view device_id, const CommandRequest& cmd) const {
    const auto body = to_json(cmd).dump();
    return parse_status(call("POST", "/v1.1/devices/" + std::string(device_id) + "/commands", &body));
}

ClientResult<DeviceStatus> SwitchBotClient::get_status(std::string_view device_id) const {
    return parse_status(call("GET", "/v1.1/devices/" + std::string(device_id) + "/status", nullptr));
}

ClientResult<DeviceStatus> SwitchBotClient::turn_on(std::string_view device_id) const {
    return send_command(device_id, CommandRequest{"turnOn"});
}

ClientResult<DeviceStatus> SwitchBotClient::turn_off(std::string_view device_id) const {
    return send_command(device_id, CommandRequest{"turnOff"});
}

ClientResult<DeviceStatus> SwitchBotClient::set_brightness(std::string_view device_id, int level) const {
    return send_command(device_id, CommandRequest{"setBrightness", level});
}

ClientResult<DeviceStatus> SwitchBotClient::press(std::string_view device_id) const {
    return send_command(device_id, CommandRequest{"press"});
}

// ---- dispatch -------------------------------------------------------------

namespace {

using Bound = std::vector<Json>;

struct FunctionSpec {
    std::string_view name;
    std::vector<std::string_view> params;
    std::function<ClientResult<Json>(const SwitchBotClient&, const Bound&)> invoke;
};

template <class T>
[[nodiscard]] ClientResult<Json> as_json(const ClientResult<T>& result) {
    if (!result) return E{result.error()};
    if constexpr (std::is_same_v<T, std::vector<SmartHomeDevice>>) {
        Json list = Json::array();
        for (const auto& d : *result) list.push_back(to_json(d));
        return list;
    } else {
        return to_json(*result);
    }
}

// Parameter type errors surface as MalformedPayload, like arity errors.
struct ArgumentError {
    std::string message;
};

[[nodiscard]] std::string device_id_arg(const Json& value) {
    if (!value.is_string()) throw ArgumentError{"device_id must be a string"};
    return value.get<std::string>();
}

[[nodiscard]] int level_arg(const Json& value) {
    if (!value.is_number_integer()) throw ArgumentError{"level must be an integer"};
    auto v = value.get<std::int64_t>();
    if (v < INT32_MIN || v > INT32_MAX) throw ArgumentError{"level out of range"};
    return static_cast<int>(v);
}

const std::vector<FunctionSpec>& function_table() {
    static const std::vector<FunctionSpec> table = {
        {"list_devices", {}, [](const SwitchBotClient& c, const Bound&) { return as_json(c.list_devices()); }},
        {"turn_on", {"device_id"},
         [](const SwitchBotClient& c, const Bound& a) { return as_json(c.turn_on(device_id_arg(a[0]))); }},
        {"turn_off", {"device_id"},
         [](const SwitchBotClient& c, const Bound& a) { return as_json(c.turn_off(device_id_arg(a[0]))); }},
        {"set_brightness", {"device_id", "level"},
         [](const SwitchBotClient& c, const Bound& a) {
             return as_json(c.set_brightness(device_id_arg(a[0]), level_arg(a[1])));
         }},
        {"press", {"device_id"},
         [](const SwitchBotClient& c, const Bound& a) { return as_json(c.press(device_id_arg(a[0]))); }},
        {"get_status", {"device_id"},
         [](const SwitchBotClient& c, const Bound& a) { return as_json(c.get_status(device_id_arg(a[0]))); }},
    };
    return table;
}

// Python-style binding: positionals first, then keywords by parameter name.
[[nodiscard]] Expected<Bound, std::string> bind(const FunctionSpec& fn, const SmartHomeRequest& req) {
    using Fail = Unexpected<std::string>;
    const auto n = fn.params.size();
    if (req.args.size() > n) {
        return Fail{std::string(fn.name) + "() takes " + std::to_string(n) + " positional argument(s) but "
                    + std::to_string(req.args.size()) + " were given"};
    }
    std::vector<std::optional<Json>> slots(n);
    for (std::size_t i = 0; i < req.args.size(); ++i) slots[i] = req.args[i];
    for (const auto& [key, value] : req.kwargs) {
        auto it = std::find(fn.params.begin(), fn.params.end(), key);
        if (it == fn.params.end()) {
            return Fail{std::string(fn.name) + "() got an unexpected keyword argument '" + key + "'"};
        }
        auto& slot = slots[static_cast<std::size_t>(it - fn.params.begin())];
        if (slot) return Fail{std::string(fn.name) + "() got multiple values for argument '" + key + "'"};
        slot = value;
    }
    Bound bound;
    for (std::size_t i = 0; i < n; ++i) {
        if (!slots[i]) {
            return Fail{std::string(fn.name) + "() missing required argument '" + std::string(fn.params[i]) + "'"};
        }
        bound.push_back(std::move(*slots[i]));
    }
    return bound;
}

} // namespace

const std::vector<std::string>& allowed_functions() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& fn : function_table()) out.emplace_back(fn.name);
        return out;
    }();
    return names;
}

HandlerResponse to_response(const ClientResult<Json>& outcome) {
    if (outcome) return HandlerResponse::ok(*outcome);
    const auto& err = outcome.error();
    switch (err.kind) {
    case ClientErrorKind::NotFound:
        return HandlerResponse::failure(ResponseStatus::NotFound, {ErrorCode::DeviceFault, err.message, ""});
    case ClientErrorKind::InvalidCommand:
        return HandlerResponse::failure({ErrorCode::MalformedPayload, err.message, ""});
    case ClientErrorKind::Unauthorized:
    case ClientErrorKind::Transport:
    case ClientErrorKind::Protocol:
        break;
    }
    return HandlerResponse::failure(
        {ErrorCode::DeviceFault, std::string(to_string(err.kind)) + ": " + err.message, ""});
}

HandlerResponse dispatch(const SmartHomeRequest& req, const SwitchBotClient& client) {
    const auto& table = function_table();
    auto fn = std::find_if(table.begin(), table.end(), [&](const auto& f) { return f.name == req.function_name; });
    if (fn == table.end()) {
        return HandlerResponse::failure({ErrorCode::UnknownFunction, "function not allowed: " + req.function_name, ""});
    }
    auto bound = bind(*fn, req);
    if (!bound) return HandlerResponse::failure({ErrorCode::MalformedPayload, bound.error(), ""});
    try {
        return to_response(fn->invoke(client, *bound));
    } catch (const ArgumentError& e) {
        return HandlerResponse::failure({ErrorCode::MalformedPayload, e.message, ""});
    }
}

Handler dispatch_handler(std::shared_ptr<const SwitchBotClient> client) {
    return [client = std::move(client)](const RequestContext& ctx) {
        auto req = parse_smarthome_request(ctx.payload);
        if (!req) return HandlerResponse::failure(req.error());
        return dispatch(*req, *client);
    };
}

} // namespace metagadget::smarthome
