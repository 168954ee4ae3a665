#include "metagadget/envelope.hpp"

#include <atomic>
#include <cstdio>
#include <random>

namespace metagadget {
namespace {

constexpr auto kDumpIndent = -1;

[[nodiscard]] std::string dump(const Json& value) {
    return value.dump(kDumpIndent, ' ', false, Json::error_handler_t::replace);
}

[[nodiscard]] ResponseStatus default_status(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::MalformedEnvelope:
    case ErrorCode::MalformedPayload:
    case ErrorCode::UnknownFunction:
        return ResponseStatus::BadRequest;
    case ErrorCode::DeviceFault:
    case ErrorCode::Internal:
        break;
    }
    return ResponseStatus::HandlerError;
}

// Reads an optional string metadata field; wrong type is an error.
[[nodiscard]] bool read_string(const Json& doc, const char* key, std::string& out) {
    auto it = doc.find(key);
    if (it == doc.end() || it->is_null()) return true;
    if (!it->is_string()) return false;
    out = it->get<std::string>();
    return true;
}

} // namespace

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::MalformedEnvelope: return "MalformedEnvelope";
    case ErrorCode::MalformedPayload: return "MalformedPayload";
    case ErrorCode::UnknownFunction: return "UnknownFunction";
    case ErrorCode::DeviceFault: return "DeviceFault";
    case ErrorCode::Internal: return "Internal";
    }
    return "Internal";
}

Json to_json(const GatewayError& err) {
    return Json{{"error",
                 {{"code", std::string(to_string(err.code))},
                  {"message", err.message},
                  {"request_id", err.request_id}}}};
}

HandlerResponse HandlerResponse::ok(std::string text) {
    HandlerResponse r;
    r.body_ = std::move(text);
    return r;
}

HandlerResponse HandlerResponse::ok(const char* text) { return ok(std::string(text)); }

HandlerResponse HandlerResponse::ok(Json value) {
    HandlerResponse r;
    r.body_ = std::move(value);
    return r;
}

HandlerResponse HandlerResponse::failure(GatewayError err) {
    auto status = default_status(err.code);
    return failure(status, std::move(err));
}

HandlerResponse HandlerResponse::failure(ResponseStatus status, GatewayError err) {
    HandlerResponse r;
    // An error response can never be Ok.
    r.status_ = status == ResponseStatus::Ok ? ResponseStatus::HandlerError : status;
    r.body_ = err.message;
    r.error_ = std::move(err);
    return r;
}

std::string HandlerResponse::text() const {
    if (!is_ok()) return error_.message;
    if (const auto* s = std::get_if<std::string>(&body_)) return *s;
    return dump(std::get<Json>(body_));
}

std::string encode_envelope(const TriggerEnvelope& env) {
    // ordered_json keeps the documented field order on the wire.
    nlohmann::ordered_json doc;
    doc["request"] = env.request;
    doc["requestId"] = env.request_id;
    doc["worldId"] = env.world_id;
    doc["itemId"] = env.item_id;
    doc["userId"] = env.user_id;
    doc["timestampMs"] = env.timestamp_ms;
    return doc.dump(kDumpIndent, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

Result<TriggerEnvelope> decode_envelope(std::string_view raw) {
    auto doc = Json::parse(raw.begin(), raw.end(), nullptr, false);
    if (doc.is_discarded()) return fail(ErrorCode::MalformedEnvelope, "body is not valid JSON");
    if (!doc.is_object()) return fail(ErrorCode::MalformedEnvelope, "envelope must be a JSON object");

    auto req = doc.find("request");
    if (req == doc.end()) return fail(ErrorCode::MalformedEnvelope, "missing \"request\" field");
    if (!req->is_string()) return fail(ErrorCode::MalformedEnvelope, "\"request\" must be a string");

    TriggerEnvelope env;
    env.request = req->get<std::string>();
    if (!read_string(doc, "requestId", env.request_id) || !read_string(doc, "worldId", env.world_id)
        || !read_string(doc, "itemId", env.item_id) || !read_string(doc, "userId", env.user_id)) {
        return fail(ErrorCode::MalformedEnvelope, "metadata fields must be strings", env.request_id);
    }

    if (auto ts = doc.find("timestampMs"); ts != doc.end() && !ts->is_null()) {
        if (!ts->is_number_integer()) {
            return fail(ErrorCode::MalformedEnvelope, "\"timestampMs\" must be an integer", env.request_id);
        }
        if (ts->is_number_unsigned()) {
            auto v = ts->get<std::uint64_t>();
            if (v > static_cast<std::uint64_t>(INT64_MAX)) {
                return fail(ErrorCode::MalformedEnvelope, "\"timestampMs\" out of range", env.request_id);
            }
            env.timestamp_ms = static_cast<std::int64_t>(v);
        } else {
            env.timestamp_ms = ts->get<std::int64_t>();
        }
        if (env.timestamp_ms < 0) {
            return fail(ErrorCode::MalformedEnvelope, "\"timestampMs\" must be >= 0", env.request_id);
        }
    }

    if (env.request_id.empty()) env.request_id = generate_request_id();
    return env;
}

Result<SmartHomeRequest> parse_smarthome_request(std::string_view payload) {
    auto doc = Json::parse(payload.begin(), payload.end(), nullptr, false);
    if (doc.is_discarded()) return fail(ErrorCode::MalformedPayload, "payload is not valid JSON");
    if (!doc.is_object()) return fail(ErrorCode::MalformedPayload, "payload must be a JSON object");

    auto name = doc.find("function_name");
    if (name == doc.end() || !name->is_string() || name->get_ref<const std::string&>().empty()) {
        return fail(ErrorCode::MalformedPayload, "missing \"function_name\"");
    }

    SmartHomeRequest req;
    req.function_name = name->get<std::string>();

    if (auto args = doc.find("args"); args != doc.end() && !args->is_null()) {
        if (!args->is_array()) return fail(ErrorCode::MalformedPayload, "\"args\" must be an array");
        req.args.assign(args->begin(), args->end());
    }
    if (auto kwargs = doc.find("kwargs"); kwargs != doc.end() && !kwargs->is_null()) {
        if (!kwargs->is_object()) return fail(ErrorCode::MalformedPayload, "\"kwargs\" must be an object");
        for (const auto& [key, value] : kwargs->items()) req.kwargs.emplace(key, value);
    }
    return req;
}

std::string serialize_smarthome_request(const SmartHomeRequest& req) {
    Json kwargs = Json::object();
    for (const auto& [key, value] : req.kwargs) kwargs[key] = value;
    Json doc{{"function_name", req.function_name}, {"args", req.args}, {"kwargs", std::move(kwargs)}};
    return dump(doc);
}

int http_status(ResponseStatus status) noexcept {
    switch (status) {
    case ResponseStatus::Ok: return 200;
    case ResponseStatus::BadRequest: return 400;
    case ResponseStatus::NotFound: return 404;
    case ResponseStatus::HandlerError: return 500;
    }
    return 500;
}

HttpReply serialize_response(const HandlerResponse& resp) {
    if (resp.is_ok()) return {200, dump(Json{{"response", resp.text()}})};
    return {http_status(resp.status()), dump(to_json(resp.error()))};
}

std::string generate_request_id() {
    static const std::uint64_t prefix = [] {
        std::random_device rd;
        return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    }();
    static std::atomic<std::uint64_t> counter{0};
    char buf[48];
    std::snprintf(buf, sizeof buf, "gw-%016llx-%llu", static_cast<unsigned long long>(prefix),
                  static_cast<unsigned long long>(counter.fetch_add(1)));
    return buf;
}

} // namespace metagadget
