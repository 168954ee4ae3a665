#pragma once

// Wire formats shared by metaverse clients, the gateway and handlers.
//
// Request body (camelCase, UTF-8 JSON):
//   {"request":"on","requestId":"r1","worldId":"w","itemId":"fan","userId":"u1","timestampMs":0}
// Response body:
//   {"response":"<string>"}  or  {"error":{"code":..,"message":..,"request_id":..}}

#include "metagadget/expected.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace metagadget {

using Json = nlohmann::json;

struct TriggerEnvelope {
    std::string request;
    std::string request_id;
    std::string world_id;
    std::string item_id;
    std::string user_id;
    std::int64_t timestamp_ms = 0;

    friend bool operator==(const TriggerEnvelope&, const TriggerEnvelope&) = default;
};

enum class ErrorCode { MalformedEnvelope, MalformedPayload, UnknownFunction, DeviceFault, Internal };

[[nodiscard]] std::string_view to_string(ErrorCode code) noexcept;

struct GatewayError {
    ErrorCode code = ErrorCode::Internal;
    std::string message;
    std::string request_id;

    friend bool operator==(const GatewayError&, const GatewayError&) = default;
};

template <class T>
using Result = Expected<T, GatewayError>;

[[nodiscard]] inline Unexpected<GatewayError> fail(ErrorCode code, std::string message,
                                                   std::string request_id = {}) {
    return Unexpected<GatewayError>{GatewayError{code, std::move(message), std::move(request_id)}};
}

[[nodiscard]] Json to_json(const GatewayError& err);

enum class ResponseStatus { Ok, HandlerError, BadRequest, NotFound };

/// What a handler hands back to the gateway. Successful bodies are either a
/// plain string or a JSON value; both end up as {"response": <string>}.
class HandlerResponse {
public:
    using Body = std::variant<std::string, Json>;

    static HandlerResponse ok(std::string text);
    static HandlerResponse ok(const char* text);
    static HandlerResponse ok(Json value);

    /// Error response whose HTTP class is derived from the error code.
    static HandlerResponse failure(GatewayError err);
    static HandlerResponse failure(ResponseStatus status, GatewayError err);

    [[nodiscard]] ResponseStatus status() const noexcept { return status_; }
    [[nodiscard]] bool is_ok() const noexcept { return status_ == ResponseStatus::Ok; }
    [[nodiscard]] const Body& body() const noexcept { return body_; }
    [[nodiscard]] const GatewayError& error() const noexcept { return error_; }

    /// The string a client finds under "response" (Ok) or "error.message".
    [[nodiscard]] std::string text() const;

    void set_request_id(std::string id) { error_.request_id = std::move(id); }

private:
    HandlerResponse() = default;

    ResponseStatus status_ = ResponseStatus::Ok;
    Body body_;
    GatewayError error_;
};

struct SmartHomeRequest {
    std::string function_name;
    std::vector<Json> args;
    std::map<std::string, Json> kwargs;

    friend bool operator==(const SmartHomeRequest&, const SmartHomeRequest&) = default;
};

struct HttpReply {
    int status = 200;
    std::string body;
};

[[nodiscard]] std::string encode_envelope(const TriggerEnvelope& env);

/// Total over arbitrary bytes. Missing metadata gets defaults; a missing or
/// non-string "request" is a MalformedEnvelope.
[[nodiscard]] Result<TriggerEnvelope> decode_envelope(std::string_view raw);

[[nodiscard]] Result<SmartHomeRequest> parse_smarthome_request(std::string_view payload);
[[nodiscard]] std::string serialize_smarthome_request(const SmartHomeRequest& req);

[[nodiscard]] HttpReply serialize_response(const HandlerResponse& resp);
[[nodiscard]] int http_status(ResponseStatus status) noexcept;

/// Process-unique opaque id used when an envelope arrives without one.
[[nodiscard]] std::string generate_request_id();

} // namespace metagadget
