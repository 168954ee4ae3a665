#pragma once

// HTTP gateway: accepts POSTed trigger envelopes, runs registered handlers
// and answers with {"response": ...} / {"error": ...}.
//
//   metagadget::Gateway app;
//   app.receive([](std::string_view data) { ... return HandlerResponse::ok("done"); });
//   auto server = app.run();
//
// Handlers bound to the same device key never run concurrently and execute
// in the gateway's arrival order; different keys run in parallel.

#include "metagadget/envelope.hpp"
#include "metagadget/tunnel.hpp"

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace metagadget {

struct GatewayConfig {
    std::string bind_host = "127.0.0.1";
    int bind_port = 0; // 0 = ephemeral
    std::string route_prefix = "/trigger";
    std::size_t per_device_queue_depth = 64;
    std::chrono::milliseconds handler_timeout{10'000};

    /// Throws std::invalid_argument on out-of-range fields.
    void validate() const;
};

/// Everything a handler may want to know about the call it is serving.
struct RequestContext {
    std::string_view payload;
    const TriggerEnvelope& envelope;
    std::uint64_t arrival_order;
    std::string_view route; // "" for the default route
    std::string_view device_key;
};

using Handler = std::function<HandlerResponse(const RequestContext&)>;

/// Thrown by handlers (typically via device code) to signal a device-level
/// failure; mapped to a 500 DeviceFault response.
class DeviceFault : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RegistrationError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class StartupError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Optional hook run before dispatch; returning a response short-circuits it.
using PreDispatchFilter =
    std::function<std::optional<HandlerResponse>(const TriggerEnvelope&, std::string_view route)>;

class HandlerRegistration {
public:
    struct Route {
        Handler handler;
        std::string device_key;
    };

    static constexpr std::string_view kDefaultKey = "default";

    /// Accepts `HandlerResponse(const RequestContext&)` or the plain
    /// `HandlerResponse(std::string_view payload)` shape.
    template <class F>
    HandlerRegistration& receive(F&& fn, std::string device_key = std::string(kDefaultKey)) {
        set_default(adapt(std::forward<F>(fn)), std::move(device_key));
        return *this;
    }

    /// Named route served at <route_prefix>/<name>; device key defaults to the name.
    template <class F>
    HandlerRegistration& route(std::string name, F&& fn, std::string device_key = {}) {
        add_route(std::move(name), adapt(std::forward<F>(fn)), std::move(device_key));
        return *this;
    }

    HandlerRegistration& filter(PreDispatchFilter filter) {
        filter_ = std::move(filter);
        return *this;
    }

    [[nodiscard]] bool has_default() const noexcept { return default_.has_value(); }
    [[nodiscard]] bool empty() const noexcept { return !default_ && named_.empty(); }
    [[nodiscard]] const Route* find(std::string_view name) const;
    [[nodiscard]] const PreDispatchFilter& pre_dispatch() const noexcept { return filter_; }

private:
    template <class F>
    static Handler adapt(F&& fn) {
        if constexpr (std::is_invocable_r_v<HandlerResponse, F&, const RequestContext&>) {
            return Handler(std::forward<F>(fn));
        } else if constexpr (std::is_invocable_r_v<HandlerResponse, F&, std::string_view>) {
            return [f = std::forward<F>(fn)](const RequestContext& ctx) mutable { return f(ctx.payload); };
        } else {
            static_assert(std::is_invocable_r_v<HandlerResponse, F&, const std::string&>,
                          "handler must accept a RequestContext or a payload string");
            return [f = std::forward<F>(fn)](const RequestContext& ctx) mutable {
                return f(std::string(ctx.payload));
            };
        }
    }

    void set_default(Handler handler, std::string device_key);
    void add_route(std::string name, Handler handler, std::string device_key);

    std::optional<Route> default_;
    std::map<std::string, Route, std::less<>> named_;
    PreDispatchFilter filter_;
};

struct RequestLogEntry {
    std::string request_id;
    std::uint64_t arrival_order = 0;
    std::optional<TriggerEnvelope> envelope; // absent when the body failed to decode
    std::string route;
    std::string device_key;
    int response_status = 0;
    double latency_ms = 0.0;
    bool dispatched = false; // a handler was scheduled for this request
};

/// Append-only, thread-safe.
class RequestLog {
public:
    void append(RequestLogEntry entry);
    [[nodiscard]] std::size_t size() const;
    /// Entries sorted by arrival order.
    [[nodiscard]] std::vector<RequestLogEntry> snapshot() const;

private:
    mutable std::mutex mutex_;
    std::vector<RequestLogEntry> entries_;
};

class GatewayRuntime;

/// Owns a running gateway. Move-only; destruction shuts the server down.
class ServerHandle {
public:
    ServerHandle(ServerHandle&&) noexcept;
    ServerHandle& operator=(ServerHandle&&) noexcept;
    ~ServerHandle();

    [[nodiscard]] std::uint16_t port() const;
    /// http://<host>:<port><route_prefix>
    [[nodiscard]] std::string local_url() const;
    [[nodiscard]] const RequestLog& request_log() const;

    /// Requests whose first path segment is an open token of this service are
    /// routed as if they had hit the route prefix.
    void attach_tunnels(std::shared_ptr<const TunnelService> tunnels);

    /// Observer invoked after every completed request (from server threads).
    void on_request_logged(std::function<void(const RequestLogEntry&)> observer);

    /// The full request path used by the HTTP listener; callable directly.
    HttpReply handle_request(std::string_view raw_body, std::string_view path);

    /// Idempotent.
    void shutdown();

private:
    friend ServerHandle run(GatewayConfig config, HandlerRegistration registration);
    explicit ServerHandle(std::shared_ptr<GatewayRuntime> runtime);

    std::shared_ptr<GatewayRuntime> runtime_;
};

/// Binds, starts listening and returns once connections are accepted.
/// Throws StartupError (e.g. port in use) or std::invalid_argument.
[[nodiscard]] ServerHandle run(GatewayConfig config, HandlerRegistration registration);

/// The `app = MetaGadget(); @app.receive; app.run()` convenience wrapper.
class Gateway {
public:
    explicit Gateway(GatewayConfig config = {}) : config_(std::move(config)) {}

    template <class F>
    Gateway& receive(F&& fn, std::string device_key = std::string(HandlerRegistration::kDefaultKey)) {
        registration_.receive(std::forward<F>(fn), std::move(device_key));
        return *this;
    }

    template <class F>
    Gateway& route(std::string name, F&& fn, std::string device_key = {}) {
        registration_.route(std::move(name), std::forward<F>(fn), std::move(device_key));
        return *this;
    }

    [[nodiscard]] HandlerRegistration& registration() noexcept { return registration_; }
    [[nodiscard]] GatewayConfig& config() noexcept { return config_; }

    [[nodiscard]] ServerHandle run() const { return metagadget::run(config_, registration_); }

private:
    GatewayConfig config_;
    HandlerRegistration registration_;
};

} // namespace metagadget
