#include "metagadget/gateway.hpp"

#include "keyed_executor.hpp"

#include "httplib.h"

#include <algorithm>
#include <cctype>
#include <future>
#include <sys/socket.h>
#include <thread>

namespace metagadget {
namespace {

[[nodiscard]] bool is_url_safe(std::string_view name) {
    if (name.empty()) return false;
    return std::all_of(name.begin(), name.end(), [](unsigned char c) {
        return std::isalnum(c) != 0 || c == '-' || c == '_' || c == '.' || c == '~';
    });
}

// Where a request path lands.
struct RouteMatch {
    enum class Kind { Route, BadToken, Unknown } kind = Kind::Unknown;
    std::string name; // "" = default route
};

[[nodiscard]] RouteMatch match_rest(std::string_view rest) {
    if (rest.empty() || rest == "/") return {RouteMatch::Kind::Route, ""};
    if (rest.front() != '/') return {};
    rest.remove_prefix(1);
    if (rest.find('/') != std::string_view::npos || !is_url_safe(rest)) return {};
    return {RouteMatch::Kind::Route, std::string(rest)};
}

// Only SO_REUSEADDR: SO_REUSEPORT (httplib's default) would let a second
// gateway bind an occupied port silently.
void exclusive_socket_options(int sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
}

} // namespace

void GatewayConfig::validate() const {
    if (bind_port < 0 || bind_port > 65535) throw std::invalid_argument("bind_port must be in [0, 65535]");
    if (route_prefix.size() < 2 || route_prefix.front() != '/' || route_prefix.back() == '/') {
        throw std::invalid_argument("route_prefix must look like \"/name\"");
    }
    if (per_device_queue_depth < 1) throw std::invalid_argument("per_device_queue_depth must be >= 1");
    if (handler_timeout.count() <= 0) throw std::invalid_argument("handler_timeout must be > 0");
}

const HandlerRegistration::Route* HandlerRegistration::find(std::string_view name) const {
    if (name.empty()) return default_ ? &*default_ : nullptr;
    auto it = named_.find(name);
    return it == named_.end() ? nullptr : &it->second;
}

void HandlerRegistration::set_default(Handler handler, std::string device_key) {
    if (default_) throw RegistrationError("a default handler is already registered");
    if (!handler) throw RegistrationError("handler must be callable");
    if (device_key.empty()) device_key = std::string(kDefaultKey);
    default_ = Route{std::move(handler), std::move(device_key)};
}

void HandlerRegistration::add_route(std::string name, Handler handler, std::string device_key) {
    if (!is_url_safe(name)) throw RegistrationError("route name is not URL-safe: '" + name + "'");
    if (named_.count(name) != 0) throw RegistrationError("route already registered: '" + name + "'");
    if (!handler) throw RegistrationError("handler must be callable");
    if (device_key.empty()) device_key = name;
    named_.emplace(std::move(name), Route{std::move(handler), std::move(device_key)});
}

void RequestLog::append(RequestLogEntry entry) {
    std::lock_guard lock(mutex_);
    entries_.push_back(std::move(entry));
}

std::size_t RequestLog::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::vector<RequestLogEntry> RequestLog::snapshot() const {
    std::vector<RequestLogEntry> copy;
    {
        std::lock_guard lock(mutex_);
        copy = entries_;
    }
    std::sort(copy.begin(), copy.end(),
              [](const auto& a, const auto& b) { return a.arrival_order < b.arrival_order; });
    return copy;
}

class GatewayRuntime {
public:
    GatewayRuntime(GatewayConfig config, HandlerRegistration registration)
        : config_(std::move(config)),
          registration_(std::move(registration)),
          executor_(config_.per_device_queue_depth) {}

    ~GatewayRuntime() { shutdown(); }

    void start() {
        server_.set_socket_options(exclusive_socket_options);
        server_.Post(".*", [this](const httplib::Request& req, httplib::Response& res) {
            auto reply = handle(req.body, req.path);
            res.status = reply.status;
            res.set_content(reply.body, "application/json");
        });
        server_.Get(".*", [this](const httplib::Request& req, httplib::Response& res) {
            auto match = resolve(req.path);
            if (match.kind == RouteMatch::Kind::Route && registration_.find(match.name) != nullptr) {
                res.status = 200;
                res.set_content(R"({"response":"ready"})", "application/json");
            } else {
                res.status = 404;
                res.set_content(to_json(GatewayError{ErrorCode::UnknownFunction, "no route for " + req.path, ""}).dump(),
                                "application/json");
            }
        });

        if (config_.bind_port == 0) {
            auto port = server_.bind_to_any_port(config_.bind_host);
            if (port <= 0) throw StartupError("cannot bind an ephemeral port on " + config_.bind_host);
            port_ = static_cast<std::uint16_t>(port);
        } else {
            if (!server_.bind_to_port(config_.bind_host, config_.bind_port)) {
                throw StartupError("cannot bind " + config_.bind_host + ":" + std::to_string(config_.bind_port)
                                   + " (address in use?)");
            }
            port_ = static_cast<std::uint16_t>(config_.bind_port);
        }
        listener_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    void shutdown() {
        std::lock_guard lock(shutdown_mutex_);
        if (stopped_) return;
        stopped_ = true;
        server_.stop();
        if (listener_.joinable()) listener_.join();
        executor_.stop();
    }

    HttpReply handle(std::string_view body, std::string_view path) {
        const auto started = std::chrono::steady_clock::now();
        RequestLogEntry entry;
        auto reply = dispatch(body, path, entry);
        entry.response_status = reply.status;
        entry.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
        log_.append(entry);
        notify(entry);
        return reply;
    }

    [[nodiscard]] std::uint16_t port() const noexcept { return port_; }
    [[nodiscard]] const GatewayConfig& config() const noexcept { return config_; }
    [[nodiscard]] const RequestLog& log() const noexcept { return log_; }

    void attach_tunnels(std::shared_ptr<const TunnelService> tunnels) {
        std::lock_guard lock(hooks_mutex_);
        tunnels_ = std::move(tunnels);
    }

    void set_observer(std::function<void(const RequestLogEntry&)> observer) {
        std::lock_guard lock(hooks_mutex_);
        observer_ = std::move(observer);
    }

private:
    [[nodiscard]] RouteMatch resolve(std::string_view path) const {
        const std::string_view prefix = config_.route_prefix;
        if (path.substr(0, prefix.size()) == prefix) {
            auto rest = path.substr(prefix.size());
            if (rest.empty() || rest.front() == '/') return match_rest(rest);
        }

        std::shared_ptr<const TunnelService> tunnels;
        {
            std::lock_guard lock(hooks_mutex_);
            tunnels = tunnels_;
        }
        if (!tunnels || path.size() < 2 || path.front() != '/') return {};
        auto segment_end = path.find('/', 1);
        auto token = path.substr(1, segment_end == std::string_view::npos ? path.npos : segment_end - 1);
        if (!tunnels->is_open(token)) return {RouteMatch::Kind::BadToken, {}};
        return match_rest(segment_end == std::string_view::npos ? std::string_view{} : path.substr(segment_end));
    }

    [[nodiscard]] std::uint64_t take_order() {
        std::lock_guard lock(order_mutex_);
        return next_order_++;
    }

    HttpReply reject(RequestLogEntry& entry, ResponseStatus status, GatewayError err) {
        entry.arrival_order = take_order();
        return serialize_response(HandlerResponse::failure(status, std::move(err)));
    }

    HttpReply dispatch(std::string_view body, std::string_view path, RequestLogEntry& entry) {
        auto match = resolve(path);
        if (match.kind == RouteMatch::Kind::BadToken) {
            return reject(entry, ResponseStatus::NotFound,
                          {ErrorCode::UnknownFunction, "unknown or closed tunnel token", ""});
        }
        if (match.kind == RouteMatch::Kind::Unknown) {
            return reject(entry, ResponseStatus::NotFound,
                          {ErrorCode::UnknownFunction, "no route for " + std::string(path), ""});
        }
        entry.route = match.name;

        auto decoded = decode_envelope(body);
        if (!decoded) return reject(entry, ResponseStatus::BadRequest, decoded.error());
        auto envelope = std::move(decoded.value());
        entry.request_id = envelope.request_id;
        entry.envelope = envelope;

        const auto* route = registration_.find(match.name);
        if (route == nullptr) {
            return reject(entry, ResponseStatus::NotFound,
                          {ErrorCode::UnknownFunction, "no handler registered for route '" + match.name + "'",
                           envelope.request_id});
        }
        entry.device_key = route->device_key;

        if (const auto& filter = registration_.pre_dispatch()) {
            if (auto early = filter(envelope, match.name)) {
                early->set_request_id(envelope.request_id);
                entry.arrival_order = take_order();
                return serialize_response(*early);
            }
        }

        auto promise = std::make_shared<std::promise<HandlerResponse>>();
        auto future = promise->get_future();
        bool accepted = false;
        {
            // Order assignment and enqueue are one step so that each lane
            // executes in arrival order.
            std::lock_guard lock(order_mutex_);
            entry.arrival_order = next_order_;
            accepted = executor_.submit(
                route->device_key,
                [handler = route->handler, env = envelope, order = next_order_, name = match.name,
                 key = route->device_key, promise] {
                    promise->set_value(invoke(handler, env, order, name, key));
                });
            ++next_order_;
        }
        if (!accepted) {
            return serialize_response(HandlerResponse::failure(
                ResponseStatus::HandlerError,
                {ErrorCode::DeviceFault, "queue for device '" + route->device_key + "' is full", envelope.request_id}));
        }
        entry.dispatched = true;

        if (future.wait_for(config_.handler_timeout) != std::future_status::ready) {
            return serialize_response(HandlerResponse::failure(
                ResponseStatus::HandlerError,
                {ErrorCode::Internal,
                 "handler timed out after " + std::to_string(config_.handler_timeout.count()) + " ms",
                 envelope.request_id}));
        }
        auto response = future.get();
        if (!response.is_ok()) response.set_request_id(envelope.request_id);
        return serialize_response(response);
    }

    static HandlerResponse invoke(const Handler& handler, const TriggerEnvelope& env, std::uint64_t order,
                                  const std::string& route, const std::string& key) {
        RequestContext ctx{env.request, env, order, route, key};
        try {
            return handler(ctx);
        } catch (const DeviceFault& fault) {
            return HandlerResponse::failure(ResponseStatus::HandlerError,
                                            {ErrorCode::DeviceFault, fault.what(), env.request_id});
        } catch (const std::exception& ex) {
            return HandlerResponse::failure(ResponseStatus::HandlerError,
                                            {ErrorCode::Internal, ex.what(), env.request_id});
        } catch (...) {
            return HandlerResponse::failure(ResponseStatus::HandlerError,
                                            {ErrorCode::Internal, "handler raised a non-standard exception",
                                             env.request_id});
        }
    }

    void notify(const RequestLogEntry& entry) {
        std::function<void(const RequestLogEntry&)> observer;
        {
            std::lock_guard lock(hooks_mutex_);
            observer = observer_;
        }
        if (observer) observer(entry);
    }

    GatewayConfig config_;
    HandlerRegistration registration_;
    httplib::Server server_;
    std::thread listener_;
    std::uint16_t port_ = 0;

    std::mutex order_mutex_;
    std::uint64_t next_order_ = 0;
    detail::KeyedExecutor executor_;
    RequestLog log_;

    mutable std::mutex hooks_mutex_;
    std::shared_ptr<const TunnelService> tunnels_;
    std::function<void(const RequestLogEntry&)> observer_;

    std::mutex shutdown_mutex_;
    bool stopped_ = false;
};

ServerHandle run(GatewayConfig config, HandlerRegistration registration) {
    config.validate();
    if (registration.empty()) throw RegistrationError("run() needs at least one registered handler");
    auto runtime = std::make_shared<GatewayRuntime>(std::move(config), std::move(registration));
    runtime->start();
    return ServerHandle(std::move(runtime));
}

ServerHandle::ServerHandle(std::shared_ptr<GatewayRuntime> runtime) : runtime_(std::move(runtime)) {}
ServerHandle::ServerHandle(ServerHandle&&) noexcept = default;
ServerHandle& ServerHandle::operator=(ServerHandle&&) noexcept = default;

ServerHandle::~ServerHandle() {
    if (runtime_) runtime_->shutdown();
}

std::uint16_t ServerHandle::port() const { return runtime_->port(); }

std::string ServerHandle::local_url() const {
    return "http://" + runtime_->config().bind_host + ":" + std::to_string(runtime_->port())
           + runtime_->config().route_prefix;
}

const RequestLog& ServerHandle::request_log() const { return runtime_->log(); }

void ServerHandle::attach_tunnels(std::shared_ptr<const TunnelService> tunnels) {
    runtime_->attach_tunnels(std::move(tunnels));
}

void ServerHandle::on_request_logged(std::function<void(const RequestLogEntry&)> observer) {
    runtime_->set_observer(std::move(observer));
}

HttpReply ServerHandle::handle_request(std::string_view raw_body, std::string_view path) {
    return runtime_->handle(raw_body, path);
}

void ServerHandle::shutdown() {
    if (runtime_) runtime_->shutdown();
}

} // namespace metagadget
