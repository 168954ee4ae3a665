#include "metagadget/smarthome.hpp"

#include "httplib.h"

#include <mutex>
#include <sys/socket.h>
#include <thread>

namespace metagadget::smarthome {
namespace {

// SwitchBot-style statusCode values used in the response envelope.
constexpr int kSuccess = 100;
constexpr int kDeviceNotFound = 152;
constexpr int kCommandNotSupported = 160;
constexpr int kMalformedBody = 190;

void reply(httplib::Response& res, int http_status, int status_code, std::string message, Json body) {
    res.status = http_status;
    Json doc{{"statusCode", status_code}, {"message", std::move(message)}, {"body", std::move(body)}};
    res.set_content(doc.dump(), "application/json");
}

void exclusive_socket_options(int sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
}

} // namespace

class MockCloudRuntime {
public:
    MockCloudRuntime(Fixture fixture, std::string host) : fixture_(std::move(fixture)), host_(std::move(host)) {}
    ~MockCloudRuntime() { stop(); }

    void start(int port) {
        server_.set_socket_options(exclusive_socket_options);
        server_.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            if (req.get_header_value("Authorization") != fixture_.token) {
                reply(res, 401, 401, "Unauthorized", Json::object());
                return httplib::Server::HandlerResponse::Handled;
            }
            return httplib::Server::HandlerResponse::Unhandled;
        });

        server_.Get("/v1.1/devices", [this](const httplib::Request&, httplib::Response& res) {
            Json list = Json::array();
            for (const auto& d : devices()) list.push_back(to_json(d));
            reply(res, 200, kSuccess, "success", Json{{"deviceList", std::move(list)}});
        });

        server_.Get(R"(/v1.1/devices/([^/]+)/status)", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mutex_);
            auto* device = find(req.matches[1].str());
            if (device == nullptr) return reply(res, 404, kDeviceNotFound, "device not found", Json::object());
            reply(res, 200, kSuccess, "success", to_json(status_of(*device)));
        });

        server_.Post(R"(/v1.1/devices/([^/]+)/commands)", [this](const httplib::Request& req, httplib::Response& res) {
            auto doc = Json::parse(req.body, nullptr, false);
            if (doc.is_discarded()) return reply(res, 400, kMalformedBody, "body is not valid JSON", Json::object());
            auto cmd = command_from_json(doc);
            if (!cmd) return reply(res, 400, kMalformedBody, cmd.error(), Json::object());

            std::lock_guard lock(mutex_);
            auto* device = find(req.matches[1].str());
            if (device == nullptr) return reply(res, 404, kDeviceNotFound, "device not found", Json::object());
            auto result = apply_command(*device, *cmd);
            if (!result) return reply(res, 400, kCommandNotSupported, result.error().message, Json::object());
            reply(res, 200, kSuccess, "success", to_json(*result));
        });

        if (port == 0) {
            auto bound = server_.bind_to_any_port(host_);
            if (bound <= 0) throw StartupError("mock cloud: cannot bind an ephemeral port");
            port_ = static_cast<std::uint16_t>(bound);
        } else {
            if (port < 0 || port > 65535 || !server_.bind_to_port(host_, port)) {
                throw StartupError("mock cloud: cannot bind " + host_ + ":" + std::to_string(port)
                                   + " (address in use?)");
            }
            port_ = static_cast<std::uint16_t>(port);
        }
        listener_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    void stop() {
        std::lock_guard lock(stop_mutex_);
        if (stopped_) return;
        stopped_ = true;
        server_.stop();
        if (listener_.joinable()) listener_.join();
    }

    [[nodiscard]] std::vector<SmartHomeDevice> devices() const {
        std::lock_guard lock(mutex_);
        return fixture_.devices;
    }

    [[nodiscard]] std::uint16_t port() const noexcept { return port_; }
    [[nodiscard]] const std::string& host() const noexcept { return host_; }
    [[nodiscard]] const std::string& token() const noexcept { return fixture_.token; }

private:
    SmartHomeDevice* find(const std::string& id) {
        for (auto& d : fixture_.devices) {
            if (d.device_id == id) return &d;
        }
        return nullptr;
    }

    Fixture fixture_;
    std::string host_;
    mutable std::mutex mutex_;
    httplib::Server server_;
    std::thread listener_;
    std::uint16_t port_ = 0;
    std::mutex stop_mutex_;
    bool stopped_ = false;
};

MockServerHandle start_mock(Fixture fixture, int port, std::string host) {
    auto runtime = std::make_shared<MockCloudRuntime>(std::move(fixture), std::move(host));
    runtime->start(port);
    return MockServerHandle(std::move(runtime));
}

MockServerHandle::MockServerHandle(std::shared_ptr<MockCloudRuntime> runtime) : runtime_(std::move(runtime)) {}
MockServerHandle::MockServerHandle(MockServerHandle&&) noexcept = default;
MockServerHandle& MockServerHandle::operator=(MockServerHandle&&) noexcept = default;

MockServerHandle::~MockServerHandle() {
    if (runtime_) runtime_->stop();
}

std::uint16_t MockServerHandle::port() const { return runtime_->port(); }

std::string MockServerHandle::base_url() const {
    return "http://" + runtime_->host() + ":" + std::to_string(runtime_->port());
}

const std::string& MockServerHandle::token() const { return runtime_->token(); }

std::vector<SmartHomeDevice> MockServerHandle::devices() const { return runtime_->devices(); }

void MockServerHandle::stop() {
    if (runtime_) runtime_->stop();
}

} // namespace metagadget::smarthome
