#pragma once

// SwitchBot-style smart-home support: device model and command transition
// table, an in-memory mock cloud served over HTTP, a web-API client, and an
// allow-listed dispatcher for SmartHomeRequest payloads.
//
// Mock API (all responses wrapped as {"statusCode":100,"message":"success","body":...}):
//   GET  /v1.1/devices                 -> body {"deviceList":[device...]}
//   POST /v1.1/devices/{id}/commands   -> body status
//   GET  /v1.1/devices/{id}/status     -> body status
// Every request must carry "Authorization: <token>".

#include "metagadget/envelope.hpp"
#include "metagadget/expected.hpp"
#include "metagadget/gateway.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace metagadget::smarthome {

enum class DeviceType {
    Hub,
    Bulb,
    Plug,
    Bot,
    LedStrip,
    Meter,
    MotionSensor,
    Camera,
    Humidifier,
    Circulator,
    RemoteButton
};

[[nodiscard]] std::string_view to_string(DeviceType type) noexcept;
[[nodiscard]] std::optional<DeviceType> parse_device_type(std::string_view text) noexcept;

/// Fields present depend on the device type; absent fields are not part of
/// that type's state.
struct DeviceStateRecord {
    std::optional<bool> power;
    std::optional<int> brightness; // [1, 100]
    std::optional<double> temperature_c;
    std::optional<double> humidity_pct;
    std::optional<int> co2_ppm;

    friend bool operator==(const DeviceStateRecord&, const DeviceStateRecord&) = default;
};

[[nodiscard]] DeviceStateRecord default_state(DeviceType type);

struct SmartHomeDevice {
    std::string device_id;
    DeviceType device_type = DeviceType::Hub;
    std::string name;
    DeviceStateRecord state;

    friend bool operator==(const SmartHomeDevice&, const SmartHomeDevice&) = default;
};

struct CommandRequest {
    std::string command;
    Json parameter = "default";
    std::string command_type = "command";
};

struct DeviceStatus {
    std::string device_id;
    DeviceType device_type = DeviceType::Hub;
    DeviceStateRecord state;

    friend bool operator==(const DeviceStatus&, const DeviceStatus&) = default;
};

enum class ClientErrorKind { NotFound, InvalidCommand, Unauthorized, Transport, Protocol };

[[nodiscard]] std::string_view to_string(ClientErrorKind kind) noexcept;

struct ClientError {
    ClientErrorKind kind;
    std::string message;
};

template <class T>
using ClientResult = Expected<T, ClientError>;

// JSON codecs (camelCase keys).
[[nodiscard]] Json to_json(const DeviceStateRecord& state);
[[nodiscard]] Json to_json(const SmartHomeDevice& device);
[[nodiscard]] Json to_json(const DeviceStatus& status);
[[nodiscard]] Json to_json(const CommandRequest& cmd);
[[nodiscard]] Expected<SmartHomeDevice, std::string> device_from_json(const Json& doc);
[[nodiscard]] Expected<DeviceStatus, std::string> status_from_json(const Json& doc);
[[nodiscard]] Expected<CommandRequest, std::string> command_from_json(const Json& doc);

[[nodiscard]] DeviceStatus status_of(const SmartHomeDevice& device);

/// The per-type transition table: turnOn, turnOff, setBrightness, press.
/// On success the device is updated in place and its new status returned.
[[nodiscard]] ClientResult<DeviceStatus> apply_command(SmartHomeDevice& device, const CommandRequest& cmd);

struct Fixture {
    std::string token = "metagadget-mock-token";
    std::vector<SmartHomeDevice> devices;

    /// The workshop roster: 2 hubs, 2 cameras, 4 motion sensors, 1 meter,
    /// 1 LED strip, 4 bulbs, 4 plugs, 4 bots, 1 humidifier, 2 remote buttons,
    /// 2 circulators (27 devices).
    static Fixture workshop_roster();

    /// {"token":..,"devices":[{"deviceId","deviceType","name","state"?}]}
    static Expected<Fixture, std::string> from_json(const Json& doc);
    static Expected<Fixture, std::string> from_file(const std::filesystem::path& path);
    [[nodiscard]] Json to_json() const;
};

class MockCloudRuntime;

/// A running mock cloud. State mutations are serialized internally.
class MockServerHandle {
public:
    MockServerHandle(MockServerHandle&&) noexcept;
    MockServerHandle& operator=(MockServerHandle&&) noexcept;
    ~MockServerHandle();

    [[nodiscard]] std::uint16_t port() const;
    /// http://<host>:<port>
    [[nodiscard]] std::string base_url() const;
    [[nodiscard]] const std::string& token() const;
    [[nodiscard]] std::vector<SmartHomeDevice> devices() const;

    void stop();

private:
    friend MockServerHandle start_mock(Fixture fixture, int port, std::string host);
    explicit MockServerHandle(std::shared_ptr<MockCloudRuntime> runtime);

    std::shared_ptr<MockCloudRuntime> runtime_;
};

/// Throws StartupError when the port cannot be bound.
[[nodiscard]] MockServerHandle start_mock(Fixture fixture, int port = 0, std::string host = "127.0.0.1");

/// Immutable after construction; safe to share across threads.
class SwitchBotClient {
public:
    SwitchBotClient(std::string base_url, std::string token,
                    std::chrono::milliseconds timeout = std::chrono::milliseconds{5000});

    [[nodiscard]] ClientResult<std::vector<SmartHomeDevice>> list_devices() const;
    [[nodiscard]] ClientResult<DeviceStatus> send_command(std::string_view device_id, const CommandRequest& cmd) const;
    [[nodiscard]] ClientResult<DeviceStatus> get_status(std::string_view device_id) const;

    [[nodiscard]] ClientResult<DeviceStatus> turn_on(std::string_view device_id) const;
    [[nodiscard]] ClientResult<DeviceStatus> turn_off(std::string_view device_id) const;
    [[nodiscard]] ClientResult<DeviceStatus> set_brightness(std::string_view device_id, int level) const;
    [[nodiscard]] ClientResult<DeviceStatus> press(std::string_view device_id) const;

    [[nodiscard]] const std::string& base_url() const noexcept { return base_url_; }

private:
    [[nodiscard]] ClientResult<Json> call(const std::string& method, const std::string& path,
                                          const std::string* body) const;

    std::string base_url_;
    std::string token_;
    std::chrono::milliseconds timeout_;
};

/// Names reachable through dispatch(); nothing else is.
[[nodiscard]] const std::vector<std::string>& allowed_functions();

/// Looks function_name up in the allow-list, binds args/kwargs Python-style
/// against the function's parameter names and returns the result as
/// canonical JSON text.
[[nodiscard]] HandlerResponse dispatch(const SmartHomeRequest& req, const SwitchBotClient& client);

/// Maps a client outcome to the response dispatch() would produce.
[[nodiscard]] HandlerResponse to_response(const ClientResult<Json>& outcome);

/// Gateway handler: parse payload as a SmartHomeRequest, then dispatch.
[[nodiscard]] Handler dispatch_handler(std::shared_ptr<const SwitchBotClient> client);

} // namespace metagadget::smarthome
