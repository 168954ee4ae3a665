#pragma once

// Simulated physical endpoints: a virtual GPIO bank and four appliance state
// machines. Every mutation appends to the device's event log, tagged with the
// gateway arrival order when one is supplied.
//
// Mutations assume the caller serializes them per device key (the gateway
// does); state and log reads are safe from any thread.

#include "metagadget/envelope.hpp"
#include "metagadget/gateway.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace metagadget {

enum class DeviceKind { Fan, Doorbell, Lamp, ToneSpeaker, GpioBank };

[[nodiscard]] std::string_view to_string(DeviceKind kind) noexcept;
[[nodiscard]] std::optional<DeviceKind> parse_device_kind(std::string_view text) noexcept;

struct DeviceEvent {
    std::string command;
    Json state; // state after the command
    std::uint64_t order = 0;
};

struct DeviceState {
    std::string device_key;
    DeviceKind kind;
    Json state;
    std::vector<DeviceEvent> event_log;
};

class Device {
public:
    Device(std::string key, DeviceKind kind) : key_(std::move(key)), kind_(kind) {}
    Device(const Device&) = delete;
    Device& operator=(const Device&) = delete;
    virtual ~Device() = default;

    [[nodiscard]] const std::string& key() const noexcept { return key_; }
    [[nodiscard]] DeviceKind kind() const noexcept { return kind_; }

    [[nodiscard]] Json state_json() const;
    [[nodiscard]] std::vector<DeviceEvent> events() const;
    [[nodiscard]] DeviceState snapshot() const;

    /// One {"deviceKey","order","command","state"} object per line.
    [[nodiscard]] std::string export_jsonl() const;

    /// Maps a raw gateway payload onto this device's command set.
    virtual HandlerResponse handle(std::string_view payload, std::optional<std::uint64_t> order) = 0;

protected:
    [[nodiscard]] virtual Json state_unlocked() const = 0;

    /// Appends an event; caller holds mutex_. Orders must strictly increase.
    void record(std::string command, std::optional<std::uint64_t> order);

    mutable std::mutex mutex_;

private:
    std::string key_;
    DeviceKind kind_;
    std::vector<DeviceEvent> log_;
};

enum class PinLevel { Low, High };

[[nodiscard]] std::string_view to_string(PinLevel level) noexcept;

class VirtualGpioBank final : public Device {
public:
    static constexpr int kPinCount = 32;

    explicit VirtualGpioBank(std::string key, int led_pin = 17);

    /// Throws DeviceFault when pin is outside [0, 32).
    void write(int pin, PinLevel level, std::optional<std::uint64_t> order = {});
    [[nodiscard]] PinLevel read(int pin) const;

    [[nodiscard]] int led_pin() const noexcept { return led_pin_; }

    /// "on" drives the LED pin high, anything else drives it low.
    HandlerResponse handle(std::string_view payload, std::optional<std::uint64_t> order) override;

private:
    [[nodiscard]] Json state_unlocked() const override;

    std::array<PinLevel, kPinCount> pins_{};
    int led_pin_;
};

enum class FanState { Stopped, Running };

[[nodiscard]] std::string_view to_string(FanState state) noexcept;

class Fan final : public Device {
public:
    explicit Fan(std::string key) : Device(std::move(key), DeviceKind::Fan) {}

    /// Exactly "on" starts the fan; every other payload stops it.
    FanState command(std::string_view payload, std::optional<std::uint64_t> order = {});
    [[nodiscard]] FanState state() const;

    HandlerResponse handle(std::string_view payload, std::optional<std::uint64_t> order) override;

private:
    [[nodiscard]] Json state_unlocked() const override;

    FanState state_ = FanState::Stopped;
};

class Doorbell final : public Device {
public:
    explicit Doorbell(std::string key) : Device(std::move(key), DeviceKind::Doorbell) {}

    std::int64_t ring(std::optional<std::uint64_t> order = {});
    [[nodiscard]] std::int64_t chime_count() const;

    HandlerResponse handle(std::string_view payload, std::optional<std::uint64_t> order) override;

private:
    [[nodiscard]] Json state_unlocked() const override;

    std::int64_t chimes_ = 0;
};

/// Brightness as a function of the number of users present.
using PresenceMapping = std::function<int(int user_count)>;

/// min(100, percent_per_user * n)
[[nodiscard]] PresenceMapping linear_presence_mapping(int percent_per_user = 20);

class PresenceLamp final : public Device {
public:
    explicit PresenceLamp(std::string key, PresenceMapping mapping = linear_presence_mapping());

    /// Throws DeviceFault for a negative count. Result is clamped to [0, 100].
    int set_from_presence(int user_count, std::optional<std::uint64_t> order = {});
    [[nodiscard]] int brightness() const;

    HandlerResponse handle(std::string_view payload, std::optional<std::uint64_t> order) override;

private:
    [[nodiscard]] Json state_unlocked() const override;

    PresenceMapping mapping_;
    int brightness_ = 0;
};

class ToneSpeaker final : public Device {
public:
    static constexpr int kMaxNote = 44;
    static constexpr double kBaseHz = 110.0;

    explicit ToneSpeaker(std::string key) : Device(std::move(key), DeviceKind::ToneSpeaker) {}

    /// 110 * 2^(n/12) rounded to 0.01 Hz; throws DeviceFault outside [0, 44].
    [[nodiscard]] static double note_frequency(int note_index);

    double play(int note_index, std::optional<std::uint64_t> order = {});
    [[nodiscard]] std::optional<double> last_frequency() const;

    HandlerResponse handle(std::string_view payload, std::optional<std::uint64_t> order) override;

private:
    [[nodiscard]] Json state_unlocked() const override;

    std::optional<double> last_hz_;
};

struct DeviceSpec {
    std::string device_key;
    DeviceKind kind;
    Json params = Json::object();
};

class DeviceRegistry {
public:
    /// [{"deviceKey":..,"kind":..,"params":{..}}, ...]; throws std::invalid_argument.
    static DeviceRegistry from_json(const Json& doc);
    static DeviceRegistry from_file(const std::filesystem::path& path);

    /// fan, doorbell, lamp, piano and led (GPIO bank).
    static DeviceRegistry demo_defaults();

    std::shared_ptr<Device> add(const DeviceSpec& spec);

    [[nodiscard]] std::shared_ptr<Device> find(std::string_view key) const;

    template <class T>
    [[nodiscard]] std::shared_ptr<T> get(std::string_view key) const {
        return std::dynamic_pointer_cast<T>(find(key));
    }

    [[nodiscard]] std::vector<std::string> keys() const;

    /// Registers one named route per device, serialized on the device key.
    void bind_routes(HandlerRegistration& registration) const;

    [[nodiscard]] std::string export_jsonl() const;

private:
    std::map<std::string, std::shared_ptr<Device>, std::less<>> devices_;
};

/// Handler that forwards the payload to `device`, passing the arrival order.
[[nodiscard]] Handler device_handler(std::shared_ptr<Device> device);

} // namespace metagadget
