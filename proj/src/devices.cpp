#include "metagadget/devices.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace metagadget {
namespace {

[[nodiscard]] std::optional<int> parse_int(std::string_view text) {
    int value = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) return std::nullopt;
    return value;
}

[[nodiscard]] int int_param(const Json& params, const char* key, int fallback) {
    auto it = params.find(key);
    if (it == params.end()) return fallback;
    if (!it->is_number_integer()) throw std::invalid_argument(std::string("param '") + key + "' must be an integer");
    return it->get<int>();
}

} // namespace

std::string_view to_string(DeviceKind kind) noexcept {
    switch (kind) {
    case DeviceKind::Fan: return "Fan";
    case DeviceKind::Doorbell: return "Doorbell";
    case DeviceKind::Lamp: return "Lamp";
    case DeviceKind::ToneSpeaker: return "ToneSpeaker";
    case DeviceKind::GpioBank: return "GpioBank";
    }
    return "Fan";
}

std::optional<DeviceKind> parse_device_kind(std::string_view text) noexcept {
    for (auto kind : {DeviceKind::Fan, DeviceKind::Doorbell, DeviceKind::Lamp, DeviceKind::ToneSpeaker,
                      DeviceKind::GpioBank}) {
        if (to_string(kind) == text) return kind;
    }
    return std::nullopt;
}

std::string_view to_string(PinLevel level) noexcept { return level == PinLevel::High ? "High" : "Low"; }

std::string_view to_string(FanState state) noexcept { return state == FanState::Running ? "Running" : "Stopped"; }

// ---- Device ---------------------------------------------------------------

Json Device::state_json() const {
    std::lock_guard lock(mutex_);
    return state_unlocked();
}

std::vector<DeviceEvent> Device::events() const {
    std::lock_guard lock(mutex_);
    return log_;
}

DeviceState Device::snapshot() const {
    std::lock_guard lock(mutex_);
    return DeviceState{key_, kind_, state_unlocked(), log_};
}

std::string Device::export_jsonl() const {
    std::string out;
    for (const auto& ev : events()) {
        nlohmann::ordered_json line;
        line["deviceKey"] = key_;
        line["order"] = ev.order;
        line["command"] = ev.command;
        line["state"] = ev.state;
        out += line.dump();
        out += '\n';
    }
    return out;
}

void Device::record(std::string command, std::optional<std::uint64_t> order) {
    std::uint64_t next = log_.empty() ? 0 : log_.back().order + 1;
    if (order) {
        if (!log_.empty() && *order <= log_.back().order) {
            throw DeviceFault("event order " + std::to_string(*order) + " does not follow "
                              + std::to_string(log_.back().order) + " on device '" + key_ + "'");
        }
        next = *order;
    }
    log_.push_back(DeviceEvent{std::move(command), state_unlocked(), next});
}

// ---- GPIO -----------------------------------------------------------------

VirtualGpioBank::VirtualGpioBank(std::string key, int led_pin)
    : Device(std::move(key), DeviceKind::GpioBank), led_pin_(led_pin) {
    if (led_pin < 0 || led_pin >= kPinCount) throw std::invalid_argument("led pin out of range");
    pins_.fill(PinLevel::Low);
}

void VirtualGpioBank::write(int pin, PinLevel level, std::optional<std::uint64_t> order) {
    if (pin < 0 || pin >= kPinCount) throw DeviceFault("GPIO pin " + std::to_string(pin) + " out of range");
    std::lock_guard lock(mutex_);
    pins_[static_cast<std::size_t>(pin)] = level;
    record("write " + std::to_string(pin) + " " + std::string(to_string(level)), order);
}

PinLevel VirtualGpioBank::read(int pin) const {
    if (pin < 0 || pin >= kPinCount) throw DeviceFault("GPIO pin " + std::to_string(pin) + " out of range");
    std::lock_guard lock(mutex_);
    return pins_[static_cast<std::size_t>(pin)];
}

HandlerResponse VirtualGpioBank::handle(std::string_view payload, std::optional<std::uint64_t> order) {
    write(led_pin_, payload == "on" ? PinLevel::High : PinLevel::Low, order);
    return HandlerResponse::ok(state_json());
}

Json VirtualGpioBank::state_unlocked() const {
    Json high = Json::array();
    for (int pin = 0; pin < kPinCount; ++pin) {
        if (pins_[static_cast<std::size_t>(pin)] == PinLevel::High) high.push_back(pin);
    }
    return Json{{"high", std::move(high)}};
}

// ---- Fan ------------------------------------------------------------------

FanState Fan::command(std::string_view payload, std::optional<std::uint64_t> order) {
    std::lock_guard lock(mutex_);
    state_ = payload == "on" ? FanState::Running : FanState::Stopped;
    record(std::string(payload), order);
    return state_;
}

FanState Fan::state() const {
    std::lock_guard lock(mutex_);
    return state_;
}

HandlerResponse Fan::handle(std::string_view payload, std::optional<std::uint64_t> order) {
    command(payload, order);
    return HandlerResponse::ok(state_json());
}

Json Fan::state_unlocked() const { return Json{{"state", std::string(to_string(state_))}}; }

// ---- Doorbell -------------------------------------------------------------

std::int64_t Doorbell::ring(std::optional<std::uint64_t> order) {
    std::lock_guard lock(mutex_);
    ++chimes_;
    record("ring", order);
    return chimes_;
}

std::int64_t Doorbell::chime_count() const {
    std::lock_guard lock(mutex_);
    return chimes_;
}

HandlerResponse Doorbell::handle(std::string_view, std::optional<std::uint64_t> order) {
    ring(order);
    return HandlerResponse::ok(state_json());
}

Json Doorbell::state_unlocked() const { return Json{{"chimeCount", chimes_}}; }

// ---- Lamp -----------------------------------------------------------------

PresenceMapping linear_presence_mapping(int percent_per_user) {
    return [percent_per_user](int users) {
        return static_cast<int>(std::min<std::int64_t>(100, std::int64_t{percent_per_user} * users));
    };
}

PresenceLamp::PresenceLamp(std::string key, PresenceMapping mapping)
    : Device(std::move(key), DeviceKind::Lamp), mapping_(std::move(mapping)) {
    if (!mapping_) throw std::invalid_argument("presence mapping must be callable");
}

int PresenceLamp::set_from_presence(int user_count, std::optional<std::uint64_t> order) {
    if (user_count < 0) throw DeviceFault("user count must be >= 0");
    std::lock_guard lock(mutex_);
    brightness_ = std::clamp(mapping_(user_count), 0, 100);
    record("presence " + std::to_string(user_count), order);
    return brightness_;
}

int PresenceLamp::brightness() const {
    std::lock_guard lock(mutex_);
    return brightness_;
}

HandlerResponse PresenceLamp::handle(std::string_view payload, std::optional<std::uint64_t> order) {
    auto count = parse_int(payload);
    if (!count || *count < 0) {
        return HandlerResponse::failure(
            {ErrorCode::MalformedPayload, "lamp expects a non-negative user count, got '" + std::string(payload) + "'", ""});
    }
    set_from_presence(*count, order);
    return HandlerResponse::ok(state_json());
}

Json PresenceLamp::state_unlocked() const { return Json{{"brightness", brightness_}}; }

// ---- Tone speaker ---------------------------------------------------------

double ToneSpeaker::note_frequency(int note_index) {
    if (note_index < 0 || note_index > kMaxNote) {
        throw DeviceFault("note index " + std::to_string(note_index) + " outside [0, 44]");
    }
    const double hz = kBaseHz * std::exp2(static_cast<double>(note_index) / 12.0);
    return std::round(hz * 100.0) / 100.0;
}

double ToneSpeaker::play(int note_index, std::optional<std::uint64_t> order) {
    const double hz = note_frequency(note_index);
    std::lock_guard lock(mutex_);
    last_hz_ = hz;
    record("note " + std::to_string(note_index), order);
    return hz;
}

std::optional<double> ToneSpeaker::last_frequency() const {
    std::lock_guard lock(mutex_);
    return last_hz_;
}

HandlerResponse ToneSpeaker::handle(std::string_view payload, std::optional<std::uint64_t> order) {
    auto note = parse_int(payload);
    if (!note) {
        return HandlerResponse::failure(
            {ErrorCode::MalformedPayload, "speaker expects a note index, got '" + std::string(payload) + "'", ""});
    }
    play(*note, order);
    return HandlerResponse::ok(state_json());
}

Json ToneSpeaker::state_unlocked() const {
    return Json{{"lastFreqHz", last_hz_ ? Json(*last_hz_) : Json(nullptr)}};
}

// ---- Registry -------------------------------------------------------------

std::shared_ptr<Device> DeviceRegistry::add(const DeviceSpec& spec) {
    if (spec.device_key.empty()) throw std::invalid_argument("device key must not be empty");
    if (devices_.count(spec.device_key) != 0) {
        throw std::invalid_argument("duplicate device key '" + spec.device_key + "'");
    }
    const Json& params = spec.params.is_object() ? spec.params : Json::object();
    std::shared_ptr<Device> device;
    switch (spec.kind) {
    case DeviceKind::Fan: device = std::make_shared<Fan>(spec.device_key); break;
    case DeviceKind::Doorbell: device = std::make_shared<Doorbell>(spec.device_key); break;
    case DeviceKind::Lamp:
        device = std::make_shared<PresenceLamp>(spec.device_key,
                                                linear_presence_mapping(int_param(params, "percentPerUser", 20)));
        break;
    case DeviceKind::ToneSpeaker: device = std::make_shared<ToneSpeaker>(spec.device_key); break;
    case DeviceKind::GpioBank:
        device = std::make_shared<VirtualGpioBank>(spec.device_key, int_param(params, "ledPin", 17));
        break;
    }
    devices_.emplace(spec.device_key, device);
    return device;
}

DeviceRegistry DeviceRegistry::from_json(const Json& doc) {
    if (!doc.is_array()) throw std::invalid_argument("device config must be a JSON array");
    DeviceRegistry registry;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& item = doc[i];
        const auto where = "device[" + std::to_string(i) + "]: ";
        if (!item.is_object()) throw std::invalid_argument(where + "must be an object");
        auto key = item.contains("deviceKey") ? item["deviceKey"] : item.value("device_key", Json());
        if (!key.is_string()) throw std::invalid_argument(where + "missing string deviceKey");
        if (!item.contains("kind") || !item["kind"].is_string()) throw std::invalid_argument(where + "missing kind");
        auto kind = parse_device_kind(item["kind"].get<std::string>());
        if (!kind) throw std::invalid_argument(where + "unknown kind '" + item["kind"].get<std::string>() + "'");
        registry.add(DeviceSpec{key.get<std::string>(), *kind, item.value("params", Json::object())});
    }
    return registry;
}

DeviceRegistry DeviceRegistry::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open device config " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto doc = Json::parse(buffer.str(), nullptr, false);
    if (doc.is_discarded()) throw std::invalid_argument("device config " + path.string() + " is not valid JSON");
    return from_json(doc);
}

DeviceRegistry DeviceRegistry::demo_defaults() {
    DeviceRegistry registry;
    registry.add({"fan", DeviceKind::Fan});
    registry.add({"doorbell", DeviceKind::Doorbell});
    registry.add({"lamp", DeviceKind::Lamp});
    registry.add({"piano", DeviceKind::ToneSpeaker});
    registry.add({"led", DeviceKind::GpioBank});
    return registry;
}

std::shared_ptr<Device> DeviceRegistry::find(std::string_view key) const {
    auto it = devices_.find(key);
    return it == devices_.end() ? nullptr : it->second;
}

std::vector<std::string> DeviceRegistry::keys() const {
    std::vector<std::string> out;
    for (const auto& [key, device] : devices_) out.push_back(key);
    return out;
}

void DeviceRegistry::bind_routes(HandlerRegistration& registration) const {
    for (const auto& [key, device] : devices_) registration.route(key, device_handler(device), key);
}

std::string DeviceRegistry::export_jsonl() const {
    std::string out;
    for (const auto& [key, device] : devices_) out += device->export_jsonl();
    return out;
}

Handler device_handler(std::shared_ptr<Device> device) {
    return [device = std::move(device)](const RequestContext& ctx) {
        return device->handle(ctx.payload, ctx.arrival_order);
    };
}

} // namespace metagadget
