#include "metagadget/smarthome.hpp"

#include <array>
#include <fstream>
#include <sstream>

namespace metagadget::smarthome {
namespace {

constexpr std::array kAllTypes = {DeviceType::Hub,        DeviceType::Bulb,         DeviceType::Plug,
                                  DeviceType::Bot,        DeviceType::LedStrip,     DeviceType::Meter,
                                  DeviceType::MotionSensor, DeviceType::Camera,     DeviceType::Humidifier,
                                  DeviceType::Circulator, DeviceType::RemoteButton};

[[nodiscard]] bool has_power(DeviceType t) {
    switch (t) {
    case DeviceType::Bulb:
    case DeviceType::LedStrip:
    case DeviceType::Plug:
    case DeviceType::Bot:
    case DeviceType::Circulator:
    case DeviceType::Humidifier:
        return true;
    default:
        return false;
    }
}

[[nodiscard]] bool dimmable(DeviceType t) { return t == DeviceType::Bulb || t == DeviceType::LedStrip; }

[[nodiscard]] ClientError invalid(std::string message) {
    return ClientError{ClientErrorKind::InvalidCommand, std::move(message)};
}

// setBrightness accepts 50 or "50".
[[nodiscard]] std::optional<int> brightness_parameter(const Json& p) {
    if (p.is_number_integer()) {
        auto v = p.get<std::int64_t>();
        if (v < 1 || v > 100) return std::nullopt;
        return static_cast<int>(v);
    }
    if (p.is_string()) {
        const auto& s = p.get_ref<const std::string&>();
        if (s.empty() || s.size() > 3 || s.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
        auto v = std::stoi(s);
        if (v < 1 || v > 100) return std::nullopt;
        return v;
    }
    return std::nullopt;
}

[[nodiscard]] Expected<DeviceStateRecord, std::string> state_from_json(DeviceType type, const Json& doc) {
    auto state = default_state(type);
    if (doc.is_null()) return state;
    if (!doc.is_object()) return Unexpected<std::string>{"state must be an object"};
    if (auto it = doc.find("power"); it != doc.end() && state.power) {
        if (!it->is_string() || (*it != "on" && *it != "off")) return Unexpected<std::string>{"power must be \"on\" or \"off\""};
        state.power = *it == "on";
    }
    if (auto it = doc.find("brightness"); it != doc.end() && state.brightness) {
        if (!it->is_number_integer() || *it < 1 || *it > 100) {
            return Unexpected<std::string>{"brightness must be an integer in [1, 100]"};
        }
        state.brightness = it->get<int>();
    }
    if (auto it = doc.find("temperature"); it != doc.end() && state.temperature_c) {
        if (!it->is_number()) return Unexpected<std::string>{"temperature must be a number"};
        state.temperature_c = it->get<double>();
    }
    if (auto it = doc.find("humidity"); it != doc.end() && state.humidity_pct) {
        if (!it->is_number()) return Unexpected<std::string>{"humidity must be a number"};
        state.humidity_pct = it->get<double>();
    }
    if (auto it = doc.find("co2"); it != doc.end() && state.co2_ppm) {
        if (!it->is_number_integer()) return Unexpected<std::string>{"co2 must be an integer"};
        state.co2_ppm = it->get<int>();
    }
    return state;
}

void merge_state(Json& target, const DeviceStateRecord& state) {
    const Json fields = to_json(state);
    for (const auto& [key, value] : fields.items()) target[key] = value;
}

} // namespace

std::string_view to_string(DeviceType type) noexcept {
    switch (type) {
    case DeviceType::Hub: return "Hub";
    case DeviceType::Bulb: return "Bulb";
    case DeviceType::Plug: return "Plug";
    case DeviceType::Bot: return "Bot";
    case DeviceType::LedStrip: return "LedStrip";
    case DeviceType::Meter: return "Meter";
    case DeviceType::MotionSensor: return "MotionSensor";
    case DeviceType::Camera: return "Camera";
    case DeviceType::Humidifier: return "Humidifier";
    case DeviceType::Circulator: return "Circulator";
    case DeviceType::RemoteButton: return "RemoteButton";
    }
    return "Hub";
}

std::optional<DeviceType> parse_device_type(std::string_view text) noexcept {
    for (auto t : kAllTypes) {
        if (to_string(t) == text) return t;
    }
    return std::nullopt;
}

std::string_view to_string(ClientErrorKind kind) noexcept {
    switch (kind) {
    case ClientErrorKind::NotFound: return "NotFound";
    case ClientErrorKind::InvalidCommand: return "InvalidCommand";
    case ClientErrorKind::Unauthorized: return "Unauthorized";
    case ClientErrorKind::Transport: return "Transport";
    case ClientErrorKind::Protocol: return "Protocol";
    }
    return "Protocol";
}

DeviceStateRecord default_state(DeviceType type) {
    DeviceStateRecord s;
    if (has_power(type)) s.power = false;
    if (dimmable(type)) s.brightness = 100;
    if (type == DeviceType::Meter) {
        s.temperature_c = 25.0;
        s.humidity_pct = 50.0;
        s.co2_ppm = 800;
    }
    return s;
}

Json to_json(const DeviceStateRecord& state) {
    Json doc = Json::object();
    if (state.power) doc["power"] = *state.power ? "on" : "off";
    if (state.brightness) doc["brightness"] = *state.brightness;
    if (state.temperature_c) doc["temperature"] = *state.temperature_c;
    if (state.humidity_pct) doc["humidity"] = *state.humidity_pct;
    if (state.co2_ppm) doc["co2"] = *state.co2_ppm;
    return doc;
}

Json to_json(const SmartHomeDevice& device) {
    return Json{{"deviceId", device.device_id},
                {"deviceType", std::string(to_string(device.device_type))},
                {"name", device.name},
                {"state", to_json(device.state)}};
}

Json to_json(const DeviceStatus& status) {
    Json doc{{"deviceId", status.device_id}, {"deviceType", std::string(to_string(status.device_type))}};
    merge_state(doc, status.state);
    return doc;
}

Json to_json(const CommandRequest& cmd) {
    return Json{{"command", cmd.command}, {"parameter", cmd.parameter}, {"commandType", cmd.command_type}};
}

Expected<SmartHomeDevice, std::string> device_from_json(const Json& doc) {
    using E = Unexpected<std::string>;
    if (!doc.is_object()) return E{"device must be an object"};
    auto id = doc.find("deviceId");
    if (id == doc.end() || !id->is_string() || id->get_ref<const std::string&>().empty()) return E{"missing deviceId"};
    auto type_field = doc.find("deviceType");
    if (type_field == doc.end() || !type_field->is_string()) return E{"missing deviceType"};
    auto type = parse_device_type(type_field->get<std::string>());
    if (!type) return E{"unknown deviceType '" + type_field->get<std::string>() + "'"};
    auto name = doc.value("name", Json(id->get<std::string>()));
    if (!name.is_string()) return E{"name must be a string"};

    auto state = state_from_json(*type, doc.value("state", Json()));
    if (!state) return E{id->get<std::string>() + ": " + state.error()};
    return SmartHomeDevice{id->get<std::string>(), *type, name.get<std::string>(), *state};
}

Expected<DeviceStatus, std::string> status_from_json(const Json& doc) {
    using E = Unexpected<std::string>;
    if (!doc.is_object()) return E{"status must be an object"};
    if (!doc.contains("deviceId") || !doc["deviceId"].is_string()) return E{"missing deviceId"};
    if (!doc.contains("deviceType") || !doc["deviceType"].is_string()) return E{"missing deviceType"};
    auto type = parse_device_type(doc["deviceType"].get<std::string>());
    if (!type) return E{"unknown deviceType"};
    Json fields = doc;
    fields.erase("deviceId");
    fields.erase("deviceType");
    auto state = state_from_json(*type, fields);
    if (!state) return E{state.error()};
    return DeviceStatus{doc["deviceId"].get<std::string>(), *type, *state};
}

Expected<CommandRequest, std::string> command_from_json(const Json& doc) {
    using E = Unexpected<std::string>;
    if (!doc.is_object()) return E{"command body must be a JSON object"};
    auto command = doc.find("command");
    if (command == doc.end() || !command->is_string() || command->get_ref<const std::string&>().empty()) {
        return E{"missing command"};
    }
    CommandRequest cmd;
    cmd.command = command->get<std::string>();
    if (auto p = doc.find("parameter"); p != doc.end()) cmd.parameter = *p;
    if (auto t = doc.find("commandType"); t != doc.end()) {
        if (!t->is_string()) return E{"commandType must be a string"};
        cmd.command_type = t->get<std::string>();
    }
    return cmd;
}

DeviceStatus status_of(const SmartHomeDevice& device) {
    return DeviceStatus{device.device_id, device.device_type, device.state};
}

ClientResult<DeviceStatus> apply_command(SmartHomeDevice& device, const CommandRequest& cmd) {
    using E = Unexpected<ClientError>;
    if (cmd.command_type != "command") return E{invalid("unsupported commandType '" + cmd.command_type + "'")};
    const auto type = device.device_type;
    const auto unsupported = [&] {
        return E{invalid("command '" + cmd.command + "' is not supported by " + std::string(to_string(type)))};
    };

    if (cmd.command == "turnOn" || cmd.command == "turnOff") {
        if (!has_power(type)) return unsupported();
        device.state.power = cmd.command == "turnOn";
    } else if (cmd.command == "setBrightness") {
        if (!dimmable(type)) return unsupported();
        auto level = brightness_parameter(cmd.parameter);
        if (!level) return E{invalid("setBrightness expects an integer in [1, 100]")};
        device.state.brightness = *level;
        device.state.power = true;
    } else if (cmd.command == "press") {
        // A bot press flips the physical switch it is mounted on.
        if (type != DeviceType::Bot) return unsupported();
        device.state.power = !device.state.power.value_or(false);
    } else {
        return unsupported();
    }
    return status_of(device);
}

Fixture Fixture::workshop_roster() {
    struct Group {
        DeviceType type;
        int count;
        const char* id_stem;
        const char* name_stem;
    };
    static constexpr std::array kRoster = {
        Group{DeviceType::Hub, 2, "hub", "Hub"},
        Group{DeviceType::Camera, 2, "camera", "Smart Camera"},
        Group{DeviceType::MotionSensor, 4, "motion", "Motion Sensor"},
        Group{DeviceType::Meter, 1, "meter", "CO2 Meter"},
        Group{DeviceType::LedStrip, 1, "ledstrip", "LED Strip Light"},
        Group{DeviceType::Bulb, 4, "bulb", "Smart Bulb"},
        Group{DeviceType::Plug, 4, "plug", "Smart Plug"},
        Group{DeviceType::Bot, 4, "bot", "Bot"},
        Group{DeviceType::Humidifier, 1, "humidifier", "Humidifier"},
        Group{DeviceType::RemoteButton, 2, "button", "Remote Button"},
        Group{DeviceType::Circulator, 2, "circulator", "Circulator"},
    };
    Fixture fixture;
    for (const auto& g : kRoster) {
        for (int i = 1; i <= g.count; ++i) {
            auto n = std::to_string(i);
            fixture.devices.push_back(SmartHomeDevice{std::string(g.id_stem) + "-" + n, g.type,
                                                      std::string(g.name_stem) + " " + n, default_state(g.type)});
        }
    }
    return fixture;
}

Expected<Fixture, std::string> Fixture::from_json(const Json& doc) {
    using E = Unexpected<std::string>;
    if (!doc.is_object()) return E{"fixture must be a JSON object"};
    Fixture fixture;
    if (auto t = doc.find("token"); t != doc.end()) {
        if (!t->is_string()) return E{"token must be a string"};
        fixture.token = t->get<std::string>();
    }
    auto devices = doc.find("devices");
    if (devices == doc.end()) return fixture;
    if (!devices->is_array()) return E{"devices must be an array"};
    for (std::size_t i = 0; i < devices->size(); ++i) {
        auto device = device_from_json((*devices)[i]);
        if (!device) return E{"devices[" + std::to_string(i) + "]: " + device.error()};
        for (const auto& existing : fixture.devices) {
            if (existing.device_id == device->device_id) return E{"duplicate deviceId '" + device->device_id + "'"};
        }
        fixture.devices.push_back(std::move(*device));
    }
    return fixture;
}

Expected<Fixture, std::string> Fixture::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return Unexpected<std::string>{"cannot open fixture " + path.string()};
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto doc = Json::parse(buffer.str(), nullptr, false);
    if (doc.is_discarded()) return Unexpected<std::string>{"fixture " + path.string() + " is not valid JSON"};
    return from_json(doc);
}

Json Fixture::to_json() const {
    Json list = Json::array();
    for (const auto& d : devices) list.push_back(smarthome::to_json(d));
    return Json{{"token", token}, {"devices", std::move(list)}};
}

} // namespace metagadget::smarthome
