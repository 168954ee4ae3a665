#include "cli.hpp"

#include "metagadget/devices.hpp"
#include "metagadget/gateway.hpp"
#include "metagadget/smarthome.hpp"
#include "metagadget/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <optional>

namespace metagadget::cli {
namespace {

struct CheckFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool ok, const std::string& what) {
    if (!ok) throw CheckFailed(what);
}

[[nodiscard]] std::string fmt_hz(double hz) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", hz);
    return buf;
}

/// Gateway + loopback tunnel around a fresh device registry.
struct Rig {
    DeviceRegistry devices = DeviceRegistry::demo_defaults();
    std::optional<smarthome::MockServerHandle> mock;
    std::shared_ptr<TunnelService> tunnels;
    std::optional<ServerHandle> server;
    TunnelEndpoint endpoint;

    Rig(const CliConfig& config, const std::string& smarthome_url) {
        HandlerRegistration reg;
        devices.bind_routes(reg);
        if (!smarthome_url.empty()) {
            auto client = std::make_shared<const smarthome::SwitchBotClient>(smarthome_url, config.smarthome_token);
            reg.route("smarthome", smarthome::dispatch_handler(client));
        }
        GatewayConfig gw;
        gw.route_prefix = config.route_prefix;
        server.emplace(run(gw, std::move(reg)));
        tunnels = std::make_shared<TunnelService>(config.seed ? TokenGenerator::seeded(*config.seed)
                                                              : TokenGenerator::from_entropy());
        endpoint = tunnels->open(TunnelMode::Loopback, server->port());
        server->attach_tunnels(tunnels);
    }

    [[nodiscard]] std::vector<RequestLogEntry> served(std::string_view route) const {
        std::vector<RequestLogEntry> out;
        for (auto& e : server->request_log().snapshot()) {
            if (e.route == route && e.response_status == 200) out.push_back(std::move(e));
        }
        return out;
    }
};

[[nodiscard]] world::WorldReport play(const CliConfig& config, const Rig& rig, const std::string& file,
                                      std::ostream& out) {
    auto scenario = world::load_scenario(config.fixtures_dir / file);
    if (config.seed) scenario.seed = *config.seed;
    out << "gateway " << rig.endpoint.public_url << "\n";
    auto report = world::run_scenario(scenario, rig.endpoint.public_url);
    for (const auto& call : report.calls) {
        out << "  t=" << call.t_ms << "ms " << call.user_id << " -> " << call.item_id << " \"" << call.payload << "\" ";
        if (!call.forwarded) {
            out << "dropped\n";
        } else {
            out << call.status << " " << call.response << "\n";
        }
    }
    expect(report.failed_calls == 0, std::to_string(report.failed_calls) + " call(s) failed");
    return report;
}

void demo_fan(const CliConfig& config, std::ostream& out) {
    Rig rig(config, {});
    (void)play(config, rig, "fan_demo.json", out);
    auto fan = rig.devices.get<Fan>("fan");
    const auto commands = rig.served("fan");
    expect(!commands.empty(), "fan received no commands");
    const auto expected = commands.back().envelope->request == "on" ? FanState::Running : FanState::Stopped;
    const auto actual = fan->state();
    out << "fan: " << (actual == FanState::Running ? "Running" : "Stopped") << " after " << commands.size()
        << " command(s)\n";
    expect(actual == expected, "fan state does not match the last command in arrival order");
    expect(actual == FanState::Stopped, "fan should end Stopped");
}

void demo_doorbell(const CliConfig& config, std::ostream& out) {
    Rig rig(config, {});
    auto report = play(config, rig, "doorbell_owner_offline.json", out);
    auto bell = rig.devices.get<Doorbell>("doorbell");
    const auto entries = rig.served("doorbell").size();
    const auto owner = std::find_if(report.users.begin(), report.users.end(), [](const auto& u) { return u.is_owner; });
    expect(owner != report.users.end() && !owner->connected, "owner should be offline");
    out << "doorbell: " << bell->chime_count() << " chime(s), owner offline\n";
    expect(entries > 0, "doorbell received no rings");
    expect(bell->chime_count() == static_cast<std::int64_t>(entries), "chime count differs from served rings");
}

void demo_presence_lamp(const CliConfig& config, std::ostream& out) {
    Rig rig(config, {});
    auto report = play(config, rig, "presence_lamp.json", out);
    const auto responses = report.responses_by_item()["lobby"];
    out << "lamp trace:";
    for (std::size_t k = 0; k < responses.size(); ++k) {
        const auto state = Json::parse(responses[k], nullptr, false);
        const int brightness = state.is_object() ? state.value("brightness", -1) : -1;
        out << " " << brightness;
        const int want = std::min<int>(100, 20 * static_cast<int>(k + 1));
        expect(brightness == want, "brightness after " + std::to_string(k + 1) + " user(s) is "
                                       + std::to_string(brightness) + ", expected " + std::to_string(want));
    }
    out << "\n";
    expect(responses.size() == 10, "expected 10 presence updates, got " + std::to_string(responses.size()));
}

void demo_piano(const CliConfig& config, std::ostream& out) {
    Rig rig(config, {});
    auto report = play(config, rig, "piano.json", out);
    std::vector<double> played;
    for (const auto& call : report.calls) {
        const auto state = Json::parse(call.response, nullptr, false);
        if (state.is_object() && state["lastFreqHz"].is_number()) played.push_back(state["lastFreqHz"]);
    }
    out << "piano:";
    for (double hz : played) out << " " << fmt_hz(hz);
    out << "\n";
    expect(played.size() == 4, "expected 4 notes");
    expect(std::abs(played.front() - 110.00) <= 0.01, "lowest key should be 110.00 Hz");
    expect(std::abs(played.back() - 1396.91) <= 0.01, "highest key should be 1396.91 Hz");
}

void demo_smarthome(const CliConfig& config, std::ostream& out) {
    std::optional<smarthome::MockServerHandle> mock;
    std::string base_url = config.smarthome_base_url;
    CliConfig effective = config;
    if (base_url.empty()) {
        mock.emplace(smarthome::start_mock(smarthome::Fixture::workshop_roster()));
        base_url = mock->base_url();
        effective.smarthome_token = mock->token();
        out << "mock cloud " << base_url << "\n";
    }
    Rig rig(effective, base_url);
    (void)play(effective, rig, "smarthome_bulb.json", out);
    smarthome::SwitchBotClient client(base_url, effective.smarthome_token);
    auto status = client.get_status("bulb-1");
    expect(status.has_value(), "cannot read bulb-1 status");
    const bool on = status->state.power.value_or(false);
    out << "bulb-1 power: " << (on ? "on" : "off") << "\n";
    expect(on, "bulb-1 should be on");
}

} // namespace

int cmd_demo(const CliConfig& config, std::ostream& out, std::ostream& err) {
    static const std::map<std::string, std::function<void(const CliConfig&, std::ostream&)>> demos = {
        {"fan", demo_fan},
        {"doorbell", demo_doorbell},
        {"presence-lamp", demo_presence_lamp},
        {"piano", demo_piano},
        {"smarthome", demo_smarthome},
    };
    auto it = demos.find(config.demo_name);
    if (it == demos.end()) {
        err << "error: unknown demo '" << config.demo_name << "'" << std::endl;
        return kConfigError;
    }
    try {
        it->second(config, out);
        out << "demo " << config.demo_name << ": ok" << std::endl;
        return kOk;
    } catch (const CheckFailed& ex) {
        out.flush();
        err << "demo " << config.demo_name << " failed: " << ex.what() << std::endl;
        return kCheckFailed;
    } catch (const std::exception& ex) {
        out.flush();
        err << "error: " << ex.what() << std::endl;
        return kConfigError;
    }
}

} // namespace metagadget::cli
