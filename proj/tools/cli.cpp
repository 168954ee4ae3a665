#include "cli.hpp"

#include "metagadget/devices.hpp"
#include "metagadget/gateway.hpp"
#include "metagadget/smarthome.hpp"
#include "metagadget/world.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <mutex>
#include <thread>

#ifndef METAGADGET_FIXTURES_DIR
#define METAGADGET_FIXTURES_DIR "fixtures"
#endif

namespace metagadget::cli {
namespace {

void wait_for(const std::atomic<bool>& stop) {
    while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
}

[[nodiscard]] std::string log_line(const RequestLogEntry& e, LogFormat format) {
    if (format == LogFormat::Jsonl) {
        nlohmann::ordered_json doc;
        doc["arrivalOrder"] = e.arrival_order;
        doc["requestId"] = e.request_id;
        doc["route"] = e.route;
        doc["deviceKey"] = e.device_key;
        doc["status"] = e.response_status;
        doc["latencyMs"] = e.latency_ms;
        doc["dispatched"] = e.dispatched;
        doc["request"] = e.envelope ? Json(e.envelope->request) : Json(nullptr);
        doc["userId"] = e.envelope ? Json(e.envelope->user_id) : Json(nullptr);
        doc["itemId"] = e.envelope ? Json(e.envelope->item_id) : Json(nullptr);
        return doc.dump();
    }
    std::string line = "#" + std::to_string(e.arrival_order) + " " + std::to_string(e.response_status) + " route="
                       + (e.route.empty() ? "<default>" : e.route);
    if (e.envelope) {
        line += " user=" + e.envelope->user_id + " item=" + e.envelope->item_id + " request=\"" + e.envelope->request
                + "\"";
    }
    char latency[32];
    std::snprintf(latency, sizeof latency, " %.1fms", e.latency_ms);
    return line + latency;
}

[[nodiscard]] std::shared_ptr<TunnelService> make_tunnels(const CliConfig& config) {
    return std::make_shared<TunnelService>(config.seed ? TokenGenerator::seeded(*config.seed)
                                                       : TokenGenerator::from_entropy());
}

} // namespace

int cmd_serve(const CliConfig& config, std::ostream& out, std::ostream& err, const std::atomic<bool>& stop) {
    try {
        auto registry = config.devices_path.empty() ? DeviceRegistry::demo_defaults()
                                                     : DeviceRegistry::from_file(config.devices_path);

        GatewayConfig gw;
        gw.bind_port = config.port;
        gw.route_prefix = config.route_prefix;

        HandlerRegistration reg;
        // The default route drives the GPIO LED, like the classic on/off example.
        for (const auto& key : registry.keys()) {
            if (auto bank = registry.get<VirtualGpioBank>(key)) {
                reg.receive(device_handler(bank), key);
                break;
            }
        }
        registry.bind_routes(reg);
        if (!config.smarthome_base_url.empty()) {
            auto client = std::make_shared<const smarthome::SwitchBotClient>(config.smarthome_base_url,
                                                                              config.smarthome_token);
            reg.route("smarthome", smarthome::dispatch_handler(client));
        }

        auto server = run(gw, std::move(reg));
        auto tunnels = make_tunnels(config);
        auto endpoint = tunnels->open(config.tunnel_mode, server.port());
        server.attach_tunnels(tunnels);

        std::mutex out_mutex;
        out << endpoint.public_url << std::endl;
        server.on_request_logged([&](const RequestLogEntry& entry) {
            std::lock_guard lock(out_mutex);
            out << log_line(entry, config.log_format) << std::endl;
        });

        wait_for(stop);
        tunnels->close(endpoint);
        server.shutdown();
        std::lock_guard lock(out_mutex);
        out.flush();
        err << "shutdown after " << server.request_log().size() << " request(s)" << std::endl;
        return kOk;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << std::endl;
        return kConfigError;
    }
}

int cmd_mock_smarthome(const CliConfig& config, std::ostream& out, std::ostream& err, const std::atomic<bool>& stop) {
    auto fixture = smarthome::Fixture::workshop_roster();
    if (!config.fixture_path.empty()) {
        auto loaded = smarthome::Fixture::from_file(config.fixture_path);
        if (!loaded) {
            err << "error: " << loaded.error() << std::endl;
            return kConfigError;
        }
        fixture = std::move(*loaded);
    }
    try {
        auto mock = smarthome::start_mock(std::move(fixture), config.port);
        out << mock.base_url() << std::endl;
        wait_for(stop);
        mock.stop();
        return kOk;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << std::endl;
        return kConfigError;
    }
}

int cmd_world_run(const CliConfig& config, std::ostream& out, std::ostream& err) {
    if (config.gateway_url.empty()) {
        err << "error: --gateway-url is required" << std::endl;
        return kConfigError;
    }
    world::Scenario scenario;
    try {
        scenario = world::load_scenario(config.scenario_path);
    } catch (const world::ScenarioError& ex) {
        err << "error: " << ex.what() << std::endl;
        return kConfigError;
    }
    if (config.seed) scenario.seed = *config.seed;

    auto report = world::run_scenario(scenario, config.gateway_url);
    if (config.log_format == LogFormat::Jsonl) {
        out << report.to_json().dump() << std::endl;
    } else {
        out << report.to_text();
    }
    return report.failed_calls == 0 ? kOk : kCheckFailed;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err, const std::atomic<bool>& stop) {
    CLI::App app{"MetaGadget: metaverse event triggers for IoT devices", "metagadget"};
    app.require_subcommand(1);

    CliConfig config;
    config.fixtures_dir = METAGADGET_FIXTURES_DIR;
    std::string tunnel_mode = "loopback";
    std::string log_format = "text";
    std::uint64_t seed = 0;
    std::string fixtures_dir = config.fixtures_dir.string();

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "Seed for run tokens / scenario RNG")->envname("MG_SEED");
        sub->add_option("--log-format", log_format, "text or jsonl")
            ->check(CLI::IsMember({"text", "jsonl"}))
            ->capture_default_str();
    };

    auto* serve = app.add_subcommand("serve", "Run the gateway and print its public URL");
    serve->add_option("--port", config.port, "Listen port (0 = ephemeral)")
        ->envname("MG_PORT")
        ->check(CLI::Range(0, 65535))
        ->capture_default_str();
    serve->add_option("--tunnel-mode", tunnel_mode, "loopback or external")
        ->envname("MG_TUNNEL_MODE")
        ->check(CLI::IsMember({"loopback", "external"}))
        ->capture_default_str();
    serve->add_option("--route-prefix", config.route_prefix)->envname("MG_ROUTE_PREFIX")->capture_default_str();
    serve->add_option("--smarthome-base-url", config.smarthome_base_url, "Enables the /smarthome route")
        ->envname("SMARTHOME_BASE_URL");
    serve->add_option("--smarthome-token", config.smarthome_token)->envname("SMARTHOME_TOKEN")->capture_default_str();
    serve->add_option("--devices", config.devices_path, "Device registry JSON")->check(CLI::ExistingFile);
    add_common(serve);

    auto* mock = app.add_subcommand("mock-smarthome", "Run the mock smart-home cloud");
    mock->add_option("--port", config.port)->envname("MG_PORT")->check(CLI::Range(0, 65535))->capture_default_str();
    mock->add_option("--fixture", config.fixture_path, "Fixture JSON (default: workshop roster)");
    add_common(mock);

    auto* world_run = app.add_subcommand("world-run", "Replay a scenario file against a gateway");
    world_run->add_option("scenario", config.scenario_path, "Scenario JSON")->required();
    world_run->add_option("--gateway-url", config.gateway_url, "Gateway or tunnel URL");
    add_common(world_run);

    auto* demo = app.add_subcommand("demo", "Run a built-in end-to-end demo");
    demo->add_option("name", config.demo_name, "fan, doorbell, presence-lamp, piano or smarthome")
        ->required()
        ->check(CLI::IsMember({"fan", "doorbell", "presence-lamp", "piano", "smarthome"}));
    demo->add_option("--smarthome-base-url", config.smarthome_base_url, "Use this cloud instead of an in-process mock")
        ->envname("SMARTHOME_BASE_URL");
    demo->add_option("--smarthome-token", config.smarthome_token)->envname("SMARTHOME_TOKEN");
    demo->add_option("--fixtures-dir", fixtures_dir)->envname("MG_FIXTURES_DIR")->capture_default_str();
    demo->add_option("--route-prefix", config.route_prefix)->envname("MG_ROUTE_PREFIX");
    add_common(demo);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return kOk;
        }
        app.exit(e, out, err);
        return kConfigError;
    }

    config.tunnel_mode = *parse_tunnel_mode(tunnel_mode);
    config.log_format = log_format == "jsonl" ? LogFormat::Jsonl : LogFormat::Text;
    config.fixtures_dir = fixtures_dir;
    for (auto* sub : {serve, mock, world_run, demo}) {
        if (sub->parsed() && sub->get_option("--seed")->count() + (std::getenv("MG_SEED") ? 1 : 0) > 0) {
            config.seed = seed;
        }
    }

    if (serve->parsed()) return cmd_serve(config, out, err, stop);
    if (mock->parsed()) return cmd_mock_smarthome(config, out, err, stop);
    if (world_run->parsed()) return cmd_world_run(config, out, err);
    return cmd_demo(config, out, err);
}

} // namespace metagadget::cli
