#pragma once

#include "metagadget/tunnel.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace metagadget::cli {

enum class LogFormat { Text, Jsonl };

/// Exit codes: 0 success, 1 scenario/check failure, 2 configuration/startup error.
enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigError = 2 };

struct CliConfig {
    std::string subcommand;
    int port = 8080;
    TunnelMode tunnel_mode = TunnelMode::Loopback;
    std::string route_prefix = "/trigger";
    std::string smarthome_base_url;
    std::string smarthome_token = "metagadget-mock-token";
    std::string scenario_path;
    std::optional<std::uint64_t> seed;
    LogFormat log_format = LogFormat::Text;

    std::string gateway_url;      // world-run
    std::string demo_name;        // demo
    std::string fixture_path;     // mock-smarthome
    std::string devices_path;     // serve
    std::filesystem::path fixtures_dir;
};

int cmd_serve(const CliConfig& config, std::ostream& out, std::ostream& err, const std::atomic<bool>& stop);
int cmd_mock_smarthome(const CliConfig& config, std::ostream& out, std::ostream& err, const std::atomic<bool>& stop);
int cmd_world_run(const CliConfig& config, std::ostream& out, std::ostream& err);
int cmd_demo(const CliConfig& config, std::ostream& out, std::ostream& err);

/// Parses argv (flags > environment > defaults) and runs the subcommand.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err, const std::atomic<bool>& stop);

} // namespace metagadget::cli
