#pragma once

// Exposure of a local gateway port under a unique, token-suffixed URL.
// Loopback mode is hermetic: http://127.0.0.1:<port>/<run_token>. External
// mode hands the port to a pluggable adapter (a real tunnel provider).

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

namespace metagadget {

enum class TunnelMode { Loopback, External };

[[nodiscard]] std::string_view to_string(TunnelMode mode) noexcept;
[[nodiscard]] std::optional<TunnelMode> parse_tunnel_mode(std::string_view text) noexcept;

struct TunnelEndpoint {
    std::string public_url;
    TunnelMode mode = TunnelMode::Loopback;
    std::string run_token;
};

class TunnelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adapter contract for a third-party tunnel: start(local_port) -> public base URL.
class ExternalTunnelAdapter {
public:
    virtual ~ExternalTunnelAdapter() = default;
    virtual std::string start(std::uint16_t local_port) = 0;
    virtual void stop() = 0;
};

/// 16 characters drawn from [0-9A-Za-z].
class TokenGenerator {
public:
    static constexpr std::size_t kTokenLength = 16;

    static TokenGenerator seeded(std::uint64_t seed);
    static TokenGenerator from_entropy();

    std::string next();

private:
    explicit TokenGenerator(std::uint64_t seed) : rng_(seed) {}
    std::mt19937_64 rng_;
};

/// Issues and validates run tokens. Shared between the code that opens
/// tunnels and the gateway's request path; all members are thread-safe.
class TunnelService {
public:
    explicit TunnelService(TokenGenerator tokens = TokenGenerator::from_entropy(),
                           std::shared_ptr<ExternalTunnelAdapter> adapter = nullptr);

    TunnelEndpoint open(TunnelMode mode, std::uint16_t local_port);
    void close(const TunnelEndpoint& endpoint);

    [[nodiscard]] bool is_open(std::string_view token) const;

private:
    std::string fresh_token();

    mutable std::mutex mutex_;
    TokenGenerator tokens_;
    std::shared_ptr<ExternalTunnelAdapter> adapter_;
    std::set<std::string, std::less<>> issued_;
    std::set<std::string, std::less<>> open_;
};

} // namespace metagadget
