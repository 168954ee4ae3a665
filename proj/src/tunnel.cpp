#include "metagadget/tunnel.hpp"

namespace metagadget {
namespace {

constexpr std::string_view kAlphabet = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";

} // namespace

std::string_view to_string(TunnelMode mode) noexcept {
    return mode == TunnelMode::Loopback ? "loopback" : "external";
}

std::optional<TunnelMode> parse_tunnel_mode(std::string_view text) noexcept {
    if (text == "loopback") return TunnelMode::Loopback;
    if (text == "external") return TunnelMode::External;
    return std::nullopt;
}

TokenGenerator TokenGenerator::seeded(std::uint64_t seed) { return TokenGenerator(seed); }

TokenGenerator TokenGenerator::from_entropy() {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd()};
    std::uint32_t words[2];
    seq.generate(std::begin(words), std::end(words));
    return TokenGenerator((static_cast<std::uint64_t>(words[0]) << 32) | words[1]);
}

std::string TokenGenerator::next() {
    std::uniform_int_distribution<std::size_t> pick(0, kAlphabet.size() - 1);
    std::string token(kTokenLength, '0');
    for (auto& ch : token) ch = kAlphabet[pick(rng_)];
    return token;
}

TunnelService::TunnelService(TokenGenerator tokens, std::shared_ptr<ExternalTunnelAdapter> adapter)
    : tokens_(std::move(tokens)), adapter_(std::move(adapter)) {}

std::string TunnelService::fresh_token() {
    // Tokens are never reissued, even after close.
    for (;;) {
        auto token = tokens_.next();
        if (issued_.insert(token).second) return token;
    }
}

TunnelEndpoint TunnelService::open(TunnelMode mode, std::uint16_t local_port) {
    std::lock_guard lock(mutex_);
    std::string base;
    if (mode == TunnelMode::External) {
        if (!adapter_) throw TunnelError("external tunnel mode requires a configured adapter");
        base = adapter_->start(local_port);
        while (!base.empty() && base.back() == '/') base.pop_back();
    } else {
        base = "http://127.0.0.1:" + std::to_string(local_port);
    }
    auto token = fresh_token();
    open_.insert(token);
    return TunnelEndpoint{base + "/" + token, mode, token};
}

void TunnelService::close(const TunnelEndpoint& endpoint) {
    std::lock_guard lock(mutex_);
    if (open_.erase(endpoint.run_token) == 0) return;
    if (endpoint.mode == TunnelMode::External && adapter_) adapter_->stop();
}

bool TunnelService::is_open(std::string_view token) const {
    std::lock_guard lock(mutex_);
    return open_.find(token) != open_.end();
}

} // namespace metagadget
