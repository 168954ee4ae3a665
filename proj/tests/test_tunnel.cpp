#include "doctest.h"
#include "support.hpp"

#include "metagadget/gateway.hpp"
#include "metagadget/tunnel.hpp"

#include <regex>
#include <set>

using namespace metagadget;

TEST_CASE("loopback URL format") {
    TunnelService tunnels(TokenGenerator::seeded(1));
    auto ep = tunnels.open(TunnelMode::Loopback, 8080);
    CHECK(ep.mode == TunnelMode::Loopback);
    CHECK(ep.run_token.size() >= 8);
    CHECK(std::regex_match(ep.run_token, std::regex("[0-9A-Za-z]{16}")));
    CHECK(ep.public_url == "http://127.0.0.1:8080/" + ep.run_token);
    CHECK(tunnels.is_open(ep.run_token));
}

TEST_CASE("seeded tokens are reproducible") {
    auto a = TokenGenerator::seeded(42), b = TokenGenerator::seeded(42), c = TokenGenerator::seeded(43);
    auto ta = a.next();
    CHECK(ta == b.next());
    CHECK(ta != c.next());
}

TEST_CASE("1000 tokens are distinct") {
    TunnelService seeded(TokenGenerator::seeded(9));
    TunnelService entropy;
    std::set<std::string> seen;
    for (int i = 0; i < 1000; ++i) {
        seen.insert(seeded.open(TunnelMode::Loopback, 1).run_token);
        seen.insert(entropy.open(TunnelMode::Loopback, 1).run_token);
    }
    CHECK(seen.size() == 2000);
}

TEST_CASE("external mode without an adapter fails") {
    TunnelService tunnels;
    CHECK_THROWS_AS((void)tunnels.open(TunnelMode::External, 80), TunnelError);
}

namespace {
struct FakeAdapter : ExternalTunnelAdapter {
    int stops = 0;
    std::string start(std::uint16_t port) override { return "https://relay.example/" + std::to_string(port); }
    void stop() override { ++stops; }
};
} // namespace

TEST_CASE("external mode appends the token to the adapter URL") {
    auto adapter = std::make_shared<FakeAdapter>();
    TunnelService tunnels(TokenGenerator::seeded(3), adapter);
    auto ep = tunnels.open(TunnelMode::External, 5000);
    CHECK(ep.public_url == "https://relay.example/5000/" + ep.run_token);
    tunnels.close(ep);
    tunnels.close(ep);
    CHECK_FALSE(tunnels.is_open(ep.run_token));
}

TEST_CASE("mode names") {
    CHECK(to_string(TunnelMode::Loopback) == "loopback");
    CHECK(parse_tunnel_mode("external") == TunnelMode::External);
    CHECK_FALSE(parse_tunnel_mode("ngrok").has_value());
}

TEST_CASE("gateway honours open tokens and rejects closed or wrong ones") {
    HandlerRegistration reg;
    reg.receive([](std::string_view p) { return HandlerResponse::ok(std::string(p)); });
    auto server = run({}, std::move(reg));
    auto tunnels = std::make_shared<TunnelService>(TokenGenerator::seeded(5));
    server.attach_tunnels(tunnels);

    auto ep = tunnels->open(TunnelMode::Loopback, server.port());
    const std::string path = "/" + ep.run_token;
    const std::string body = R"({"request":"hi"})";

    auto ok = testsupport::post(server.port(), path, body);
    CHECK(ok.status == 200);
    CHECK(ok.body == R"({"response":"hi"})");

    CHECK(testsupport::post(server.port(), "/AAAAAAAAAAAAAAAA", body).status == 404);

    tunnels->close(ep);
    CHECK(testsupport::post(server.port(), path, body).status == 404);

    auto again = tunnels->open(TunnelMode::Loopback, server.port());
    CHECK(again.run_token != ep.run_token);
    CHECK(testsupport::post(server.port(), "/" + again.run_token, body).status == 200);

    std::size_t dispatched = 0;
    for (const auto& e : server.request_log().snapshot()) {
        if (e.response_status == 404) CHECK_FALSE(e.dispatched);
        dispatched += e.dispatched ? 1 : 0;
    }
    CHECK(dispatched == 2);
}
