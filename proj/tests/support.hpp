#pragma once

#include "httplib.h"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace testsupport {

inline std::filesystem::path fixtures() { return METAGADGET_FIXTURES_DIR; }

struct Reply {
    int status = 0;
    std::string body;
};

inline Reply post(std::uint16_t port, const std::string& path, const std::string& body) {
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(30, 0);
    auto res = client.Post(path, body, "application/json");
    if (!res) return {};
    return {res->status, res->body};
}

inline Reply get(std::uint16_t port, const std::string& path) {
    httplib::Client client("127.0.0.1", port);
    auto res = client.Get(path);
    if (!res) return {};
    return {res->status, res->body};
}

/// Random UTF-8 text biased towards characters that stress JSON escaping.
inline std::string random_text(std::mt19937_64& rng, std::size_t max_len = 40) {
    static const char* const pieces[] = {"\"", "\\", "\n", "\r", "\t", "\b", "\f", "/", "\x01", "\x1f", "{", "}",
                                         "[", "]", ":", ",", "'", " ", "a", "Z", "0", "on", "off",
                                         "\xc3\xa9",         // é
                                         "\xe3\x81\x82",     // あ
                                         "\xe2\x82\xac",     // €
                                         "\xf0\x9f\x8e\xb9", // 🎹
                                         "\\u0000", "null", "\x7f"};
    constexpr auto n = sizeof(pieces) / sizeof(pieces[0]);
    std::uniform_int_distribution<std::size_t> len(0, max_len), pick(0, n - 1);
    std::string out;
    for (auto i = len(rng); i > 0; --i) out += pieces[pick(rng)];
    return out;
}

/// Random bytes, not necessarily valid UTF-8.
inline std::string random_bytes(std::mt19937_64& rng, std::size_t max_len = 64) {
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<int> byte(0, 255);
    std::string out(len(rng), '\0');
    for (auto& c : out) c = static_cast<char>(byte(rng));
    return out;
}

} // namespace testsupport
