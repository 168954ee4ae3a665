#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace metagadget::detail {

/// "http://host:port/a/b" -> origin "http://host:port", path "/a/b".
struct SplitUrl {
    std::string origin;
    std::string path;
};

[[nodiscard]] inline std::optional<SplitUrl> split_url(std::string_view url) {
    constexpr std::string_view kScheme = "http://";
    if (url.substr(0, kScheme.size()) != kScheme) return std::nullopt;
    auto slash = url.find('/', kScheme.size());
    auto origin = url.substr(0, slash);
    if (origin.size() == kScheme.size()) return std::nullopt;
    std::string path = slash == std::string_view::npos ? std::string() : std::string(url.substr(slash));
    return SplitUrl{std::string(origin), std::move(path)};
}

} // namespace metagadget::detail
