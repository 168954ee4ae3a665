#pragma once

#include <stdexcept>
#include <type_traits>
#include <utility>
#include <variant>

namespace metagadget {

/// Error wrapper used to construct a failed Expected, mirroring std::unexpected.
template <class E>
struct Unexpected {
    E error;
};

template <class E>
Unexpected(E) -> Unexpected<E>;

/// Minimal value-or-error carrier with the std::expected surface we need.
/// C++20 has no std::expected; this keeps call sites source-compatible with it.
template <class T, class E>
class Expected {
public:
    Expected(T value) : storage_(std::in_place_index<0>, std::move(value)) {}
    Expected(Unexpected<E> err) : storage_(std::in_place_index<1>, std::move(err.error)) {}

    [[nodiscard]] bool has_value() const noexcept { return storage_.index() == 0; }
    explicit operator bool() const noexcept { return has_value(); }

    [[nodiscard]] T& value() & {
        if (!has_value()) throw std::logic_error("Expected: value() on error state");
        return std::get<0>(storage_);
    }
    [[nodiscard]] const T& value() const& {
        if (!has_value()) throw std::logic_error("Expected: value() on error state");
        return std::get<0>(storage_);
    }
    [[nodiscard]] T&& value() && {
        if (!has_value()) throw std::logic_error("Expected: value() on error state");
        return std::get<0>(std::move(storage_));
    }

    [[nodiscard]] const E& error() const& { return std::get<1>(storage_); }
    [[nodiscard]] E& error() & { return std::get<1>(storage_); }

    T& operator*() & { return value(); }
    const T& operator*() const& { return value(); }
    T* operator->() { return &value(); }
    const T* operator->() const { return &value(); }

private:
    std::variant<T, E> storage_;
};

} // namespace metagadget
