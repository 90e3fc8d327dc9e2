#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace ergmark {

// 64-bit FNV-1a. Used for corruption detection only.
class Fnv1a64 {
public:
    static constexpr std::uint64_t offset_basis = 0xcbf29ce484222325ULL;
    static constexpr std::uint64_t prime = 0x100000001b3ULL;

    void update(std::span<const std::byte> bytes) noexcept;
    void update(std::string_view text) noexcept;
    std::uint64_t digest() const noexcept { return state_; }

private:
    std::uint64_t state_ = offset_basis;
};

std::uint64_t fnv1a64(std::span<const std::byte> bytes) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

template <typename T>
std::uint64_t fnv1a64_of(std::span<const T> values) noexcept {
    return fnv1a64(std::as_bytes(values));
}

std::string to_hex(std::uint64_t value);
// Throws Error(validation) on anything but exactly 16 hex digits.
std::uint64_t parse_hex64(std::string_view text);

}  // namespace ergmark
