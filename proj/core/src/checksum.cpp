#include "ergmark/checksum.hpp"

#include "ergmark/error.hpp"

#include <charconv>

namespace ergmark {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return "usage";
        case ErrorKind::validation: return "validation";
        case ErrorKind::io: return "io";
        case ErrorKind::device: return "device";
        case ErrorKind::provider: return "provider";
        case ErrorKind::numerical: return "numerical";
        case ErrorKind::dispatch: return "dispatch";
    }
    return "unknown";
}

void Fnv1a64::update(std::span<const std::byte> bytes) noexcept {
    for (std::byte b : bytes) {
        state_ ^= static_cast<std::uint64_t>(b);
        state_ *= prime;
    }
}

void Fnv1a64::update(std::string_view text) noexcept {
    update(std::as_bytes(std::span(text.data(), text.size())));
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes) noexcept {
    Fnv1a64 h;
    h.update(bytes);
    return h.digest();
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
    Fnv1a64 h;
    h.update(text);
    return h.digest();
}

std::string to_hex(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xF];
        value >>= 4;
    }
    return out;
}

std::uint64_t parse_hex64(std::string_view text) {
    std::uint64_t value = 0;
    if (text.size() != 16) {
        fail(ErrorKind::validation, "expected 16 hex digits, got '" + std::string(text) + "'");
    }
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, 16);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        fail(ErrorKind::validation, "invalid hex checksum '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace ergmark
