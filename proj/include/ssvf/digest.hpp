#pragma once

#include <bit>
#include <cstdint>
#include <span>

namespace ssvf {

/// 64-bit FNV-1a, used to fingerprint transcripts and results.
class Fnv1a {
public:
    void update(std::span<const std::uint8_t> bytes) {
        for (std::uint8_t b : bytes) {
            state_ ^= b;
            state_ *= kPrime;
        }
    }

    void update_u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            state_ ^= static_cast<std::uint8_t>(v >> (8 * i));
            state_ *= kPrime;
        }
    }

    void update_double(double v) { update_u64(std::bit_cast<std::uint64_t>(v)); }

    std::uint64_t digest() const noexcept { return state_; }

private:
    static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
    static constexpr std::uint64_t kPrime = 0x100000001b3ULL;
    std::uint64_t state_ = kOffset;
};

}  // namespace ssvf
