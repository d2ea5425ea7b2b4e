#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "ssvf/error.hpp"

namespace ssvf {

using AgentId = std::uint16_t;
inline constexpr AgentId kAllAgents = 0xFFFF;

enum class MessageKind : std::uint8_t {
    share = 0,      // p_i(alpha_j), sender i to receiver j
    broadcast = 1,  // v_i, sender i to everyone
    barrier = 2,    // round-barrier marker, payload is the phase
    status = 3,     // convergence vote, payload 1 when the sender has stopped
};

inline const char* to_string(MessageKind k) {
    switch (k) {
        case MessageKind::share: return "share";
        case MessageKind::broadcast: return "broadcast";
        case MessageKind::barrier: return "barrier";
        case MessageKind::status: return "status";
    }
    return "unknown";
}

struct RoundMessage {
    MessageKind kind = MessageKind::share;
    AgentId sender = 0;
    AgentId receiver = 0;
    std::uint32_t round = 0;
    std::uint16_t slot = 0;
    std::uint64_t payload = 0;

    friend bool operator==(const RoundMessage&, const RoundMessage&) = default;
};

// Envelope layout, all integers little-endian:
//   kind u8 | sender u16 | receiver u16 | round u32 | slot u16 | payload u64
inline constexpr std::size_t kEnvelopeSize = 19;
inline constexpr std::size_t kFrameSize = 4 + kEnvelopeSize;

using Envelope = std::array<std::uint8_t, kEnvelopeSize>;

namespace detail {

template <class T>
void put_le(std::uint8_t* out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

template <class T>
T get_le(const std::uint8_t* in) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T{in[i]} << (8 * i));
    return v;
}

}  // namespace detail

inline Envelope encode_envelope(const RoundMessage& m) {
    Envelope e{};
    e[0] = static_cast<std::uint8_t>(m.kind);
    detail::put_le<std::uint16_t>(&e[1], m.sender);
    detail::put_le<std::uint16_t>(&e[3], m.receiver);
    detail::put_le<std::uint32_t>(&e[5], m.round);
    detail::put_le<std::uint16_t>(&e[9], m.slot);
    detail::put_le<std::uint64_t>(&e[11], m.payload);
    return e;
}

inline RoundMessage decode_envelope(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != kEnvelopeSize) {
        throw TransportError("envelope must be " + std::to_string(kEnvelopeSize) + " bytes, got " +
                             std::to_string(bytes.size()));
    }
    if (bytes[0] > static_cast<std::uint8_t>(MessageKind::status)) {
        throw TransportError("unknown message kind " + std::to_string(bytes[0]));
    }
    RoundMessage m;
    m.kind = static_cast<MessageKind>(bytes[0]);
    m.sender = detail::get_le<std::uint16_t>(&bytes[1]);
    m.receiver = detail::get_le<std::uint16_t>(&bytes[3]);
    m.round = detail::get_le<std::uint32_t>(&bytes[5]);
    m.slot = detail::get_le<std::uint16_t>(&bytes[9]);
    m.payload = detail::get_le<std::uint64_t>(&bytes[11]);
    return m;
}

/// 4-byte little-endian length prefix followed by the envelope.
inline std::array<std::uint8_t, kFrameSize> encode_frame(const RoundMessage& m) {
    std::array<std::uint8_t, kFrameSize> f{};
    detail::put_le<std::uint32_t>(f.data(), static_cast<std::uint32_t>(kEnvelopeSize));
    const Envelope e = encode_envelope(m);
    std::copy(e.begin(), e.end(), f.begin() + 4);
    return f;
}

}  // namespace ssvf
