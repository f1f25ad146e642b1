#pragma once

#include <cstdint>
#include <vector>

#include "scope/grid.hpp"

namespace scope {

// Feature share from one agent: the selected grid columns only.
// Wire layout (little-endian, normative):
//   magic "SCMG", version u16, agent id u32, frame index u32, scale u8,
//   count u32, then per entry: h u16, w u16, C x f32.
// Compute is 64-bit but transmission is 32-bit; the byte counts below are
// what the communication-volume metric reports.
inline constexpr std::uint16_t kMessageFormatVersion = 1;
inline constexpr std::size_t kMessageHeaderBytes = 19;

struct MessageEntry {
    std::uint16_t h = 0;
    std::uint16_t w = 0;
    std::vector<float> values;
};

struct PackedMessage {
    std::uint32_t agent_id = 0;
    std::uint32_t frame_idx = 0;
    std::uint8_t scale = 0;
    int channels = 0;
    std::vector<MessageEntry> entries;

    std::size_t payload_bytes() const {
        return entries.size() * static_cast<std::size_t>(channels) * 4;
    }
    std::size_t wire_bytes() const {
        return kMessageHeaderBytes + entries.size() * (4 + static_cast<std::size_t>(channels) * 4);
    }
};

std::vector<std::uint8_t> serialize_message(const PackedMessage& msg);
PackedMessage parse_message(const std::vector<std::uint8_t>& bytes, int channels);

// Dense grid with the transmitted columns filled in (after the f32
// round-trip) and zeros elsewhere.
FeatureGrid reconstruct_grid(const PackedMessage& msg, int channels, int height, int width);

}  // namespace scope
