#include "scope/message.hpp"

#include <bit>
#include <cstring>

#include "scope/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "message wire format is little-endian; byte swapping is not implemented");

namespace scope {

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    const std::size_t n = out.size();
    out.resize(n + sizeof(T));
    std::memcpy(out.data() + n, &v, sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) throw IoError("message: truncated stream");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_message(const PackedMessage& msg) {
    std::vector<std::uint8_t> out;
    out.reserve(msg.wire_bytes());
    out.push_back('S');
    out.push_back('C');
    out.push_back('M');
    out.push_back('G');
    put<std::uint16_t>(out, kMessageFormatVersion);
    put<std::uint32_t>(out, msg.agent_id);
    put<std::uint32_t>(out, msg.frame_idx);
    put<std::uint8_t>(out, msg.scale);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(msg.entries.size()));
    for (const MessageEntry& e : msg.entries) {
        put<std::uint16_t>(out, e.h);
        put<std::uint16_t>(out, e.w);
        const std::size_t n = out.size();
        out.resize(n + e.values.size() * 4);
        std::memcpy(out.data() + n, e.values.data(), e.values.size() * 4);
    }
    return out;
}

PackedMessage parse_message(const std::vector<std::uint8_t>& bytes, int channels) {
    if (bytes.size() < kMessageHeaderBytes) throw IoError("message: shorter than header");
    if (bytes[0] != 'S' || bytes[1] != 'C' || bytes[2] != 'M' || bytes[3] != 'G')
        throw IoError("message: bad magic");
    std::size_t off = 4;
    const auto version = take<std::uint16_t>(bytes, off);
    if (version != kMessageFormatVersion)
        throw IoError("message: unsupported version " + std::to_string(version));

    PackedMessage msg;
    msg.channels = channels;
    msg.agent_id = take<std::uint32_t>(bytes, off);
    msg.frame_idx = take<std::uint32_t>(bytes, off);
    msg.scale = take<std::uint8_t>(bytes, off);
    const auto count = take<std::uint32_t>(bytes, off);
    msg.entries.resize(count);
    for (auto& e : msg.entries) {
        e.h = take<std::uint16_t>(bytes, off);
        e.w = take<std::uint16_t>(bytes, off);
        e.values.resize(channels);
        if (off + e.values.size() * 4 > bytes.size()) throw IoError("message: truncated entry");
        std::memcpy(e.values.data(), bytes.data() + off, e.values.size() * 4);
        off += e.values.size() * 4;
    }
    if (off != bytes.size()) throw IoError("message: trailing bytes");
    return msg;
}

FeatureGrid reconstruct_grid(const PackedMessage& msg, int channels, int height, int width) {
    FeatureGrid out(channels, height, width);
    for (const MessageEntry& e : msg.entries) {
        if (e.h >= height || e.w >= width) throw IoError("message: entry out of bounds");
        for (int c = 0; c < channels; ++c)
            out.at(c, e.h, e.w) = static_cast<double>(e.values[c]);
    }
    return out;
}

}  // namespace scope
