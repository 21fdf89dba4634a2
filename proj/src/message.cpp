#include "r3split/message.hpp"

#include <bit>
#include <cmath>
#include <cstring>

namespace r3split::splitnn {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes, bytes + sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T get_le(std::span<const std::uint8_t> buf, std::size_t offset) {
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, buf.data() + offset, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

constexpr std::size_t kHeaderAfterLength = 1 + 1 + 8 + 4;

} // namespace

std::vector<std::uint8_t> encode_message(const TunnelMessage& msg) {
    for (float v : msg.payload) {
        if (!std::isfinite(v))
            throw CodecError(CodecError::Code::non_finite,
                             "encode: payload contains a non-finite value");
    }
    const std::uint32_t length =
        static_cast<std::uint32_t>(kHeaderAfterLength + 4 * msg.payload.size());
    std::vector<std::uint8_t> out;
    out.reserve(4 + length);
    put_le(out, length);
    put_le(out, kWireVersion);
    put_le(out, static_cast<std::uint8_t>(msg.direction));
    put_le(out, msg.iteration);
    put_le(out, static_cast<std::uint32_t>(msg.payload.size()));
    for (float v : msg.payload) put_le(out, v);
    return out;
}

TunnelMessage decode_message(std::span<const std::uint8_t> frame) {
    if (frame.size() < 4)
        throw CodecError(CodecError::Code::truncated, "decode: frame shorter than length field");
    const auto length = get_le<std::uint32_t>(frame, 0);
    if (frame.size() < 4 + std::size_t(length))
        throw CodecError(CodecError::Code::truncated,
                         "decode: frame body truncated (need " + std::to_string(length) +
                             " bytes, have " + std::to_string(frame.size() - 4) + ")");
    if (frame.size() > 4 + std::size_t(length))
        throw CodecError(CodecError::Code::length_mismatch,
                         "decode: trailing bytes after declared frame length");
    if (length < kHeaderAfterLength)
        throw CodecError(CodecError::Code::length_mismatch,
                         "decode: declared length shorter than header");

    const auto version = get_le<std::uint8_t>(frame, 4);
    if (version != kWireVersion)
        throw CodecError(CodecError::Code::bad_version,
                         "decode: wire version " + std::to_string(version) + " unsupported");
    const auto dir = get_le<std::uint8_t>(frame, 5);
    if (dir > 1)
        throw CodecError(CodecError::Code::bad_direction,
                         "decode: direction byte " + std::to_string(dir) + " invalid");

    TunnelMessage msg;
    msg.direction = static_cast<Direction>(dir);
    msg.iteration = get_le<std::uint64_t>(frame, 6);
    const auto count = get_le<std::uint32_t>(frame, 14);
    if (kHeaderAfterLength + 4 * std::size_t(count) != length)
        throw CodecError(CodecError::Code::length_mismatch,
                         "decode: element count " + std::to_string(count) +
                             " inconsistent with frame length " + std::to_string(length));
    msg.payload.resize(count);
    for (std::uint32_t i = 0; i < count; ++i)
        msg.payload[i] = get_le<float>(frame, 18 + 4 * std::size_t(i));
    return msg;
}

TunnelMessage quantized_message(Direction dir, std::uint64_t iteration,
                                std::span<const double> values) {
    TunnelMessage msg;
    msg.direction = dir;
    msg.iteration = iteration;
    msg.payload.reserve(values.size());
    for (double v : values) msg.payload.push_back(static_cast<float>(v));
    return msg;
}

std::vector<double> payload_as_doubles(const TunnelMessage& msg) {
    return {msg.payload.begin(), msg.payload.end()};
}

} // namespace r3split::splitnn
