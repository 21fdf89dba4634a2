#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace r3split::splitnn {

enum class Direction : std::uint8_t { forward = 0, backward = 1 };

constexpr std::uint8_t kWireVersion = 1;

// One cut-layer vector crossing the party boundary. Payloads are carried at
// 32-bit precision on the wire; quantization happens when the message is
// built, identically for every transport.
struct TunnelMessage {
    Direction direction = Direction::forward;
    std::uint64_t iteration = 0;
    std::vector<float> payload;
};

class CodecError : public std::runtime_error {
public:
    enum class Code { truncated, bad_version, length_mismatch, bad_direction, non_finite };

    CodecError(Code code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

// Frame layout, all little-endian:
//   u32 length of the remaining frame (14 + 4*count)
//   u8  version
//   u8  direction
//   u64 iteration id
//   u32 element count
//   f32 x count payload
// An empty payload encodes to exactly 18 bytes.
std::vector<std::uint8_t> encode_message(const TunnelMessage& msg);
TunnelMessage decode_message(std::span<const std::uint8_t> frame);

TunnelMessage quantized_message(Direction dir, std::uint64_t iteration,
                                std::span<const double> values);
std::vector<double> payload_as_doubles(const TunnelMessage& msg);

} // namespace r3split::splitnn
