// Messages exchanged between server and clients, and their binary framing:
// a 4-byte big-endian payload length, then a 1-byte tag and the fields in
// declaration order. Integers are big-endian, doubles are IEEE-754 binary64
// big-endian, vectors are a u32 length followed by their entries.

#pragma once

#include "fdrsvm/core.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

namespace fdrsvm::wire {

struct RoundStart {
  std::uint64_t t = 0;
  Vector w;
};

struct SmResult {
  std::uint32_t g = 0;
  Vector v;
};

struct AdmmResult {
  std::uint32_t g = 0;
  Vector w;
};

struct Broadcast {
  std::uint64_t t = 0;
  Vector w;
};

struct Shutdown {};

using Message = std::variant<RoundStart, SmResult, AdmmResult, Broadcast, Shutdown>;

enum class Tag : std::uint8_t { RoundStart = 1, SmResult = 2, AdmmResult = 3, Broadcast = 4, Shutdown = 5 };

inline constexpr std::size_t kDefaultFrameCap = 16u << 20;

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const char* message_name(const Message& msg);

/// Tag + fields, without the length prefix.
std::vector<std::uint8_t> encode_payload(const Message& msg);

/// Length prefix + payload. Throws ProtocolError when the payload exceeds cap.
std::vector<std::uint8_t> encode_frame(const Message& msg, std::size_t cap = kDefaultFrameCap);

/// Parses a payload; rejects unknown tags, truncation, trailing bytes and
/// non-finite numbers with ProtocolError.
Message decode_payload(std::span<const std::uint8_t> payload);

/// Reads the big-endian length prefix; throws ProtocolError above cap.
std::uint32_t decode_length(std::span<const std::uint8_t, 4> prefix, std::size_t cap = kDefaultFrameCap);

}  // namespace fdrsvm::wire
