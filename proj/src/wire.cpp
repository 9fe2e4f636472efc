#include "fdrsvm/wire.hpp"

#include <bit>
#include <cmath>
#include <string>

namespace fdrsvm::wire {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  void u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void vec(const Vector& v) {
    if (static_cast<std::uint64_t>(v.size()) > UINT32_MAX) throw ProtocolError("vector too long to encode");
    u32(static_cast<std::uint32_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v[i]);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }
  double f64() {
    const double v = std::bit_cast<double>(u64());
    if (!std::isfinite(v)) throw ProtocolError("non-finite value in message");
    return v;
  }
  Vector vec() {
    const std::uint32_t len = u32();
    need(static_cast<std::size_t>(len) * 8);
    Vector v(static_cast<Eigen::Index>(len));
    for (std::uint32_t i = 0; i < len; ++i) v[i] = f64();
    return v;
  }
  void finish() const {
    if (pos_ != in_.size()) throw ProtocolError("trailing bytes after message");
  }

 private:
  void need(std::size_t bytes) const {
    if (in_.size() - pos_ < bytes) throw ProtocolError("truncated message");
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void check_finite(const Vector& v) {
  if (!v.allFinite()) throw ProtocolError("refusing to encode a non-finite vector");
}

}  // namespace

const char* message_name(const Message& msg) {
  static constexpr const char* names[] = {"RoundStart", "SmResult", "AdmmResult", "Broadcast", "Shutdown"};
  return names[msg.index()];
}

std::vector<std::uint8_t> encode_payload(const Message& msg) {
  Writer w;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, RoundStart>) {
          check_finite(m.w);
          w.u8(static_cast<std::uint8_t>(Tag::RoundStart));
          w.u64(m.t);
          w.vec(m.w);
        } else if constexpr (std::is_same_v<T, SmResult>) {
          check_finite(m.v);
          w.u8(static_cast<std::uint8_t>(Tag::SmResult));
          w.u32(m.g);
          w.vec(m.v);
        } else if constexpr (std::is_same_v<T, AdmmResult>) {
          check_finite(m.w);
          w.u8(static_cast<std::uint8_t>(Tag::AdmmResult));
          w.u32(m.g);
          w.vec(m.w);
        } else if constexpr (std::is_same_v<T, Broadcast>) {
          check_finite(m.w);
          w.u8(static_cast<std::uint8_t>(Tag::Broadcast));
          w.u64(m.t);
          w.vec(m.w);
        } else {
          w.u8(static_cast<std::uint8_t>(Tag::Shutdown));
        }
      },
      msg);
  return w.take();
}

std::vector<std::uint8_t> encode_frame(const Message& msg, std::size_t cap) {
  const auto payload = encode_payload(msg);
  if (payload.size() > cap || payload.size() > UINT32_MAX) {
    throw ProtocolError("frame of " + std::to_string(payload.size()) + " bytes exceeds cap of " + std::to_string(cap));
  }
  std::vector<std::uint8_t> frame;
  frame.reserve(4 + payload.size());
  const auto len = static_cast<std::uint32_t>(payload.size());
  for (int shift = 24; shift >= 0; shift -= 8) frame.push_back(static_cast<std::uint8_t>(len >> shift));
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

Message decode_payload(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  const auto tag = static_cast<Tag>(r.u8());
  Message out;
  switch (tag) {
    case Tag::RoundStart: {
      RoundStart m;
      m.t = r.u64();
      m.w = r.vec();
      out = std::move(m);
      break;
    }
    case Tag::SmResult: {
      SmResult m;
      m.g = r.u32();
      m.v = r.vec();
      out = std::move(m);
      break;
    }
    case Tag::AdmmResult: {
      AdmmResult m;
      m.g = r.u32();
      m.w = r.vec();
      out = std::move(m);
      break;
    }
    case Tag::Broadcast: {
      Broadcast m;
      m.t = r.u64();
      m.w = r.vec();
      out = std::move(m);
      break;
    }
    case Tag::Shutdown:
      out = Shutdown{};
      break;
    default:
      throw ProtocolError("unknown message tag " + std::to_string(static_cast<int>(tag)));
  }
  r.finish();
  return out;
}

std::uint32_t decode_length(std::span<const std::uint8_t, 4> prefix, std::size_t cap) {
  std::uint32_t len = 0;
  for (std::uint8_t b : prefix) len = (len << 8) | b;
  if (len > cap) throw ProtocolError("incoming frame of " + std::to_string(len) + " bytes exceeds cap of " + std::to_string(cap));
  if (len == 0) throw ProtocolError("empty frame");
  return len;
}

}  // namespace fdrsvm::wire
