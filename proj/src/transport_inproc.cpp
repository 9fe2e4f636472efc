#include "fdrsvm/transport.hpp"

#include <condition_variable>
#include <deque>
#include <mutex>

namespace fdrsvm::transport {

namespace {

using Frame = std::vector<std::uint8_t>;

class FrameQueue {
 public:
  void push(Frame frame) {
    {
      std::lock_guard lock(mu_);
      if (closed_) throw ChannelClosed("in-process channel closed");
      frames_.push_back(std::move(frame));
    }
    cv_.notify_one();
  }

  // Drains queued frames before reporting closure.
  Frame pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return closed_ || !frames_.empty(); });
    if (frames_.empty()) throw ChannelClosed("in-process channel closed by peer");
    Frame f = std::move(frames_.front());
    frames_.pop_front();
    return f;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Frame> frames_;
  bool closed_ = false;
};

class InProcessChannel final : public Channel {
 public:
  InProcessChannel(std::shared_ptr<FrameQueue> out, std::shared_ptr<FrameQueue> in, std::size_t cap)
      : out_(std::move(out)), in_(std::move(in)), cap_(cap) {}
  ~InProcessChannel() override { close(); }

  void send(const wire::Message& msg) override { out_->push(wire::encode_frame(msg, cap_)); }

  wire::Message receive() override {
    const Frame frame = in_->pop();
    const auto len = wire::decode_length(std::span<const std::uint8_t, 4>(frame.data(), 4), cap_);
    if (frame.size() != 4 + static_cast<std::size_t>(len)) throw wire::ProtocolError("frame length mismatch");
    return wire::decode_payload(std::span(frame).subspan(4));
  }

  void close() override {
    out_->close();
    in_->close();
  }

 private:
  std::shared_ptr<FrameQueue> out_;
  std::shared_ptr<FrameQueue> in_;
  std::size_t cap_;
};

}  // namespace

ChannelPair make_inprocess_pair(std::size_t frame_cap) {
  auto to_client = std::make_shared<FrameQueue>();
  auto to_server = std::make_shared<FrameQueue>();
  return {std::make_unique<InProcessChannel>(to_client, to_server, frame_cap),
          std::make_unique<InProcessChannel>(to_server, to_client, frame_cap)};
}

}  // namespace fdrsvm::transport
