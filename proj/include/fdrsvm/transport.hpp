// Point-to-point message channels between the server and one client. Both
// transports move encoded frames, so a model crosses the same codec whether
// it travels through a queue or a socket.

#pragma once

#include "fdrsvm/wire.hpp"

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

namespace fdrsvm::transport {

class ChannelClosed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Channel {
 public:
  virtual ~Channel() = default;
  /// Throws ChannelClosed when the peer is gone.
  virtual void send(const wire::Message& msg) = 0;
  /// Blocks for the next message; throws ChannelClosed on end of stream and
  /// wire::ProtocolError on a malformed frame.
  virtual wire::Message receive() = 0;
  /// Idempotent; wakes a peer blocked in receive().
  virtual void close() = 0;
};

struct ChannelPair {
  std::unique_ptr<Channel> server_end;
  std::unique_ptr<Channel> client_end;
};

/// Two connected in-memory endpoints backed by blocking queues.
ChannelPair make_inprocess_pair(std::size_t frame_cap = wire::kDefaultFrameCap);

/// Listening TCP socket. Port 0 picks an ephemeral port.
class TcpListener {
 public:
  TcpListener(const std::string& host, std::uint16_t port, std::size_t frame_cap = wire::kDefaultFrameCap);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  /// Blocks until a client connects; timeout_ms < 0 waits forever.
  std::unique_ptr<Channel> accept(int timeout_ms = -1);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::size_t frame_cap_;
};

/// Connects to a listening server, retrying until timeout_ms elapses.
std::unique_ptr<Channel> tcp_connect(const std::string& host, std::uint16_t port, int timeout_ms = 10000,
                                     std::size_t frame_cap = wire::kDefaultFrameCap);

}  // namespace fdrsvm::transport
