#include "fdrsvm/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <thread>

namespace fdrsvm::transport {

namespace {

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

class TcpChannel final : public Channel {
 public:
  TcpChannel(int fd, std::size_t cap) : fd_(fd), cap_(cap) {
    const int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  ~TcpChannel() override {
    close();
    if (fd_ >= 0) ::close(fd_);
  }

  void send(const wire::Message& msg) override {
    const auto frame = wire::encode_frame(msg, cap_);
    std::size_t sent = 0;
    while (sent < frame.size()) {
      const ssize_t n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw ChannelClosed(errno_text("send failed"));
      sent += static_cast<std::size_t>(n);
    }
  }

  wire::Message receive() override {
    std::uint8_t prefix[4];
    read_exact(prefix, 4);
    const auto len = wire::decode_length(std::span<const std::uint8_t, 4>(prefix, 4), cap_);
    std::vector<std::uint8_t> payload(len);
    read_exact(payload.data(), len);
    return wire::decode_payload(payload);
  }

  void close() override {
    std::lock_guard lock(mu_);
    if (!shut_) {
      ::shutdown(fd_, SHUT_RDWR);
      shut_ = true;
    }
  }

 private:
  void read_exact(std::uint8_t* out, std::size_t len) {
    std::size_t got = 0;
    while (got < len) {
      const ssize_t n = ::recv(fd_, out + got, len - got, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n < 0) throw ChannelClosed(errno_text("recv failed"));
      if (n == 0) throw ChannelClosed("connection closed by peer");
      got += static_cast<std::size_t>(n);
    }
  }

  int fd_;
  std::size_t cap_;
  std::mutex mu_;
  bool shut_ = false;
};

addrinfo* resolve(const std::string& host, std::uint16_t port, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), std::to_string(port).c_str(), &hints, &res);
  if (rc != 0) throw std::runtime_error("cannot resolve " + host + ": " + ::gai_strerror(rc));
  return res;
}

}  // namespace

TcpListener::TcpListener(const std::string& host, std::uint16_t port, std::size_t frame_cap) : frame_cap_(frame_cap) {
  addrinfo* res = resolve(host, port, true);
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0) {
    ::freeaddrinfo(res);
    throw std::runtime_error(errno_text("socket"));
  }
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd_, 64) != 0) {
    const std::string msg = errno_text("bind/listen");
    ::freeaddrinfo(res);
    ::close(fd_);
    throw std::runtime_error(msg + " on " + host + ":" + std::to_string(port));
  }
  ::freeaddrinfo(res);
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> TcpListener::accept(int timeout_ms) {
  pollfd pfd{fd_, POLLIN, 0};
  while (true) {
    const int rc = ::poll(&pfd, 1, timeout_ms);
    if (rc < 0 && errno == EINTR) continue;
    if (rc < 0) throw std::runtime_error(errno_text("poll"));
    if (rc == 0) throw std::runtime_error("timed out waiting for a client connection");
    break;
  }
  const int client = ::accept(fd_, nullptr, nullptr);
  if (client < 0) throw std::runtime_error(errno_text("accept"));
  return std::make_unique<TcpChannel>(client, frame_cap_);
}

std::unique_ptr<Channel> tcp_connect(const std::string& host, std::uint16_t port, int timeout_ms, std::size_t frame_cap) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  std::string last_error;
  while (true) {
    addrinfo* res = resolve(host, port, false);
    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0) {
      ::freeaddrinfo(res);
      throw std::runtime_error(errno_text("socket"));
    }
    const int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc == 0) return std::make_unique<TcpChannel>(fd, frame_cap);
    last_error = errno_text("connect");
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) {
      throw std::runtime_error(last_error + " (" + host + ":" + std::to_string(port) + ")");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

}  // namespace fdrsvm::transport
