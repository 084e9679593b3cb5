#include "ephemyarn/protocol.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace ephemyarn {

namespace {

constexpr size_t kMaxLine = 64u << 20;

void set_io_timeout(int fd, std::int64_t ms) {
  timeval tv{};
  tv.tv_sec = ms / 1000;
  tv.tv_usec = (ms % 1000) * 1000;
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

int connect_with_timeout(const std::string& host, int port, std::int64_t timeout_ms) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0) {
    throw Error(ErrorCode::ClusterUnavailable, "cannot resolve " + host);
  }
  int fd = -1;
  std::string last_err = "no addresses";
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd pfd{fd, POLLOUT, 0};
      rc = ::poll(&pfd, 1, static_cast<int>(timeout_ms));
      if (rc == 1) {
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        if (err != 0) errno = err;
      } else {
        rc = -1;
        errno = ETIMEDOUT;
      }
    }
    if (rc == 0) {
      ::fcntl(fd, F_SETFL, flags);
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      break;
    }
    last_err = std::strerror(errno);
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) {
    throw Error(ErrorCode::ClusterUnavailable,
                "connect " + host + ":" + service + ": " + last_err);
  }
  return fd;
}

}  // namespace

json error_reply(const std::string& type, ErrorCode code, const std::string& message) {
  return json{{"type", type}, {"ok", false}, {"error", error_code_name(code)}, {"message", message}};
}

json ok_reply(const std::string& type) { return json{{"type", type}, {"ok", true}}; }

void throw_if_error(const json& reply) {
  if (reply.value("ok", true)) return;
  ErrorCode code = error_code_from_name(reply.value("error", "Internal"));
  throw Error(code, reply.value("message", "remote error"));
}

MessageConnection::~MessageConnection() { close(); }

void MessageConnection::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

bool MessageConnection::read_message(json& out) {
  for (;;) {
    size_t nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (trim_empty(line)) continue;
      out = json::parse(line, nullptr, false);
      if (out.is_discarded() || !out.is_object()) {
        throw Error(ErrorCode::Protocol, "malformed message line");
      }
      return true;
    }
    if (buffer_.size() > kMaxLine) throw Error(ErrorCode::Protocol, "message line too long");
    char chunk[65536];
    ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n == 0) return false;
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::ClusterUnavailable, std::string("recv: ") + std::strerror(errno));
    }
    buffer_.append(chunk, static_cast<size_t>(n));
  }
}

bool MessageConnection::trim_empty(const std::string& line) {
  for (char c : line) {
    if (c != ' ' && c != '\t' && c != '\r') return false;
  }
  return true;
}

void MessageConnection::write_message(const json& msg) {
  std::string line = msg.dump();
  line.push_back('\n');
  size_t off = 0;
  while (off < line.size()) {
    ssize_t n = ::send(fd_, line.data() + off, line.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::ClusterUnavailable, std::string("send: ") + std::strerror(errno));
    }
    off += static_cast<size_t>(n);
  }
}

MessageClient::MessageClient(std::string host, int port, std::int64_t io_timeout_ms)
    : host_(std::move(host)), port_(port), io_timeout_ms_(io_timeout_ms) {}

MessageClient::~MessageClient() = default;

void MessageClient::ensure_connected() {
  if (conn_) return;
  int fd = connect_with_timeout(host_, port_, io_timeout_ms_);
  set_io_timeout(fd, io_timeout_ms_);
  conn_ = std::make_unique<MessageConnection>(fd);
}

void MessageClient::drop() { conn_.reset(); }

json MessageClient::request(const json& msg) {
  ensure_connected();
  try {
    conn_->write_message(msg);
    json reply;
    if (!conn_->read_message(reply)) {
      drop();
      throw Error(ErrorCode::ClusterUnavailable, "peer closed connection");
    }
    return reply;
  } catch (const Error&) {
    drop();
    throw;
  }
}

MessageServer::MessageServer(int port, Handler handler)
    : requested_port_(port), handler_(std::move(handler)) {}

MessageServer::~MessageServer() { stop(); }

void MessageServer::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::Internal, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(static_cast<uint16_t>(requested_port_));
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw Error(ErrorCode::Internal,
                "bind port " + std::to_string(requested_port_) + ": " + std::strerror(errno));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  if (::listen(listen_fd_, 64) != 0) {
    throw Error(ErrorCode::Internal, std::string("listen: ") + std::strerror(errno));
  }
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void MessageServer::stop() {
  bool expected = false;
  if (!stopping_.compare_exchange_strong(expected, true)) {
    if (accept_thread_.joinable()) accept_thread_.join();
    return;
  }
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard<std::mutex> lock(mu_);
    threads.swap(conn_threads_);
  }
  for (auto& t : threads) {
    if (t.joinable()) t.join();
  }
}

void MessageServer::accept_loop() {
  for (;;) {
    int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (stopping_) return;
      if (errno == EINTR) continue;
      return;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard<std::mutex> lock(mu_);
    if (stopping_) {
      ::close(fd);
      return;
    }
    conn_fds_.insert(fd);
    conn_threads_.emplace_back([this, fd] { serve(fd); });
  }
}

void MessageServer::serve(int fd) {
  MessageConnection conn(fd);
  try {
    json msg;
    while (conn.read_message(msg)) {
      json reply;
      try {
        reply = handler_(msg);
      } catch (const Error& e) {
        reply = error_reply(msg.value("type", "?") + "Reply", e.code(), e.what());
      } catch (const std::exception& e) {
        reply = error_reply(msg.value("type", "?") + "Reply", ErrorCode::Internal, e.what());
      }
      conn.write_message(reply);
    }
  } catch (const std::exception&) {
    // connection-level failure: drop the connection, peers reconnect
  }
  std::lock_guard<std::mutex> lock(mu_);
  conn_fds_.erase(fd);
}

}  // namespace ephemyarn
