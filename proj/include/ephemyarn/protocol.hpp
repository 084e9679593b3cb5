#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ephemyarn/errors.hpp"

namespace ephemyarn {

using json = nlohmann::json;

// Wire format: one JSON object per line over TCP, each carrying a "type"
// field. Every request gets exactly one reply line. Field names are the
// contract (see docs/protocol.md); receivers ignore unknown fields.

/// Builds an error reply: {"type": t, "ok": false, "error": code, "message": m}.
json error_reply(const std::string& type, ErrorCode code, const std::string& message);
json ok_reply(const std::string& type);

/// Throws Error if `reply` has ok=false, reconstructing the error code.
void throw_if_error(const json& reply);

/// Blocking line-oriented connection. Not thread-safe; callers serialize.
class MessageConnection {
 public:
  explicit MessageConnection(int fd) : fd_(fd) {}
  MessageConnection(const MessageConnection&) = delete;
  MessageConnection& operator=(const MessageConnection&) = delete;
  ~MessageConnection();

  /// Reads one newline-terminated JSON message. Returns false on EOF.
  bool read_message(json& out);
  void write_message(const json& msg);
  void close();
  int fd() const { return fd_; }

 private:
  static bool trim_empty(const std::string& line);

  int fd_ = -1;
  std::string buffer_;
};

/// Client side: connects on demand, sends a request, reads the reply.
/// Reconnects on the next call after an I/O failure.
class MessageClient {
 public:
  MessageClient(std::string host, int port, std::int64_t io_timeout_ms = 10000);
  ~MessageClient();

  /// One round trip. Throws Error(ClusterUnavailable) when the peer cannot
  /// be reached, Error(Protocol) on framing violations. Error replies from
  /// the peer are returned as-is; use throw_if_error to raise them.
  json request(const json& msg);

  const std::string& host() const { return host_; }
  int port() const { return port_; }

 private:
  void ensure_connected();
  void drop();

  std::string host_;
  int port_;
  std::int64_t io_timeout_ms_;
  std::unique_ptr<MessageConnection> conn_;
};

/// Accepts connections and answers each incoming message through `handler`.
/// One thread per connection; the handler is called concurrently and must
/// do its own locking.
class MessageServer {
 public:
  using Handler = std::function<json(const json&)>;

  MessageServer(int port, Handler handler);
  ~MessageServer();

  void start();
  void stop();
  int port() const { return port_; }  // actual port after bind (for port 0)

 private:
  void accept_loop();
  void serve(int fd);

  int requested_port_;
  int port_ = 0;
  int listen_fd_ = -1;
  Handler handler_;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::set<int> conn_fds_;
  std::vector<std::thread> conn_threads_;
};

}  // namespace ephemyarn
