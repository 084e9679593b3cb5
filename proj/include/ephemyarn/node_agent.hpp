#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include <json.hpp>

#include "ephemyarn/config.hpp"
#include "ephemyarn/negotiator.hpp"
#include "ephemyarn/process.hpp"
#include "ephemyarn/protocol.hpp"

namespace ephemyarn {

/// One per worker node. Registers with the resource manager, launches and
/// supervises containers, enforces their memory limits, and ships their
/// logs to the shared staging area when they finish.
class NodeAgent {
 public:
  /// `work_root` holds per-container scratch directories on the local disk;
  /// `staging` is the shared staging area (log collection goes under
  /// staging/logs/<app>/<container>/).
  NodeAgent(Config cfg, std::string host, int port, std::string rm_host, int rm_port,
            std::string work_root, std::string staging);
  ~NodeAgent();

  /// Blocks until the resource manager tells the agent to stop, the manager
  /// disappears for longer than the node timeout, or stop() is called.
  /// Returns 0 on a clean drain.
  int run();

  void stop();

  int port() const;

 private:
  struct LocalContainer {
    std::string id;
    std::string app_id;
    std::string tag;
    ResourceProfile resource;
    pid_t pid = -1;
    std::string workdir;
    ContainerState state = ContainerState::launching;
    int exit_code = 0;
    std::string diagnostics;
    std::int64_t rss_bytes = 0;
    std::int64_t term_sent_ms = 0;  // steady ms of the SIGTERM, 0 if none yet
    std::string kill_reason;
    bool reported = false;  // terminal state delivered to the RM
    bool logs_collected = false;
  };

  void register_with_rm();
  void monitor_tick(std::int64_t steady_now);
  void launch(const json& directive);
  void request_kill(LocalContainer& c, const std::string& reason, std::int64_t steady_now);
  void finalize(LocalContainer& c, ContainerState state, int exit_code,
                const std::string& diagnostics);
  void collect_logs(LocalContainer& c);
  json status_payload(bool include_running);
  bool process_reply(const json& reply);
  bool drain(std::int64_t steady_now);
  void log(const std::string& line);

  Config cfg_;
  std::string host_;
  std::string rm_host_;
  int rm_port_;
  std::string work_root_;
  std::string staging_;

  std::unique_ptr<MessageServer> lock_server_;
  std::unique_ptr<MessageClient> rm_;
  std::map<std::string, LocalContainer> containers_;
  std::atomic<bool> stop_requested_{false};
};

}  // namespace ephemyarn
