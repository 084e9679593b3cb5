#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ephemyarn/config.hpp"
#include "ephemyarn/history.hpp"
#include "ephemyarn/protocol.hpp"
#include "ephemyarn/resources.hpp"
#include "ephemyarn/scheduler.hpp"

namespace ephemyarn {

enum class ContainerState {
  requested,
  allocated,
  launching,
  running,
  completed,
  failed,
  killed,
};

const char* container_state_name(ContainerState s);
ContainerState container_state_from_name(const std::string& name);
bool container_state_terminal(ContainerState s);

struct Container {
  std::string id;
  std::string app_id;
  std::string node;
  ResourceProfile resource;
  std::string command;
  std::map<std::string, std::string> env;
  std::string tag;  // opaque caller label, e.g. "map_3_a1"
  ContainerState state = ContainerState::requested;
  std::optional<int> exit_code;
  std::string diagnostics;
};

/// The Resource Manager's whole mutable world. All public methods lock
/// internally; socket handler threads and the timeout sweeper are the
/// producers, the internal mutex is the single logical owner.
class ClusterState {
 public:
  using TraceFn = std::function<void(const json&)>;

  ClusterState(Config cfg, std::vector<std::string> expected_workers,
               std::string rm_endpoint, std::string job_id,
               HistoryStore* history, TraceFn trace = nullptr);

  // -- node agent side ------------------------------------------------
  json register_node(const std::string& host, ResourceProfile capacity, std::int64_t now);
  json heartbeat(const std::string& host, const json& container_statuses, bool drained,
                 std::int64_t now);

  // -- application side -----------------------------------------------
  json submit_application(const std::string& name, const std::string& am_command,
                          const std::map<std::string, std::string>& extra_env,
                          std::int64_t now);
  json allocate(const std::string& app_id, const json& asks, std::int64_t now);
  json finish_application(const json& msg, std::int64_t now);
  json application_status(const std::string& app_id) const;

  // -- control ----------------------------------------------------------
  json cluster_status() const;
  void begin_teardown();
  /// Marks overdue nodes lost and fails their containers; when draining,
  /// returns true once every agent is gone and final records are flushed.
  bool sweep(std::int64_t now);
  bool all_registered() const;

 private:
  struct NodeInfo {
    std::string host;
    ResourceProfile capacity;
    ResourceProfile used;
    std::set<std::string> live_containers;
    std::int64_t last_heartbeat_ms = 0;
    bool alive = false;
    bool ever_registered = false;
    std::deque<json> pending_directives;  // launch/kill, delivered exactly once
  };

  struct UnitPayload {
    std::string command;
    std::map<std::string, std::string> env;
    std::string tag;
  };

  struct PendingBatch {
    std::string app_id;
    ResourceProfile profile;  // normalized
    std::deque<UnitPayload> units;
  };

  struct AppInfo {
    ApplicationRecord record;
    std::deque<json> pending_allocated;  // AllocateResponse payloads, delivered once
    std::deque<json> pending_completed;
    bool finish_reported = false;
  };

  void run_scheduler(std::int64_t now);
  void apply_container_terminal(Container& c, ContainerState state, std::optional<int> exit_code,
                                const std::string& diagnostics, std::int64_t now);
  void mark_node_lost(NodeInfo& node, std::int64_t now, const std::string& why);
  void finish_app(AppInfo& app, AppState state, const std::string& diagnostics, std::int64_t now);
  void trace(const json& event) const;
  AppInfo& app_or_throw(const std::string& app_id);
  const AppInfo& app_or_throw(const std::string& app_id) const;
  json build_heartbeat_reply(NodeInfo& node);
  json enqueue_request(AppInfo& app, const ResourceProfile& requested,
                       std::vector<UnitPayload> units, std::int64_t now);

  mutable std::mutex mu_;
  Config cfg_;
  std::vector<std::string> expected_workers_;
  std::string rm_endpoint_;
  std::string job_id_;
  HistoryStore* history_;
  TraceFn trace_fn_;

  std::vector<NodeInfo> nodes_;  // registration order
  std::deque<PendingBatch> queue_;
  std::map<std::string, Container> containers_;
  std::map<std::string, AppInfo> apps_;
  std::int64_t next_app_seq_ = 1;
  std::map<std::string, std::int64_t> next_container_seq_;
  std::int64_t start_ms_;
  bool draining_ = false;
  bool done_ = false;
};

/// The RM daemon: a MessageServer dispatching onto ClusterState, plus the
/// liveness sweeper. `wait()` blocks until teardown completes.
class RmServer {
 public:
  RmServer(Config cfg, std::vector<std::string> expected_workers, std::string advertise_host,
           std::string job_id, std::string history_dir, ClusterState::TraceFn trace = nullptr);
  ~RmServer();

  void start();
  void stop();
  /// Blocks until teardown finishes (all agents drained or timed out).
  void wait();
  int port() const { return server_->port(); }

 private:
  json handle(const json& msg);
  void sweep_loop();

  Config cfg_;
  std::vector<std::string> expected_workers_;
  std::string advertise_host_;
  std::string job_id_;
  ClusterState::TraceFn trace_;
  std::unique_ptr<HistoryStore> history_;
  std::unique_ptr<ClusterState> state_;
  std::unique_ptr<MessageServer> server_;
  std::thread sweeper_;
  std::mutex done_mu_;
  std::condition_variable done_cv_;
  bool done_ = false;
  std::atomic<bool> stopping_{false};
};

}  // namespace ephemyarn
