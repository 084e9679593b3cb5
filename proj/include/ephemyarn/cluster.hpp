#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ephemyarn/allocation.hpp"
#include "ephemyarn/app_master.hpp"
#include "ephemyarn/config.hpp"
#include "ephemyarn/history.hpp"

namespace ephemyarn {

using json = nlohmann::json;

/// One daemon as recorded in the cluster-state file: where it runs, how to
/// reach it, and how to kill it when the protocol path fails.
struct DaemonRef {
  std::string role;  // "rm", "history", "agent"
  std::string host;  // logical hostname from the allocation
  std::string addr;  // connect address (127.0.0.1 in local mode)
  int port = 0;
  std::int64_t pid = 0;   // local mode only
  std::string pidfile;    // on the daemon's own node
  std::string log_path;

  json to_json() const;
  static DaemonRef from_json(const json& j);
};

/// Everything teardown needs, durable on the shared filesystem. A fresh
/// process can finish or dismantle the cluster from this file alone.
struct ClusterStateFile {
  std::string job_id;
  std::string mode;  // "local" or "remote"
  std::int64_t created_ms = 0;
  std::string bin_dir;  // where the ephemyarn binaries live (same path on all nodes)
  DaemonRef rm;
  DaemonRef history;
  std::vector<DaemonRef> agents;
  std::string local_root;
  std::string shared_root;
  std::string config_text;  // config snapshot the daemons were started with

  DirectoryPlan plan(const Config& cfg) const;
  Config config() const;

  json to_json() const;
  static ClusterStateFile from_json(const json& j);

  void save(const std::string& path) const;
  /// Throws Error(ClusterUnavailable) when the file does not exist.
  static ClusterStateFile load(const std::string& path);
};

struct ProvisionOptions {
  Config cfg;
  NodeAllocation alloc;
  std::string job_id;   // empty: fresh id
  bool local = false;   // all daemons as local child processes of this host
  std::string bin_dir;  // empty: directory of the current executable
};

struct ProvisionResult {
  std::string state_path;
  ClusterStateFile state;
  std::int64_t wall_ms = 0;
};

/// Stands the cluster up and waits until every agent has registered. On
/// readiness timeout or early daemon death, rolls back whatever was started
/// and rethrows.
ProvisionResult provision(const ProvisionOptions& opts);

struct RunResult {
  ApplicationRecord record;
  std::int64_t wall_ms = 0;
  bool succeeded() const { return state_terminal_ok; }
  bool state_terminal_ok = false;
};

/// Submits the job to the cluster behind the state file and blocks until it
/// is terminal. Prechecks OutputExists before submitting anything.
RunResult run_job(const std::string& state_path, const JobSpec& spec);

struct TeardownReport {
  bool performed = false;  // false: no state file, nothing to do
  bool ok = true;
  std::vector<std::string> issues;
  std::int64_t wall_ms = 0;
};

/// Protocol-first teardown with kill fallback, then prunes local roots and
/// staging (history and collected logs survive). Idempotent: a second call
/// finds no state file and reports a clean no-op.
TeardownReport teardown(const std::string& state_path);

/// `--local N` allocation: N simulated nodes on this machine.
NodeAllocation local_allocation(int n, std::int64_t slots_per_node);

/// Fills empty local_root/shared_root with per-user temp defaults (local
/// mode convenience).
void default_local_roots(Config& cfg);

}  // namespace ephemyarn
