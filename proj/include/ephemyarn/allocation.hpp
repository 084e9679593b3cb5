#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ephemyarn/config.hpp"

namespace ephemyarn {

/// An ordered batch-scheduler allocation: hosts in handover order with
/// their core (slot) counts. Repeated hostfile lines are merged, so hosts
/// are unique here.
struct NodeAllocation {
  struct Host {
    std::string hostname;
    std::int64_t slots = 0;
    bool operator==(const Host&) const = default;
  };
  std::vector<Host> hosts;
  std::int64_t total_cores = 0;

  bool operator==(const NodeAllocation&) const = default;

  /// Re-emits hostfile text ("hostname slots" lines). parse_hostfile of the
  /// result yields an equal allocation.
  std::string to_hostfile() const;
};

/// Daemon role placement: negotiator on the first allocated host, history
/// service on the second, node agents on the rest, in allocation order.
struct ClusterLayout {
  std::string rm_host;
  std::string history_host;
  std::vector<std::string> worker_hosts;
  int rm_port = 0;
  int history_port = 0;
  int nm_base_port = 0;

  int worker_port(size_t index) const { return nm_base_port == 0 ? 0 : nm_base_port + static_cast<int>(index); }
};

/// Local (per-node fast storage) vs shared (parallel filesystem) directory
/// split for one cluster instance. Every path embeds the job id so
/// concurrent jobs never collide.
struct DirectoryPlan {
  std::string job_id;
  std::string local_root;
  std::string shared_root;

  std::string local_job_root;   // <local_root>/<job_id>
  std::string am_log;
  std::string namenode_log;
  std::string rm_log;
  std::string namenode_data;   // created for layout fidelity, nothing writes to it

  std::string shared_job_root;  // <shared_root>/<job_id>
  std::string staging;
  std::string input;
  std::string output;

  std::vector<std::string> local_dirs() const {
    return {am_log, namenode_log, rm_log, namenode_data};
  }
  std::vector<std::string> shared_dirs() const { return {staging, input, output}; }

  /// Per-agent container work area, under the node's local job root.
  std::string agent_work_dir(const std::string& host) const;

  // Well-known locations under staging.
  std::string history_dir() const { return staging + "/history"; }
  std::string logs_dir() const { return staging + "/logs"; }
  std::string jobs_dir() const { return staging + "/jobs"; }
  std::string shuffle_dir() const { return staging + "/shuffle"; }
  std::string state_file() const { return staging + "/cluster.state"; }
};

/// Parses newline-separated "hostname" or "hostname <slots>" entries.
/// '#' begins a comment line. Repeated hostnames aggregate: k bare
/// occurrences mean k slots, explicit counts sum.
NodeAllocation parse_hostfile(const std::string& text);

enum class EnvFlavor { lsf, slurm };

/// Builds an allocation from scheduler-exported environment variables.
/// LSF: a space-separated host list (one entry per slot). SLURM: a compact
/// nodelist expression ("n[1-3],m7") plus tasks-per-node ("16" or "2(x3),1").
NodeAllocation read_env_allocation(const std::map<std::string, std::string>& env,
                                   EnvFlavor flavor, const Config& cfg);

/// Expands a SLURM nodelist expression into hostnames, preserving zero
/// padding ("n[01-03]" -> n01 n02 n03).
std::vector<std::string> expand_slurm_nodelist(const std::string& expr);

/// First host runs the negotiator, second the history service, the rest are
/// workers. With cfg.colocate_daemons the daemon hosts also join the worker
/// list (for allocations too small for dedicated daemon nodes).
ClusterLayout assign_roles(const NodeAllocation& alloc, const Config& cfg);

DirectoryPlan plan_directories(const Config& cfg, const std::string& job_id);

}  // namespace ephemyarn
