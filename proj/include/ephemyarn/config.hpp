#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ephemyarn/resources.hpp"

namespace ephemyarn {

/// Cluster-wide tunables. The on-disk format is flat `key=value` text; key
/// names follow the Hadoop/YARN parameter names operators already know,
/// with `ephemyarn.*` for everything that has no Hadoop counterpart.
struct Config {
  ResourceProfile node_capacity{52 * 1024, 16};
  std::int64_t min_alloc_mb = 2048;
  std::int64_t min_alloc_vcores = 1;
  std::int64_t am_resource_mb = 8192;
  std::int64_t map_memory_mb = 4096;
  std::int64_t reduce_memory_mb = 4096;  // follows map_memory_mb unless set
  std::string map_heap_opt = "-Xmx3072m";  // opaque, exported into map task env

  std::int64_t heartbeat_interval_ms = 250;
  std::int64_t node_timeout_ms = 5000;
  std::int64_t ready_timeout_ms = 15000;
  std::int64_t kill_grace_ms = 5000;

  std::string local_root;
  std::string shared_root;

  int rm_port = 20050;
  int history_port = 20060;
  int nm_base_port = 20100;  // worker i gets nm_base_port + i; 0 means ephemeral

  std::string remote_exec = "ssh -o BatchMode=yes {host} {command}";
  bool colocate_daemons = false;
  int max_attempts = 3;
  std::int64_t sort_budget_mb = 256;
  std::int64_t split_sample_size = 10000;

  std::string lsf_hosts_var = "LSB_HOSTS";
  std::string slurm_nodelist_var = "SLURM_JOB_NODELIST";
  std::string slurm_tasks_var = "SLURM_TASKS_PER_NODE";

  /// Parses `key=value` lines ('#' starts a comment). Unknown keys are
  /// reported through `warn_unknown` when given but never fail the load.
  static Config from_string(const std::string& text,
                            std::string* warn_unknown = nullptr);
  static Config from_file(const std::string& path,
                          std::string* warn_unknown = nullptr);

  std::string to_string() const;

  /// Enforces the structural constraints:
  ///   min_alloc_mb <= am_resource_mb <= node_capacity.memory_mb
  ///   min_alloc_mb <= map_memory_mb <= node_capacity.memory_mb
  ///   node_timeout_ms > 3 * heartbeat_interval_ms
  /// Throws Error(InvalidConfig) on violation.
  void validate() const;
};

}  // namespace ephemyarn
