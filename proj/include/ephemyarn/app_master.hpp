#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ephemyarn/protocol.hpp"
#include "ephemyarn/resources.hpp"

namespace ephemyarn {

/// Flat key=value description of one MapReduce job. Command strings are
/// templates; the application master substitutes {TASK_INDEX}, {INPUT},
/// {OUTPUT}, {STAGING}, {SHUFFLE}, {NUM_MAPPERS} and {NUM_REDUCERS} before
/// launch. reducers=0 means a map-only job whose mappers write the output
/// directly.
struct JobSpec {
  std::string name;
  std::string input;   // empty for generator jobs
  std::string output;  // final output directory, must not exist yet
  std::int64_t mappers = 1;
  std::int64_t reducers = 0;
  std::string map_command;
  std::string reduce_command;
  std::int64_t map_memory_mb = 0;  // 0: take the cluster default
  std::int64_t reduce_memory_mb = 0;
  std::int64_t map_vcores = 1;
  std::int64_t reduce_vcores = 1;

  static JobSpec from_string(const std::string& text);
  static JobSpec from_file(const std::string& path);
  std::string to_string() const;

  /// Throws Error(MalformedEntry) when structurally unusable.
  void validate() const;
};

std::string substitute_placeholders(const std::string& tmpl,
                                    const std::map<std::string, std::string>& values);

/// Runs one job inside the AM container: requests map containers, waits for
/// the full map phase behind a strict barrier, runs reducers, commits the
/// output by renaming the staged directory, and reports the outcome to the
/// resource manager. Every decision is appended to
/// staging/logs/<app_id>/am_events.ndjson.
class AppMaster {
 public:
  struct Settings {
    std::string rm_host;
    int rm_port = 0;
    std::string app_id;
    std::string staging;
    std::int64_t heartbeat_ms = 250;
    int max_attempts = 3;
    std::int64_t default_map_memory_mb = 4096;
    std::int64_t default_reduce_memory_mb = 4096;
    std::string map_java_opts;
    std::int64_t rm_timeout_ms = 10000;
  };

  /// Builds settings from the container environment the agent injects
  /// (EPHEMYARN_RM, EPHEMYARN_APP_ID, EPHEMYARN_STAGING, ...).
  static Settings settings_from_env();

  AppMaster(Settings settings, JobSpec spec);

  /// Returns the process exit code: 0 when the outcome (success or failure)
  /// was reported to the resource manager, 1 when even that was impossible.
  int run();

 private:
  enum class TaskState { pending, waiting, succeeded, failed };
  struct Task {
    std::int64_t index = 0;
    int attempts = 0;
    TaskState state = TaskState::pending;
    std::string container;  // current attempt's container id
    std::string tag;
  };

  bool run_phase(const std::string& phase, std::vector<Task>& tasks,
                 const std::string& command_template, ResourceProfile profile,
                 std::string& fail_reason);
  json allocate(const json& asks);
  void emit(json event);
  void read_counters(const std::string& container_id);
  void report(bool success, const std::string& diagnostics);
  std::string expand(const std::string& tmpl, std::int64_t task_index) const;

  Settings s_;
  JobSpec spec_;
  std::unique_ptr<MessageClient> rm_;
  std::string staged_output_;
  std::string shuffle_dir_;
  std::string events_path_;
  std::int64_t next_seq_ = 1;
  std::map<std::string, std::int64_t> counters_;
  std::int64_t map_ms_ = 0;
  std::int64_t reduce_ms_ = 0;
};

}  // namespace ephemyarn
