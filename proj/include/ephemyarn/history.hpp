#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ephemyarn/resources.hpp"

namespace ephemyarn {

enum class AppState { submitted, am_running, finished, failed };

const char* app_state_name(AppState s);
AppState app_state_from_name(const std::string& name);
bool app_state_terminal(AppState s);

/// The lifecycle record the history service keeps for one application.
/// Written as one JSON line per terminal event; re-appends supersede
/// earlier lines for the same app_id.
struct ApplicationRecord {
  std::string app_id;
  std::string name;
  std::string am_container;
  AppState state = AppState::submitted;
  std::int64_t submit_time_ms = 0;
  std::int64_t finish_time_ms = 0;
  std::string diagnostics;

  struct ContainerEntry {
    std::string id;
    std::string node;
    ResourceProfile resource;
    std::string state;  // terminal container state
    int exit_code = 0;
    std::string tag;
  };
  std::vector<ContainerEntry> container_history;

  // Aggregated task counters and phase wall times reported by the AM.
  std::map<std::string, std::int64_t> counters;
  std::int64_t map_ms = 0;
  std::int64_t reduce_ms = 0;

  nlohmann::json to_json() const;
  static ApplicationRecord from_json(const nlohmann::json& j);
};

/// Append-only NDJSON store under the shared staging area. Readable by any
/// node during the cluster's life and by the operator after teardown.
class HistoryStore {
 public:
  explicit HistoryStore(std::string dir);

  void append(const ApplicationRecord& record);

  /// Latest record for app_id. Throws Error(NotFound) if absent.
  ApplicationRecord query(const std::string& app_id) const;

  /// Latest record per application, in first-appearance order.
  std::vector<ApplicationRecord> list() const;

  std::string file_path() const;

 private:
  std::string dir_;
};

}  // namespace ephemyarn
