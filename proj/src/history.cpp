#include "ephemyarn/history.hpp"

#include <filesystem>
#include <fstream>

#include "ephemyarn/errors.hpp"
#include "ephemyarn/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ephemyarn {

const char* app_state_name(AppState s) {
  switch (s) {
    case AppState::submitted: return "submitted";
    case AppState::am_running: return "am_running";
    case AppState::finished: return "finished";
    case AppState::failed: return "failed";
  }
  return "failed";
}

AppState app_state_from_name(const std::string& name) {
  if (name == "submitted") return AppState::submitted;
  if (name == "am_running") return AppState::am_running;
  if (name == "finished") return AppState::finished;
  return AppState::failed;
}

bool app_state_terminal(AppState s) {
  return s == AppState::finished || s == AppState::failed;
}

json ApplicationRecord::to_json() const {
  json containers = json::array();
  for (const auto& c : container_history) {
    containers.push_back({{"id", c.id},
                          {"node", c.node},
                          {"memory_mb", c.resource.memory_mb},
                          {"vcores", c.resource.vcores},
                          {"state", c.state},
                          {"exit_code", c.exit_code},
                          {"tag", c.tag}});
  }
  return json{{"app_id", app_id},
              {"name", name},
              {"am_container", am_container},
              {"state", app_state_name(state)},
              {"submit_time_ms", submit_time_ms},
              {"finish_time_ms", finish_time_ms},
              {"diagnostics", diagnostics},
              {"container_history", containers},
              {"counters", counters},
              {"map_ms", map_ms},
              {"reduce_ms", reduce_ms}};
}

ApplicationRecord ApplicationRecord::from_json(const json& j) {
  ApplicationRecord r;
  r.app_id = j.value("app_id", "");
  r.name = j.value("name", "");
  r.am_container = j.value("am_container", "");
  r.state = app_state_from_name(j.value("state", "failed"));
  r.submit_time_ms = j.value("submit_time_ms", std::int64_t{0});
  r.finish_time_ms = j.value("finish_time_ms", std::int64_t{0});
  r.diagnostics = j.value("diagnostics", "");
  if (j.contains("container_history")) {
    for (const auto& c : j["container_history"]) {
      ContainerEntry e;
      e.id = c.value("id", "");
      e.node = c.value("node", "");
      e.resource.memory_mb = c.value("memory_mb", std::int64_t{0});
      e.resource.vcores = c.value("vcores", std::int64_t{0});
      e.state = c.value("state", "");
      e.exit_code = c.value("exit_code", 0);
      e.tag = c.value("tag", "");
      r.container_history.push_back(std::move(e));
    }
  }
  if (j.contains("counters")) {
    for (auto it = j["counters"].begin(); it != j["counters"].end(); ++it) {
      r.counters[it.key()] = it.value().get<std::int64_t>();
    }
  }
  r.map_ms = j.value("map_ms", std::int64_t{0});
  r.reduce_ms = j.value("reduce_ms", std::int64_t{0});
  return r;
}

HistoryStore::HistoryStore(std::string dir) : dir_(std::move(dir)) {}

std::string HistoryStore::file_path() const { return dir_ + "/applications.ndjson"; }

void HistoryStore::append(const ApplicationRecord& record) {
  fs::create_directories(dir_);
  std::ofstream out(file_path(), std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::Internal, "cannot append to " + file_path());
  out << record.to_json().dump() << "\n";
  out.flush();
}

std::vector<ApplicationRecord> HistoryStore::list() const {
  std::vector<ApplicationRecord> records;
  std::map<std::string, size_t> index;
  if (!fs::exists(file_path())) return records;
  std::ifstream in(file_path(), std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;  // torn tail write
    ApplicationRecord r = ApplicationRecord::from_json(j);
    auto it = index.find(r.app_id);
    if (it == index.end()) {
      index.emplace(r.app_id, records.size());
      records.push_back(std::move(r));
    } else {
      records[it->second] = std::move(r);
    }
  }
  return records;
}

ApplicationRecord HistoryStore::query(const std::string& app_id) const {
  for (const auto& r : list()) {
    if (r.app_id == app_id) return r;
  }
  throw Error(ErrorCode::NotFound, "no history record for application '" + app_id + "'");
}

}  // namespace ephemyarn
