#include "ephemyarn/config.hpp"

#include <functional>
#include <sstream>

#include "ephemyarn/errors.hpp"
#include "ephemyarn/util.hpp"

namespace ephemyarn {

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorCode::InvalidConfig, key + " expects a boolean, got '" + v + "'");
}

std::int64_t parse_i64(const std::string& v, const std::string& key) {
  std::int64_t out = 0;
  if (!parse_int64(v, out)) {
    throw Error(ErrorCode::InvalidConfig, key + " expects an integer, got '" + v + "'");
  }
  return out;
}

}  // namespace

Config Config::from_string(const std::string& text, std::string* warn_unknown) {
  Config cfg;
  bool reduce_set = false;

  using Setter = std::function<void(Config&, const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"yarn.nodemanager.resource.memory-mb",
       [](Config& c, const std::string& v, const std::string& k) { c.node_capacity.memory_mb = parse_i64(v, k); }},
      {"yarn.nodemanager.resource.cpu-vcores",
       [](Config& c, const std::string& v, const std::string& k) { c.node_capacity.vcores = parse_i64(v, k); }},
      {"yarn.scheduler.minimum-allocation-mb",
       [](Config& c, const std::string& v, const std::string& k) { c.min_alloc_mb = parse_i64(v, k); }},
      {"yarn.scheduler.minimum-allocation-vcores",
       [](Config& c, const std::string& v, const std::string& k) { c.min_alloc_vcores = parse_i64(v, k); }},
      {"yarn.app.mapreduce.am.resource.mb",
       [](Config& c, const std::string& v, const std::string& k) { c.am_resource_mb = parse_i64(v, k); }},
      {"mapreduce.map.memory.mb",
       [](Config& c, const std::string& v, const std::string& k) { c.map_memory_mb = parse_i64(v, k); }},
      {"mapreduce.map.java.opts",
       [](Config& c, const std::string& v, const std::string&) { c.map_heap_opt = v; }},
      {"ephemyarn.heartbeat.interval.ms",
       [](Config& c, const std::string& v, const std::string& k) { c.heartbeat_interval_ms = parse_i64(v, k); }},
      {"ephemyarn.node.timeout.ms",
       [](Config& c, const std::string& v, const std::string& k) { c.node_timeout_ms = parse_i64(v, k); }},
      {"ephemyarn.ready.timeout.ms",
       [](Config& c, const std::string& v, const std::string& k) { c.ready_timeout_ms = parse_i64(v, k); }},
      {"ephemyarn.kill.grace.ms",
       [](Config& c, const std::string& v, const std::string& k) { c.kill_grace_ms = parse_i64(v, k); }},
      {"ephemyarn.local.root",
       [](Config& c, const std::string& v, const std::string&) { c.local_root = v; }},
      {"ephemyarn.shared.root",
       [](Config& c, const std::string& v, const std::string&) { c.shared_root = v; }},
      {"ephemyarn.rm.port",
       [](Config& c, const std::string& v, const std::string& k) { c.rm_port = static_cast<int>(parse_i64(v, k)); }},
      {"ephemyarn.history.port",
       [](Config& c, const std::string& v, const std::string& k) { c.history_port = static_cast<int>(parse_i64(v, k)); }},
      {"ephemyarn.nm.base.port",
       [](Config& c, const std::string& v, const std::string& k) { c.nm_base_port = static_cast<int>(parse_i64(v, k)); }},
      {"ephemyarn.remote.exec",
       [](Config& c, const std::string& v, const std::string&) { c.remote_exec = v; }},
      {"ephemyarn.colocate.daemons",
       [](Config& c, const std::string& v, const std::string& k) { c.colocate_daemons = parse_bool(v, k); }},
      {"ephemyarn.max.attempts",
       [](Config& c, const std::string& v, const std::string& k) { c.max_attempts = static_cast<int>(parse_i64(v, k)); }},
      {"ephemyarn.sort.budget.mb",
       [](Config& c, const std::string& v, const std::string& k) { c.sort_budget_mb = parse_i64(v, k); }},
      {"ephemyarn.split.sample.size",
       [](Config& c, const std::string& v, const std::string& k) { c.split_sample_size = parse_i64(v, k); }},
      {"ephemyarn.env.lsf.hosts",
       [](Config& c, const std::string& v, const std::string&) { c.lsf_hosts_var = v; }},
      {"ephemyarn.env.slurm.nodelist",
       [](Config& c, const std::string& v, const std::string&) { c.slurm_nodelist_var = v; }},
      {"ephemyarn.env.slurm.tasks-per-node",
       [](Config& c, const std::string& v, const std::string&) { c.slurm_tasks_var = v; }},
  };

  std::ostringstream unknown;
  size_t lineno = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::InvalidConfig,
                  "line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "mapreduce.reduce.memory.mb") {
      cfg.reduce_memory_mb = parse_i64(value, key);
      reduce_set = true;
      continue;
    }
    auto it = setters.find(key);
    if (it == setters.end()) {
      unknown << key << " ";
      continue;
    }
    it->second(cfg, value, key);
  }

  if (!reduce_set) cfg.reduce_memory_mb = cfg.map_memory_mb;
  if (warn_unknown) *warn_unknown = trim(unknown.str());
  cfg.validate();
  return cfg;
}

Config Config::from_file(const std::string& path, std::string* warn_unknown) {
  return from_string(read_file(path), warn_unknown);
}

std::string Config::to_string() const {
  std::ostringstream out;
  out << "yarn.nodemanager.resource.memory-mb=" << node_capacity.memory_mb << "\n"
      << "yarn.nodemanager.resource.cpu-vcores=" << node_capacity.vcores << "\n"
      << "yarn.scheduler.minimum-allocation-mb=" << min_alloc_mb << "\n"
      << "yarn.scheduler.minimum-allocation-vcores=" << min_alloc_vcores << "\n"
      << "yarn.app.mapreduce.am.resource.mb=" << am_resource_mb << "\n"
      << "mapreduce.map.memory.mb=" << map_memory_mb << "\n"
      << "mapreduce.reduce.memory.mb=" << reduce_memory_mb << "\n"
      << "mapreduce.map.java.opts=" << map_heap_opt << "\n"
      << "ephemyarn.heartbeat.interval.ms=" << heartbeat_interval_ms << "\n"
      << "ephemyarn.node.timeout.ms=" << node_timeout_ms << "\n"
      << "ephemyarn.ready.timeout.ms=" << ready_timeout_ms << "\n"
      << "ephemyarn.kill.grace.ms=" << kill_grace_ms << "\n"
      << "ephemyarn.local.root=" << local_root << "\n"
      << "ephemyarn.shared.root=" << shared_root << "\n"
      << "ephemyarn.rm.port=" << rm_port << "\n"
      << "ephemyarn.history.port=" << history_port << "\n"
      << "ephemyarn.nm.base.port=" << nm_base_port << "\n"
      << "ephemyarn.remote.exec=" << remote_exec << "\n"
      << "ephemyarn.colocate.daemons=" << (colocate_daemons ? "true" : "false") << "\n"
      << "ephemyarn.max.attempts=" << max_attempts << "\n"
      << "ephemyarn.sort.budget.mb=" << sort_budget_mb << "\n"
      << "ephemyarn.split.sample.size=" << split_sample_size << "\n"
      << "ephemyarn.env.lsf.hosts=" << lsf_hosts_var << "\n"
      << "ephemyarn.env.slurm.nodelist=" << slurm_nodelist_var << "\n"
      << "ephemyarn.env.slurm.tasks-per-node=" << slurm_tasks_var << "\n";
  return out.str();
}

void Config::validate() const {
  if (min_alloc_mb < 1 || min_alloc_vcores < 0) {
    throw Error(ErrorCode::InvalidConfig, "minimum allocation must be positive");
  }
  if (min_alloc_mb > am_resource_mb || am_resource_mb > node_capacity.memory_mb) {
    throw Error(ErrorCode::InvalidConfig,
                "need min_alloc_mb <= am_resource_mb <= node capacity, got " +
                    std::to_string(min_alloc_mb) + " / " + std::to_string(am_resource_mb) +
                    " / " + std::to_string(node_capacity.memory_mb));
  }
  if (min_alloc_mb > map_memory_mb || map_memory_mb > node_capacity.memory_mb) {
    throw Error(ErrorCode::InvalidConfig,
                "need min_alloc_mb <= map_memory_mb <= node capacity, got " +
                    std::to_string(min_alloc_mb) + " / " + std::to_string(map_memory_mb) +
                    " / " + std::to_string(node_capacity.memory_mb));
  }
  if (node_timeout_ms <= 3 * heartbeat_interval_ms) {
    throw Error(ErrorCode::InvalidConfig,
                "node timeout must exceed three heartbeat intervals");
  }
  if (max_attempts < 1) {
    throw Error(ErrorCode::InvalidConfig, "max attempts must be >= 1");
  }
}

}  // namespace ephemyarn
