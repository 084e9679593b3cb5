#include "ephemyarn/allocation.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "ephemyarn/errors.hpp"
#include "ephemyarn/util.hpp"

namespace fs = std::filesystem;

namespace ephemyarn {

namespace {

void add_host(NodeAllocation& alloc, std::map<std::string, size_t>& index,
              const std::string& name, std::int64_t slots) {
  auto it = index.find(name);
  if (it == index.end()) {
    index.emplace(name, alloc.hosts.size());
    alloc.hosts.push_back({name, slots});
  } else {
    alloc.hosts[it->second].slots += slots;
  }
}

bool valid_job_id(const std::string& id) {
  if (id.empty()) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  }) && id != "." && id != "..";
}

// Lexically: is `inner` equal to or under `outer`?
bool path_within(const fs::path& inner, const fs::path& outer) {
  auto in = inner.lexically_normal();
  auto out = outer.lexically_normal();
  auto oit = out.begin(), iit = in.begin();
  for (; oit != out.end(); ++oit, ++iit) {
    if (iit == in.end()) return false;
    if (*oit != *iit) {
      // trailing empty element of a normalized "a/b/" path
      if (std::next(oit) == out.end() && oit->empty()) return true;
      return false;
    }
  }
  return true;
}

}  // namespace

std::string NodeAllocation::to_hostfile() const {
  std::ostringstream out;
  for (const auto& h : hosts) out << h.hostname << " " << h.slots << "\n";
  return out.str();
}

NodeAllocation parse_hostfile(const std::string& text) {
  NodeAllocation alloc;
  std::map<std::string, size_t> index;
  size_t lineno = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    auto toks = split_ws(line);
    if (toks.size() == 1) {
      add_host(alloc, index, toks[0], 1);
    } else if (toks.size() == 2) {
      std::int64_t slots = 0;
      if (!parse_int64(toks[1], slots) || slots <= 0) {
        throw Error(ErrorCode::MalformedEntry,
                    "line " + std::to_string(lineno) + ": bad slot count '" + toks[1] + "'");
      }
      add_host(alloc, index, toks[0], slots);
    } else {
      throw Error(ErrorCode::MalformedEntry,
                  "line " + std::to_string(lineno) + ": expected 'host' or 'host <slots>'");
    }
  }
  if (alloc.hosts.empty()) {
    throw Error(ErrorCode::EmptyAllocation, "hostfile has no host entries");
  }
  for (const auto& h : alloc.hosts) alloc.total_cores += h.slots;
  return alloc;
}

std::vector<std::string> expand_slurm_nodelist(const std::string& expr) {
  std::vector<std::string> hosts;
  const std::string e = trim(expr);
  if (e.empty()) throw Error(ErrorCode::MalformedEntry, "empty nodelist");

  // Split on commas that are not inside brackets.
  std::vector<std::string> items;
  std::string cur;
  int depth = 0;
  for (char c : e) {
    if (c == '[') ++depth;
    if (c == ']') --depth;
    if (c == ',' && depth == 0) {
      items.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  items.push_back(cur);
  if (depth != 0) throw Error(ErrorCode::MalformedEntry, "unbalanced brackets in '" + e + "'");

  for (const std::string& item : items) {
    const std::string it = trim(item);
    if (it.empty()) throw Error(ErrorCode::MalformedEntry, "empty nodelist item in '" + e + "'");
    size_t lb = it.find('[');
    if (lb == std::string::npos) {
      if (it.find(']') != std::string::npos) {
        throw Error(ErrorCode::MalformedEntry, "stray ']' in '" + it + "'");
      }
      hosts.push_back(it);
      continue;
    }
    size_t rb = it.find(']', lb);
    if (rb == std::string::npos || rb != it.size() - 1) {
      throw Error(ErrorCode::MalformedEntry, "malformed bracket expression '" + it + "'");
    }
    const std::string prefix = it.substr(0, lb);
    const std::string ranges = it.substr(lb + 1, rb - lb - 1);
    if (ranges.empty()) throw Error(ErrorCode::MalformedEntry, "empty range in '" + it + "'");
    for (const std::string& r : split(ranges, ',')) {
      auto dash = r.find('-');
      auto parse_num = [&](const std::string& s, std::int64_t& v) {
        if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) {
              return std::isdigit(static_cast<unsigned char>(c));
            })) {
          throw Error(ErrorCode::MalformedEntry, "bad range bound '" + s + "' in '" + it + "'");
        }
        parse_int64(s, v);
      };
      if (dash == std::string::npos) {
        std::int64_t v = 0;
        parse_num(r, v);
        hosts.push_back(prefix + r);
      } else {
        const std::string lo_s = r.substr(0, dash), hi_s = r.substr(dash + 1);
        std::int64_t lo = 0, hi = 0;
        parse_num(lo_s, lo);
        parse_num(hi_s, hi);
        if (hi < lo) throw Error(ErrorCode::MalformedEntry, "descending range '" + r + "'");
        size_t width = lo_s.size();
        for (std::int64_t v = lo; v <= hi; ++v) {
          std::string num = std::to_string(v);
          if (num.size() < width) num.insert(0, width - num.size(), '0');
          hosts.push_back(prefix + num);
        }
      }
    }
  }
  return hosts;
}

NodeAllocation read_env_allocation(const std::map<std::string, std::string>& env,
                                   EnvFlavor flavor, const Config& cfg) {
  if (flavor == EnvFlavor::lsf) {
    auto it = env.find(cfg.lsf_hosts_var);
    if (it == env.end()) {
      throw Error(ErrorCode::MissingEnv, cfg.lsf_hosts_var + " is not set");
    }
    std::ostringstream lines;
    for (const std::string& h : split_ws(it->second)) lines << h << "\n";
    const std::string text = lines.str();
    if (trim(text).empty()) {
      throw Error(ErrorCode::EmptyAllocation, cfg.lsf_hosts_var + " is empty");
    }
    return parse_hostfile(text);
  }

  auto nl = env.find(cfg.slurm_nodelist_var);
  if (nl == env.end()) {
    throw Error(ErrorCode::MissingEnv, cfg.slurm_nodelist_var + " is not set");
  }
  auto hosts = expand_slurm_nodelist(nl->second);

  // tasks-per-node: plain "16", or SLURM's compressed "2(x3),1" mapped
  // across hosts in order.
  std::vector<std::int64_t> tasks;
  auto tv = env.find(cfg.slurm_tasks_var);
  if (tv == env.end()) {
    throw Error(ErrorCode::MissingEnv, cfg.slurm_tasks_var + " is not set");
  }
  for (const std::string& part : split(trim(tv->second), ',')) {
    const std::string p = trim(part);
    size_t paren = p.find("(x");
    if (paren == std::string::npos) {
      std::int64_t n = 0;
      if (!parse_int64(p, n) || n <= 0) {
        throw Error(ErrorCode::MalformedEntry, "bad tasks-per-node '" + p + "'");
      }
      tasks.push_back(n);
    } else {
      if (p.back() != ')') throw Error(ErrorCode::MalformedEntry, "bad tasks-per-node '" + p + "'");
      std::int64_t n = 0, k = 0;
      if (!parse_int64(p.substr(0, paren), n) || n <= 0 ||
          !parse_int64(p.substr(paren + 2, p.size() - paren - 3), k) || k <= 0) {
        throw Error(ErrorCode::MalformedEntry, "bad tasks-per-node '" + p + "'");
      }
      for (std::int64_t i = 0; i < k; ++i) tasks.push_back(n);
    }
  }
  if (tasks.size() == 1) tasks.assign(hosts.size(), tasks[0]);
  if (tasks.size() != hosts.size()) {
    throw Error(ErrorCode::MalformedEntry,
                "tasks-per-node lists " + std::to_string(tasks.size()) + " entries for " +
                    std::to_string(hosts.size()) + " hosts");
  }

  std::ostringstream lines;
  for (size_t i = 0; i < hosts.size(); ++i) lines << hosts[i] << " " << tasks[i] << "\n";
  return parse_hostfile(lines.str());
}

ClusterLayout assign_roles(const NodeAllocation& alloc, const Config& cfg) {
  ClusterLayout layout;
  layout.rm_port = cfg.rm_port;
  layout.history_port = cfg.history_port;
  layout.nm_base_port = cfg.nm_base_port;

  if (cfg.colocate_daemons) {
    if (alloc.hosts.empty()) throw Error(ErrorCode::InsufficientNodes, "no hosts");
    layout.rm_host = alloc.hosts[0].hostname;
    layout.history_host = alloc.hosts[std::min<size_t>(1, alloc.hosts.size() - 1)].hostname;
    for (const auto& h : alloc.hosts) layout.worker_hosts.push_back(h.hostname);
    return layout;
  }

  if (alloc.hosts.size() < 3) {
    throw Error(ErrorCode::InsufficientNodes,
                "need at least 3 hosts (2 daemon hosts + 1 worker), got " +
                    std::to_string(alloc.hosts.size()));
  }
  layout.rm_host = alloc.hosts[0].hostname;
  layout.history_host = alloc.hosts[1].hostname;
  for (size_t i = 2; i < alloc.hosts.size(); ++i) {
    layout.worker_hosts.push_back(alloc.hosts[i].hostname);
  }
  return layout;
}

std::string DirectoryPlan::agent_work_dir(const std::string& host) const {
  return local_job_root + "/agents/" + host;
}

DirectoryPlan plan_directories(const Config& cfg, const std::string& job_id) {
  if (cfg.local_root.empty() || cfg.shared_root.empty()) {
    throw Error(ErrorCode::InvalidRoots, "local root and shared root are required");
  }
  if (!valid_job_id(job_id)) {
    throw Error(ErrorCode::MalformedEntry, "job id '" + job_id + "' is not path-safe");
  }
  fs::path local(cfg.local_root), shared(cfg.shared_root);
  if (path_within(local, shared) || path_within(shared, local)) {
    throw Error(ErrorCode::InvalidRoots,
                "local root '" + cfg.local_root + "' and shared root '" + cfg.shared_root +
                    "' must be disjoint");
  }

  DirectoryPlan plan;
  plan.job_id = job_id;
  plan.local_root = cfg.local_root;
  plan.shared_root = cfg.shared_root;
  plan.local_job_root = (local / job_id).string();
  plan.am_log = plan.local_job_root + "/am_log";
  plan.namenode_log = plan.local_job_root + "/namenode_log";
  plan.rm_log = plan.local_job_root + "/rm_log";
  plan.namenode_data = plan.local_job_root + "/namenode_data";
  plan.shared_job_root = (shared / job_id).string();
  plan.staging = plan.shared_job_root + "/staging";
  plan.input = plan.shared_job_root + "/input";
  plan.output = plan.shared_job_root + "/output";
  return plan;
}

}  // namespace ephemyarn
