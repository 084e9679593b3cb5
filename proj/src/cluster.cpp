#include "ephemyarn/cluster.hpp"

#include <signal.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "ephemyarn/process.hpp"
#include "ephemyarn/protocol.hpp"
#include "ephemyarn/util.hpp"

namespace fs = std::filesystem;

namespace ephemyarn {

namespace {

std::string tail_of_file(const std::string& path, size_t max_bytes = 2000) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) return "";
  auto size = static_cast<size_t>(in.tellg());
  auto start = size > max_bytes ? size - max_bytes : 0;
  in.seekg(static_cast<std::streamoff>(start));
  std::string tail(size - start, '\0');
  in.read(tail.data(), static_cast<std::streamsize>(tail.size()));
  return tail;
}

void info(const std::string& line) {
  std::fprintf(stderr, "[ephemyarn] %s\n", line.c_str());
  std::fflush(stderr);
}

/// Expands the remote-exec template and runs it, waiting for completion.
/// The command is quoted as a single argument for the remote shell.
bool remote_run(const Config& cfg, const std::string& host, const std::string& command,
                std::string* error) {
  std::string line = substitute_placeholders(
      cfg.remote_exec, {{"host", host}, {"command", shell_quote(command)}});
  SpawnOptions opts;
  opts.command = line;
  pid_t pid = spawn_process(opts);
  for (;;) {
    if (auto es = try_reap(pid)) {
      if (es->code != 0 && error) {
        *error = "remote command on " + host + " exited " + std::to_string(es->code);
      }
      return es->code == 0;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

json try_request(const std::string& addr, int port, const json& msg,
                 std::int64_t timeout_ms = 3000) {
  MessageClient client(addr, port, timeout_ms);
  return client.request(msg);
}

bool endpoint_answers(const std::string& addr, int port, const std::string& type) {
  try {
    json reply = try_request(addr, port, {{"type", type}});
    return reply.is_object();
  } catch (const Error&) {
    return false;
  }
}

void kill_recorded_pid(const DaemonRef& d, std::vector<std::string>* issues) {
  if (d.pid <= 0) return;
  pid_t pid = static_cast<pid_t>(d.pid);
  if (!pid_command_contains(pid, "ephemyarn")) return;  // gone or recycled
  kill_group(pid, SIGTERM);
  std::int64_t deadline = steady_now_ms() + 3000;
  while (pid_command_contains(pid, "ephemyarn") && steady_now_ms() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  if (pid_command_contains(pid, "ephemyarn")) {
    kill_group(pid, SIGKILL);
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    if (pid_command_contains(pid, "ephemyarn") && issues) {
      issues->push_back(d.role + " on " + d.host + " (pid " + std::to_string(d.pid) +
                        ") survived SIGKILL");
    }
  }
}

}  // namespace

json DaemonRef::to_json() const {
  return {{"role", role},   {"host", host}, {"addr", addr},       {"port", port},
          {"pid", pid},     {"pidfile", pidfile}, {"log", log_path}};
}

DaemonRef DaemonRef::from_json(const json& j) {
  DaemonRef d;
  d.role = j.value("role", "");
  d.host = j.value("host", "");
  d.addr = j.value("addr", "");
  d.port = j.value("port", 0);
  d.pid = j.value("pid", std::int64_t{0});
  d.pidfile = j.value("pidfile", "");
  d.log_path = j.value("log", "");
  return d;
}

DirectoryPlan ClusterStateFile::plan(const Config& cfg) const {
  return plan_directories(cfg, job_id);
}

Config ClusterStateFile::config() const {
  Config cfg = Config::from_string(config_text);
  return cfg;
}

json ClusterStateFile::to_json() const {
  json agents_j = json::array();
  for (const auto& a : agents) agents_j.push_back(a.to_json());
  return {{"job_id", job_id},         {"mode", mode},
          {"created_ms", created_ms}, {"bin_dir", bin_dir},
          {"rm", rm.to_json()},       {"history", history.to_json()},
          {"agents", agents_j},       {"local_root", local_root},
          {"shared_root", shared_root}, {"config", config_text}};
}

ClusterStateFile ClusterStateFile::from_json(const json& j) {
  ClusterStateFile s;
  s.job_id = j.value("job_id", "");
  s.mode = j.value("mode", "local");
  s.created_ms = j.value("created_ms", std::int64_t{0});
  s.bin_dir = j.value("bin_dir", "");
  if (j.contains("rm")) s.rm = DaemonRef::from_json(j["rm"]);
  if (j.contains("history")) s.history = DaemonRef::from_json(j["history"]);
  if (j.contains("agents")) {
    for (const auto& a : j["agents"]) s.agents.push_back(DaemonRef::from_json(a));
  }
  s.local_root = j.value("local_root", "");
  s.shared_root = j.value("shared_root", "");
  s.config_text = j.value("config", "");
  return s;
}

void ClusterStateFile::save(const std::string& path) const {
  write_file_atomic(path, to_json().dump(2) + "\n");
}

ClusterStateFile ClusterStateFile::load(const std::string& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::ClusterUnavailable, "no cluster state file at " + path);
  }
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) {
    throw Error(ErrorCode::ClusterUnavailable, "unreadable cluster state file at " + path);
  }
  return from_json(j);
}

NodeAllocation local_allocation(int n, std::int64_t slots_per_node) {
  NodeAllocation alloc;
  for (int i = 0; i < n; ++i) {
    alloc.hosts.push_back({"local-" + std::to_string(i), slots_per_node});
    alloc.total_cores += slots_per_node;
  }
  return alloc;
}

void default_local_roots(Config& cfg) {
  std::string user = getenv_opt("USER").value_or("u" + std::to_string(getuid()));
  if (cfg.local_root.empty()) cfg.local_root = "/tmp/ephemyarn-" + user + "/local";
  if (cfg.shared_root.empty()) cfg.shared_root = "/tmp/ephemyarn-" + user + "/shared";
}

namespace {

struct LaunchSpec {
  DaemonRef ref;
  std::string command;   // daemon command line without redirection
  std::string log_dir;   // created before launch
};

/// Starts one daemon, locally as a detached child or through remote exec.
void start_daemon(const Config& cfg, bool local, LaunchSpec& spec) {
  if (local) {
    fs::create_directories(spec.log_dir);
    SpawnOptions opts;
    // exec so the daemon replaces the shell: the recorded pid is the
    // daemon itself, not a wrapper that would die first at teardown.
    opts.command = "exec " + spec.command;
    opts.stdout_path = spec.ref.log_path;
    opts.stderr_path = spec.ref.log_path;
    opts.die_with_parent = false;
    spec.ref.pid = spawn_process(opts);
  } else {
    std::string remote_cmd = "mkdir -p " + shell_quote(spec.log_dir) + " && nohup " +
                             spec.command + " >> " + shell_quote(spec.ref.log_path) +
                             " 2>&1 &";
    std::string err;
    if (!remote_run(cfg, spec.ref.host, remote_cmd, &err)) {
      throw Error(ErrorCode::LaunchFailed, "could not start " + spec.ref.role + " on " +
                                               spec.ref.host + ": " + err);
    }
  }
}

[[noreturn]] void fail_with_log(const std::string& what, const DaemonRef& d) {
  std::string tail = tail_of_file(d.log_path);
  std::string msg = what;
  if (!tail.empty()) msg += "\nlast log lines from " + d.log_path + ":\n" + tail;
  throw Error(ErrorCode::LaunchFailed, msg);
}

}  // namespace

ProvisionResult provision(const ProvisionOptions& opts) {
  const std::int64_t t0 = steady_now_ms();
  Config cfg = opts.cfg;
  if (opts.local) default_local_roots(cfg);
  cfg.validate();
  if (cfg.local_root.empty() || cfg.shared_root.empty()) {
    throw Error(ErrorCode::InvalidRoots, "local_root and shared_root must be configured");
  }

  ClusterStateFile state;
  state.job_id = opts.job_id.empty() ? fresh_job_id() : opts.job_id;
  state.mode = opts.local ? "local" : "remote";
  state.created_ms = now_ms();
  state.bin_dir = opts.bin_dir.empty() ? self_exe_dir() : opts.bin_dir;
  state.local_root = cfg.local_root;
  state.shared_root = cfg.shared_root;

  ClusterLayout layout = assign_roles(opts.alloc, cfg);
  DirectoryPlan plan = plan_directories(cfg, state.job_id);

  // Resolve ports up front; 0 means pick an ephemeral one.
  int rm_port = cfg.rm_port != 0 ? cfg.rm_port : pick_free_port();
  int history_port = cfg.history_port != 0 ? cfg.history_port : pick_free_port();
  std::vector<int> agent_ports;
  for (size_t i = 0; i < layout.worker_hosts.size(); ++i) {
    int p = layout.worker_port(i);
    agent_ports.push_back(p != 0 ? p : pick_free_port());
  }

  auto addr_of = [&](const std::string& host) {
    return opts.local ? std::string("127.0.0.1") : host;
  };

  // Shared tree first; every daemon and the state file live under it.
  fs::create_directories(plan.staging);
  fs::create_directories(plan.history_dir());
  fs::create_directories(plan.logs_dir());
  fs::create_directories(plan.jobs_dir());
  fs::create_directories(plan.input);
  fs::create_directories(plan.output);
  if (opts.local) {
    for (const auto& d : plan.local_dirs()) fs::create_directories(d);
  }

  Config snapshot = cfg;
  snapshot.rm_port = rm_port;
  snapshot.history_port = history_port;
  const std::string conf_path = plan.staging + "/cluster.conf";
  write_file_atomic(conf_path, snapshot.to_string());

  const std::string bin = state.bin_dir;
  std::string workers_csv;
  for (const auto& w : layout.worker_hosts) {
    if (!workers_csv.empty()) workers_csv += ",";
    workers_csv += w;
  }

  std::vector<LaunchSpec> started;
  auto rollback = [&]() {
    info("provision failed, rolling back");
    for (auto& spec : started) {
      if (opts.local) {
        kill_recorded_pid(spec.ref, nullptr);
      } else {
        std::string cmd = "if [ -f " + shell_quote(spec.ref.pidfile) + " ]; then kill $(cat " +
                          shell_quote(spec.ref.pidfile) + ") 2>/dev/null; fi";
        remote_run(cfg, spec.ref.host, cmd, nullptr);
      }
    }
    std::error_code ec;
    fs::remove_all(plan.shared_job_root, ec);
    if (opts.local) fs::remove_all(plan.local_job_root, ec);
  };

  try {
    // Resource manager on the first host.
    LaunchSpec rm_spec;
    rm_spec.ref = {"rm", layout.rm_host, addr_of(layout.rm_host), rm_port, 0,
                   plan.rm_log + "/rm.pid", plan.rm_log + "/rm.log"};
    rm_spec.log_dir = plan.rm_log;
    rm_spec.command = shell_quote(bin + "/ephemyarn-rm") + " --config " +
                      shell_quote(conf_path) + " --port " + std::to_string(rm_port) +
                      " --advertise " + shell_quote(rm_spec.ref.addr) + " --workers " +
                      shell_quote(workers_csv) + " --job-id " + shell_quote(state.job_id) +
                      " --staging " + shell_quote(plan.staging) + " --pidfile " +
                      shell_quote(rm_spec.ref.pidfile);
    start_daemon(cfg, opts.local, rm_spec);
    started.push_back(rm_spec);

    const std::int64_t ready_deadline = steady_now_ms() + cfg.ready_timeout_ms;
    while (!endpoint_answers(rm_spec.ref.addr, rm_port, "ClusterStatus")) {
      if (opts.local && try_reap(static_cast<pid_t>(rm_spec.ref.pid))) {
        fail_with_log("resource manager exited during startup", rm_spec.ref);
      }
      if (steady_now_ms() > ready_deadline) {
        fail_with_log("resource manager not reachable within ready_timeout_ms", rm_spec.ref);
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    state.rm = rm_spec.ref;
    info("negotiator up on " + layout.rm_host + ":" + std::to_string(rm_port));

    // History service on the second host.
    LaunchSpec hist_spec;
    hist_spec.ref = {"history", layout.history_host, addr_of(layout.history_host),
                     history_port, 0, plan.namenode_log + "/history.pid",
                     plan.namenode_log + "/history.log"};
    hist_spec.log_dir = plan.namenode_log;
    hist_spec.command = shell_quote(bin + "/ephemyarn-history") + " --staging " +
                        shell_quote(plan.staging) + " --port " +
                        std::to_string(history_port) + " --pidfile " +
                        shell_quote(hist_spec.ref.pidfile);
    start_daemon(cfg, opts.local, hist_spec);
    started.push_back(hist_spec);
    state.history = hist_spec.ref;

    // Agents on the remaining hosts.
    for (size_t i = 0; i < layout.worker_hosts.size(); ++i) {
      const std::string& host = layout.worker_hosts[i];
      LaunchSpec agent;
      std::string work_root = plan.agent_work_dir(host);
      agent.ref = {"agent", host, addr_of(host), agent_ports[i], 0,
                   work_root + ".pid", work_root + ".log"};
      agent.log_dir = plan.local_job_root + "/agents";
      agent.command = shell_quote(bin + "/ephemyarn-agent") + " --config " +
                      shell_quote(conf_path) + " --rm " +
                      shell_quote(rm_spec.ref.addr + ":" + std::to_string(rm_port)) +
                      " --host " + shell_quote(host) + " --port " +
                      std::to_string(agent_ports[i]) + " --local-root " +
                      shell_quote(work_root) + " --staging " + shell_quote(plan.staging) +
                      " --pidfile " + shell_quote(agent.ref.pidfile);
      start_daemon(cfg, opts.local, agent);
      started.push_back(agent);
      state.agents.push_back(agent.ref);
    }

    // Readiness: every agent registered, history service answering.
    MessageClient rm_client(state.rm.addr, rm_port);
    for (;;) {
      if (steady_now_ms() > ready_deadline) {
        throw Error(ErrorCode::ClusterUnavailable,
                    "agents did not all register within ready_timeout_ms");
      }
      if (opts.local) {
        for (auto& spec : started) {
          if (try_reap(static_cast<pid_t>(spec.ref.pid))) {
            fail_with_log(spec.ref.role + " on " + spec.ref.host + " exited during startup",
                          spec.ref);
          }
        }
      }
      json status = rm_client.request({{"type", "ClusterStatus"}});
      if (status.value("ok", false) &&
          status.value("alive", 0) == static_cast<int>(layout.worker_hosts.size()) &&
          endpoint_answers(hist_spec.ref.addr, history_port, "Ping")) {
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }

    state.config_text = snapshot.to_string();
    state.save(plan.state_file());
  } catch (...) {
    rollback();
    throw;
  }

  ProvisionResult result;
  result.state_path = plan.state_file();
  result.state = state;
  result.wall_ms = steady_now_ms() - t0;
  info("cluster " + state.job_id + " ready: " + std::to_string(layout.worker_hosts.size()) +
       " agents, state file " + result.state_path);
  return result;
}

RunResult run_job(const std::string& state_path, const JobSpec& spec_in) {
  const std::int64_t t0 = steady_now_ms();
  ClusterStateFile state = ClusterStateFile::load(state_path);
  Config cfg = state.config();
  DirectoryPlan plan = state.plan(cfg);

  JobSpec spec = spec_in;
  spec.validate();
  if (fs::exists(spec.output)) {
    throw Error(ErrorCode::OutputExists, "output path already exists: " + spec.output);
  }

  // The AM reads the spec from the shared staging area.
  std::string spec_path = plan.jobs_dir() + "/" + spec.name + "-" +
                          std::to_string(now_ms()) + ".job";
  write_file_atomic(spec_path, spec.to_string());

  std::string am_command =
      shell_quote(state.bin_dir + "/ephemyarn-am") + " --job " + shell_quote(spec_path);

  MessageClient rm(state.rm.addr, state.rm.port);
  json submit_reply;
  try {
    submit_reply = rm.request({{"type", "SubmitApplication"},
                               {"name", spec.name},
                               {"am_command", am_command}});
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ClusterUnavailable) {
      throw Error(ErrorCode::ClusterUnavailable,
                  "cluster " + state.job_id + " is not answering; was it torn down?");
    }
    throw;
  }
  throw_if_error(submit_reply);
  std::string app_id = submit_reply.value("app_id", "");
  info("submitted " + spec.name + " as " + app_id);

  std::string last_state;
  std::int64_t unreachable_since = 0;
  for (;;) {
    std::this_thread::sleep_for(
        std::chrono::milliseconds(std::max<std::int64_t>(100, cfg.heartbeat_interval_ms)));
    json status;
    try {
      status = rm.request({{"type", "ApplicationStatus"}, {"app_id", app_id}});
      unreachable_since = 0;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ClusterUnavailable) throw;
      std::int64_t now = steady_now_ms();
      if (unreachable_since == 0) unreachable_since = now;
      if (now - unreachable_since > cfg.node_timeout_ms) {
        throw Error(ErrorCode::ClusterUnavailable,
                    "lost contact with the negotiator while waiting for " + app_id);
      }
      continue;
    }
    throw_if_error(status);
    std::string st = status.value("state", "");
    if (st != last_state) {
      info(app_id + " " + st);
      last_state = st;
    }
    if (st == "finished" || st == "failed") {
      RunResult result;
      result.record = ApplicationRecord::from_json(status["record"]);
      result.state_terminal_ok = st == "finished";
      result.wall_ms = steady_now_ms() - t0;
      if (!result.state_terminal_ok && !result.record.diagnostics.empty()) {
        info(app_id + " diagnostics: " + result.record.diagnostics);
      }
      return result;
    }
  }
}

TeardownReport teardown(const std::string& state_path) {
  TeardownReport report;
  const std::int64_t t0 = steady_now_ms();
  if (!fs::exists(state_path)) {
    report.performed = false;
    report.ok = true;
    return report;
  }
  ClusterStateFile state = ClusterStateFile::load(state_path);
  Config cfg = state.config();
  DirectoryPlan plan = state.plan(cfg);
  report.performed = true;

  // Protocol path: the negotiator drains the agents, then exits by itself.
  bool rm_confirmed = false;
  try {
    json reply = try_request(state.rm.addr, state.rm.port, {{"type", "Teardown"}});
    if (reply.value("ok", false)) {
      const std::int64_t deadline =
          steady_now_ms() + cfg.kill_grace_ms + cfg.node_timeout_ms + 5000;
      while (steady_now_ms() < deadline) {
        if (!endpoint_answers(state.rm.addr, state.rm.port, "ClusterStatus")) {
          rm_confirmed = true;
          break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      }
    }
  } catch (const Error&) {
    // Already gone; fall through to the kill path for stragglers.
  }
  if (!rm_confirmed && endpoint_answers(state.rm.addr, state.rm.port, "ClusterStatus")) {
    report.issues.push_back("negotiator did not exit after the teardown directive");
  }

  try {
    try_request(state.history.addr, state.history.port, {{"type", "Shutdown"}});
  } catch (const Error&) {
  }

  // Kill fallback and local-root removal, per node.
  if (state.mode == "local") {
    std::vector<DaemonRef> all = state.agents;
    all.push_back(state.rm);
    all.push_back(state.history);
    for (const auto& d : all) kill_recorded_pid(d, &report.issues);
    // Reap daemons this same process spawned (in-process provision, e.g.
    // the bench harness) so they do not linger as zombie children.
    for (const auto& d : all) {
      if (d.pid <= 0) continue;
      const std::int64_t reap_deadline = steady_now_ms() + 2000;
      while (!try_reap(static_cast<pid_t>(d.pid)) && steady_now_ms() < reap_deadline) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      }
    }
    std::error_code ec;
    fs::remove_all(plan.local_job_root, ec);
    if (ec) report.issues.push_back("could not remove " + plan.local_job_root);
  } else {
    std::vector<DaemonRef> all = state.agents;
    all.push_back(state.rm);
    all.push_back(state.history);
    for (const auto& d : all) {
      std::string cmd = "if [ -f " + shell_quote(d.pidfile) + " ]; then kill $(cat " +
                        shell_quote(d.pidfile) + ") 2>/dev/null; sleep 1; kill -9 $(cat " +
                        shell_quote(d.pidfile) + ") 2>/dev/null; fi; rm -rf " +
                        shell_quote(plan.local_job_root);
      std::string err;
      if (!remote_run(cfg, d.host, cmd, &err)) {
        report.issues.push_back("unreachable: " + d.host + " (" + err + ")");
      }
    }
  }

  // Prune shared staging; history records and collected logs stay.
  std::error_code ec;
  std::vector<fs::path> prune;
  for (const auto& entry : fs::directory_iterator(plan.staging, ec)) {
    std::string name = entry.path().filename().string();
    if (name == "history" || name == "logs") continue;
    prune.push_back(entry.path());
  }
  for (const auto& path : prune) {
    fs::remove_all(path, ec);
    if (ec) report.issues.push_back("could not prune " + path.string());
  }
  for (const std::string& dir : {plan.input, plan.output}) {
    if (fs::is_directory(dir, ec) && fs::is_empty(dir, ec)) fs::remove(dir, ec);
  }

  report.ok = report.issues.empty();
  report.wall_ms = steady_now_ms() - t0;
  info("cluster " + state.job_id + (report.ok ? " torn down" : " torn down with issues"));
  return report;
}

}  // namespace ephemyarn
