#include "ephemyarn/node_agent.hpp"

#include <signal.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <thread>

#include "ephemyarn/util.hpp"

namespace fs = std::filesystem;

namespace ephemyarn {

NodeAgent::NodeAgent(Config cfg, std::string host, int port, std::string rm_host, int rm_port,
                     std::string work_root, std::string staging)
    : cfg_(std::move(cfg)),
      host_(std::move(host)),
      rm_host_(std::move(rm_host)),
      rm_port_(rm_port),
      work_root_(std::move(work_root)),
      staging_(std::move(staging)) {
  // Binding the agent port is the single-instance lock for this node: a
  // second agent fails the bind before it can register.
  lock_server_ = std::make_unique<MessageServer>(port, [this](const json& msg) {
    json reply = ok_reply(msg.value("type", "AgentStatus") + "Reply");
    reply["host"] = host_;
    reply["containers"] = containers_.size();
    return reply;
  });
  lock_server_->start();
  rm_ = std::make_unique<MessageClient>(rm_host_, rm_port_);
}

NodeAgent::~NodeAgent() {
  if (lock_server_) lock_server_->stop();
}

int NodeAgent::port() const { return lock_server_->port(); }

void NodeAgent::stop() { stop_requested_ = true; }

void NodeAgent::log(const std::string& line) {
  std::fprintf(stderr, "[agent %s] %s\n", host_.c_str(), line.c_str());
  std::fflush(stderr);
}

void NodeAgent::register_with_rm() {
  const std::int64_t deadline = steady_now_ms() + cfg_.ready_timeout_ms;
  for (;;) {
    try {
      json req{{"type", "RegisterNode"},
               {"host", host_},
               {"memory_mb", cfg_.node_capacity.memory_mb},
               {"vcores", cfg_.node_capacity.vcores},
               {"port", port()}};
      json reply = rm_->request(req);
      throw_if_error(reply);
      log("registered with resource manager at " + rm_host_ + ":" + std::to_string(rm_port_));
      return;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ClusterUnavailable && steady_now_ms() < deadline &&
          !stop_requested_) {
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
        continue;
      }
      throw;
    }
  }
}

void NodeAgent::launch(const json& directive) {
  LocalContainer c;
  c.id = directive.value("id", "");
  c.app_id = directive.value("app_id", "");
  c.tag = directive.value("tag", "");
  c.resource = {directive.value("memory_mb", std::int64_t{0}),
                directive.value("vcores", std::int64_t{0})};
  c.workdir = work_root_ + "/" + c.id;

  SpawnOptions opts;
  opts.command = directive.value("command", "");
  opts.workdir = c.workdir;
  opts.stdout_path = c.workdir + "/stdout.log";
  opts.stderr_path = c.workdir + "/stderr.log";
  if (directive.contains("env") && directive["env"].is_object()) {
    for (auto it = directive["env"].begin(); it != directive["env"].end(); ++it) {
      opts.env[it.key()] = it.value().get<std::string>();
    }
  }
  opts.env["EPHEMYARN_CONTAINER_ID"] = c.id;
  opts.env["EPHEMYARN_APP_ID"] = c.app_id;
  opts.env["EPHEMYARN_NODE"] = host_;
  opts.env["EPHEMYARN_TAG"] = c.tag;
  opts.env["EPHEMYARN_LOCAL_DIR"] = c.workdir;
  opts.env["EPHEMYARN_STAGING"] = staging_;

  try {
    std::error_code ec;
    fs::create_directories(c.workdir, ec);
    if (ec) throw Error(ErrorCode::LaunchFailed, "workdir: " + ec.message());
    c.pid = spawn_process(opts);
    c.state = ContainerState::running;
    log("launched " + c.id + " pid " + std::to_string(c.pid) + " (" + c.tag + ")");
  } catch (const Error& e) {
    c.state = ContainerState::failed;
    c.exit_code = 127;
    c.diagnostics = e.what();
    log("launch failed for " + c.id + ": " + e.what());
  }
  containers_[c.id] = std::move(c);
}

void NodeAgent::request_kill(LocalContainer& c, const std::string& reason,
                             std::int64_t steady_now) {
  if (container_state_terminal(c.state) || c.pid <= 0) return;
  if (c.term_sent_ms == 0) {
    c.kill_reason = reason;
    c.term_sent_ms = steady_now;
    kill_group(c.pid, SIGTERM);
    log("SIGTERM " + c.id + ": " + reason);
  }
}

void NodeAgent::finalize(LocalContainer& c, ContainerState state, int exit_code,
                         const std::string& diagnostics) {
  c.state = state;
  c.exit_code = exit_code;
  c.diagnostics = diagnostics;
  collect_logs(c);
  log(c.id + " -> " + container_state_name(state) + " (exit " + std::to_string(exit_code) +
      (diagnostics.empty() ? ")" : ") " + diagnostics));
}

void NodeAgent::collect_logs(LocalContainer& c) {
  if (c.logs_collected) return;
  c.logs_collected = true;
  std::error_code ec;
  fs::path dest = fs::path(staging_) / "logs" / c.app_id / c.id;
  fs::create_directories(dest, ec);
  if (ec) {
    log("log collection failed for " + c.id + ": " + ec.message());
    return;
  }
  for (const char* name : {"stdout.log", "stderr.log"}) {
    fs::path src = fs::path(c.workdir) / name;
    if (fs::exists(src, ec)) {
      fs::copy_file(src, dest / name, fs::copy_options::overwrite_existing, ec);
    }
  }
  json meta{{"id", c.id},
            {"app_id", c.app_id},
            {"tag", c.tag},
            {"node", host_},
            {"state", container_state_name(c.state)},
            {"exit_code", c.exit_code},
            {"diagnostics", c.diagnostics}};
  try {
    write_file((dest / "container.json").string(), meta.dump() + "\n");
  } catch (const Error&) {
  }
}

void NodeAgent::monitor_tick(std::int64_t steady_now) {
  for (auto& [id, c] : containers_) {
    if (container_state_terminal(c.state) || c.pid <= 0) continue;

    if (auto es = try_reap(c.pid)) {
      if (c.term_sent_ms != 0) {
        finalize(c, ContainerState::killed, es->code, c.kill_reason);
      } else if (es->code == 0) {
        finalize(c, ContainerState::completed, 0, "");
      } else {
        std::string why = es->signaled
                              ? "terminated by signal " + std::to_string(es->signal)
                              : "exited with code " + std::to_string(es->code);
        finalize(c, ContainerState::failed, es->code, why);
      }
      continue;
    }

    c.rss_bytes = group_rss_bytes(c.pid);
    std::int64_t limit_bytes = c.resource.memory_mb * 1024 * 1024;
    if (limit_bytes > 0 && c.rss_bytes > limit_bytes && c.term_sent_ms == 0) {
      request_kill(c,
                   "memory limit exceeded: rss " + std::to_string(c.rss_bytes / (1024 * 1024)) +
                       " MB > limit " + std::to_string(c.resource.memory_mb) + " MB",
                   steady_now);
    }
    if (c.term_sent_ms != 0 && steady_now - c.term_sent_ms > cfg_.kill_grace_ms) {
      kill_group(c.pid, SIGKILL);
      c.term_sent_ms = steady_now;  // re-arm so a stuck group keeps being hit
    }
  }
}

json NodeAgent::status_payload(bool include_running) {
  json statuses = json::array();
  for (auto& [id, c] : containers_) {
    if (container_state_terminal(c.state)) {
      if (c.reported) continue;
      json st{{"id", id},
              {"state", container_state_name(c.state)},
              {"exit_code", c.exit_code}};
      if (!c.diagnostics.empty()) st["diagnostics"] = c.diagnostics;
      statuses.push_back(std::move(st));
    } else if (include_running) {
      statuses.push_back({{"id", id}, {"state", "running"}});
    }
  }
  return statuses;
}

bool NodeAgent::process_reply(const json& reply) {
  if (reply.contains("launch") && reply["launch"].is_array()) {
    for (const auto& d : reply["launch"]) launch(d);
  }
  if (reply.contains("kill") && reply["kill"].is_array()) {
    for (const auto& d : reply["kill"]) {
      auto it = containers_.find(d.value("id", std::string()));
      if (it != containers_.end()) {
        request_kill(it->second, "killed by the resource manager", steady_now_ms());
      }
    }
  }
  return reply.value("stop", false);
}

bool NodeAgent::drain(std::int64_t steady_now) {
  log("draining");
  for (auto& [id, c] : containers_) {
    request_kill(c, "node agent shutting down", steady_now);
  }
  const std::int64_t deadline = steady_now + cfg_.kill_grace_ms + 2000;
  for (;;) {
    std::int64_t now = steady_now_ms();
    monitor_tick(now);
    bool any_live = false;
    for (auto& [id, c] : containers_) {
      if (!container_state_terminal(c.state)) any_live = true;
    }
    if (!any_live) break;
    if (now > deadline) {
      for (auto& [id, c] : containers_) {
        if (!container_state_terminal(c.state)) {
          kill_group(c.pid, SIGKILL);
          finalize(c, ContainerState::killed, 137, "killed at drain deadline");
        }
      }
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  try {
    json hb{{"type", "Heartbeat"},
            {"host", host_},
            {"containers", status_payload(false)},
            {"drained", true}};
    rm_->request(hb);
  } catch (const Error&) {
    // The manager may already be gone; draining proceeds regardless.
  }
  std::error_code ec;
  fs::remove_all(work_root_, ec);
  if (ec || fs::exists(work_root_)) {
    log("could not remove work root " + work_root_ +
        (ec ? ": " + ec.message() : ""));
    return false;
  }
  return true;
}

int NodeAgent::run() {
  try {
    register_with_rm();
  } catch (const Error& e) {
    log(std::string("registration failed: ") + e.what());
    return 1;
  }

  std::int64_t last_contact = steady_now_ms();
  bool stop = false;
  while (!stop && !stop_requested_) {
    std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.heartbeat_interval_ms));
    std::int64_t snow = steady_now_ms();
    monitor_tick(snow);

    // Terminal transitions are pushed immediately rather than waiting for
    // the next scheduled heartbeat.
    json urgent = status_payload(false);
    json statuses = urgent.empty() ? status_payload(true) : std::move(urgent);
    json hb{{"type", "Heartbeat"}, {"host", host_}, {"containers", statuses},
            {"drained", false}};
    json reply;
    try {
      reply = rm_->request(hb);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ClusterUnavailable) {
        if (steady_now_ms() - last_contact > cfg_.node_timeout_ms) {
          log("resource manager unreachable past the node timeout, shutting down");
          break;
        }
        continue;
      }
      log(std::string("heartbeat failed: ") + e.what());
      break;
    }
    last_contact = steady_now_ms();

    if (!reply.value("ok", true)) {
      if (error_code_from_name(reply.value("error", "")) == ErrorCode::ReRegisterRequired) {
        log("resource manager no longer knows this node, re-registering");
        std::int64_t rnow = steady_now_ms();
        for (auto& [id, c] : containers_) {
          request_kill(c, "re-registration", rnow);
        }
        drain(rnow);
        containers_.clear();
        try {
          register_with_rm();
          last_contact = steady_now_ms();
        } catch (const Error& e2) {
          log(std::string("re-registration failed: ") + e2.what());
          return 1;
        }
        continue;
      }
      log("heartbeat rejected: " + reply.value("message", ""));
      break;
    }

    // Containers whose terminal state was in this heartbeat are now known
    // to the manager.
    for (auto& [id, c] : containers_) {
      if (container_state_terminal(c.state)) c.reported = true;
    }
    stop = process_reply(reply);
  }

  bool clean = drain(steady_now_ms());
  log("stopped");
  return clean ? 0 : 1;
}

}  // namespace ephemyarn
