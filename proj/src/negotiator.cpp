#include "ephemyarn/negotiator.hpp"

#include <algorithm>
#include <chrono>

#include "ephemyarn/util.hpp"

namespace ephemyarn {

namespace {

constexpr const char* kContainerStateNames[] = {
    "requested", "allocated", "launching", "running", "completed", "failed", "killed",
};

json container_reply_entry(const Container& c) {
  json e{{"id", c.id},
         {"app_id", c.app_id},
         {"state", container_state_name(c.state)},
         {"tag", c.tag}};
  if (c.exit_code) e["exit_code"] = *c.exit_code;
  if (!c.diagnostics.empty()) e["diagnostics"] = c.diagnostics;
  return e;
}

}  // namespace

const char* container_state_name(ContainerState s) {
  return kContainerStateNames[static_cast<int>(s)];
}

ContainerState container_state_from_name(const std::string& name) {
  for (int i = 0; i < 7; ++i) {
    if (name == kContainerStateNames[i]) return static_cast<ContainerState>(i);
  }
  throw Error(ErrorCode::Protocol, "unknown container state '" + name + "'");
}

bool container_state_terminal(ContainerState s) {
  return s == ContainerState::completed || s == ContainerState::failed ||
         s == ContainerState::killed;
}

ClusterState::ClusterState(Config cfg, std::vector<std::string> expected_workers,
                           std::string rm_endpoint, std::string job_id, HistoryStore* history,
                           TraceFn trace)
    : cfg_(std::move(cfg)),
      expected_workers_(std::move(expected_workers)),
      rm_endpoint_(std::move(rm_endpoint)),
      job_id_(std::move(job_id)),
      history_(history),
      trace_fn_(std::move(trace)),
      start_ms_(now_ms()) {}

void ClusterState::trace(const json& event) const {
  if (trace_fn_) trace_fn_(event);
}

ClusterState::AppInfo& ClusterState::app_or_throw(const std::string& app_id) {
  auto it = apps_.find(app_id);
  if (it == apps_.end()) throw Error(ErrorCode::NotFound, "unknown application " + app_id);
  return it->second;
}

const ClusterState::AppInfo& ClusterState::app_or_throw(const std::string& app_id) const {
  auto it = apps_.find(app_id);
  if (it == apps_.end()) throw Error(ErrorCode::NotFound, "unknown application " + app_id);
  return it->second;
}

json ClusterState::register_node(const std::string& host, ResourceProfile capacity,
                                 std::int64_t now) {
  std::lock_guard<std::mutex> lk(mu_);
  if (std::find(expected_workers_.begin(), expected_workers_.end(), host) ==
      expected_workers_.end()) {
    throw Error(ErrorCode::UnknownNode, "host '" + host + "' is not part of this allocation");
  }
  NodeInfo* node = nullptr;
  for (auto& n : nodes_) {
    if (n.host == host) {
      node = &n;
      break;
    }
  }
  if (node && node->alive) {
    throw Error(ErrorCode::AlreadyRegistered, "node '" + host + "' is already registered");
  }
  if (!node) {
    nodes_.push_back({});
    node = &nodes_.back();
    node->host = host;
  }
  // A returning node starts from a clean slate: its previous containers
  // were already failed when it was marked lost.
  node->capacity = capacity;
  node->used = {};
  node->live_containers.clear();
  node->pending_directives.clear();
  node->last_heartbeat_ms = now;
  node->alive = true;
  node->ever_registered = true;
  trace({{"event", "node_registered"},
         {"host", host},
         {"memory_mb", capacity.memory_mb},
         {"vcores", capacity.vcores}});
  run_scheduler(now);
  json reply = ok_reply("RegisterAck");
  reply["heartbeat_interval_ms"] = cfg_.heartbeat_interval_ms;
  reply["node_timeout_ms"] = cfg_.node_timeout_ms;
  reply["kill_grace_ms"] = cfg_.kill_grace_ms;
  reply["stop"] = draining_;
  return reply;
}

json ClusterState::heartbeat(const std::string& host, const json& container_statuses,
                             bool drained, std::int64_t now) {
  std::lock_guard<std::mutex> lk(mu_);
  NodeInfo* node = nullptr;
  for (auto& n : nodes_) {
    if (n.host == host) {
      node = &n;
      break;
    }
  }
  if (!node || !node->alive) {
    throw Error(ErrorCode::ReRegisterRequired,
                "node '" + host + "' is not registered with this resource manager");
  }
  node->last_heartbeat_ms = now;

  if (container_statuses.is_array()) {
    for (const auto& st : container_statuses) {
      auto id = st.value("id", std::string());
      auto it = containers_.find(id);
      if (it == containers_.end()) continue;  // stale report from an old incarnation
      Container& c = it->second;
      ContainerState reported = container_state_from_name(st.value("state", "running"));
      if (reported == ContainerState::running) {
        if (!container_state_terminal(c.state)) {
          c.state = ContainerState::running;
          auto& app = apps_.at(c.app_id);
          if (c.id == app.record.am_container && app.record.state == AppState::submitted) {
            app.record.state = AppState::am_running;
          }
        }
      } else if (container_state_terminal(reported)) {
        std::optional<int> exit_code;
        if (st.contains("exit_code") && st["exit_code"].is_number()) {
          exit_code = st["exit_code"].get<int>();
        }
        apply_container_terminal(c, reported, exit_code, st.value("diagnostics", ""), now);
      }
    }
  }

  if (drained) {
    node->alive = false;
    auto live = node->live_containers;
    for (const auto& cid : live) {
      auto it = containers_.find(cid);
      if (it != containers_.end()) {
        apply_container_terminal(it->second, ContainerState::killed, std::nullopt,
                                 "node agent drained", now);
      }
    }
    node->live_containers.clear();
    node->used = {};
    node->pending_directives.clear();
    trace({{"event", "node_drained"}, {"host", host}});
    json reply = ok_reply("HeartbeatReply");
    reply["launch"] = json::array();
    reply["kill"] = json::array();
    reply["stop"] = true;
    return reply;
  }

  run_scheduler(now);
  return build_heartbeat_reply(*node);
}

json ClusterState::build_heartbeat_reply(NodeInfo& node) {
  json launch = json::array();
  json kill = json::array();
  while (!node.pending_directives.empty()) {
    json d = std::move(node.pending_directives.front());
    node.pending_directives.pop_front();
    if (d.value("action", "") == "kill") {
      kill.push_back({{"id", d["id"]}});
    } else {
      d.erase("action");
      launch.push_back(std::move(d));
    }
  }
  for (const auto& l : launch) {
    auto it = containers_.find(l.value("id", std::string()));
    if (it != containers_.end() && it->second.state == ContainerState::allocated) {
      it->second.state = ContainerState::launching;
    }
  }
  json reply = ok_reply("HeartbeatReply");
  reply["launch"] = std::move(launch);
  reply["kill"] = std::move(kill);
  reply["stop"] = draining_;
  return reply;
}

void ClusterState::run_scheduler(std::int64_t now) {
  if (queue_.empty()) return;

  std::vector<ScheduleRequest> requests;
  requests.reserve(queue_.size());
  for (const auto& batch : queue_) {
    requests.push_back(
        {batch.app_id, batch.profile, static_cast<std::int64_t>(batch.units.size())});
  }
  std::vector<ScheduleNode> view;
  std::vector<size_t> view_index;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].alive) continue;
    view.push_back({nodes_[i].host, nodes_[i].capacity, nodes_[i].used});
    view_index.push_back(i);
  }
  if (view.empty()) return;

  auto placements = schedule_step(requests, view);
  for (const auto& p : placements) {
    PendingBatch& batch = queue_[p.request_index];
    UnitPayload unit = std::move(batch.units.front());
    batch.units.pop_front();

    AppInfo& app = apps_.at(batch.app_id);
    std::int64_t seq = ++next_container_seq_[batch.app_id];
    std::string cid = batch.app_id + "-c-" + std::to_string(seq);

    Container c;
    c.id = cid;
    c.app_id = batch.app_id;
    c.node = p.host;
    c.resource = p.profile;
    c.command = std::move(unit.command);
    c.env = std::move(unit.env);
    c.tag = std::move(unit.tag);
    c.state = ContainerState::allocated;

    NodeInfo& node = nodes_[view_index[p.node_index]];
    node.used += p.profile;
    node.live_containers.insert(cid);

    json env = json::object();
    for (const auto& [k, v] : c.env) env[k] = v;
    node.pending_directives.push_back({{"action", "launch"},
                                       {"id", cid},
                                       {"app_id", c.app_id},
                                       {"memory_mb", p.profile.memory_mb},
                                       {"vcores", p.profile.vcores},
                                       {"command", c.command},
                                       {"env", std::move(env)},
                                       {"tag", c.tag}});
    app.pending_allocated.push_back({{"id", cid},
                                     {"host", p.host},
                                     {"memory_mb", p.profile.memory_mb},
                                     {"vcores", p.profile.vcores},
                                     {"tag", c.tag}});
    if (c.tag == "am") app.record.am_container = cid;
    trace({{"event", "container_assigned"},
           {"container", cid},
           {"app_id", c.app_id},
           {"host", p.host},
           {"memory_mb", p.profile.memory_mb},
           {"vcores", p.profile.vcores},
           {"tag", c.tag},
           {"t_ms", now}});
    containers_.emplace(cid, std::move(c));
  }
  while (!queue_.empty() && queue_.front().units.empty()) queue_.pop_front();
}

void ClusterState::apply_container_terminal(Container& c, ContainerState state,
                                            std::optional<int> exit_code,
                                            const std::string& diagnostics, std::int64_t now) {
  if (container_state_terminal(c.state)) return;  // exactly-once
  c.state = state;
  c.exit_code = exit_code;
  c.diagnostics = diagnostics;

  for (auto& n : nodes_) {
    if (n.host != c.node) continue;
    if (n.live_containers.erase(c.id)) n.used -= c.resource;
    break;
  }
  trace({{"event", "container_released"},
         {"container", c.id},
         {"app_id", c.app_id},
         {"host", c.node},
         {"state", container_state_name(state)},
         {"t_ms", now}});

  auto ait = apps_.find(c.app_id);
  if (ait == apps_.end()) return;
  AppInfo& app = ait->second;
  app.record.container_history.push_back({c.id, c.node, c.resource,
                                          container_state_name(state),
                                          exit_code.value_or(-1), c.tag});
  app.pending_completed.push_back(container_reply_entry(c));

  bool app_was_terminal = app_state_terminal(app.record.state);
  if (c.id == app.record.am_container) {
    if (!app_was_terminal) {
      std::string why = "application master exited unexpectedly";
      if (exit_code) why += " (exit " + std::to_string(*exit_code) + ")";
      if (!diagnostics.empty()) why += ": " + diagnostics;
      finish_app(app, AppState::failed, why, now);
    } else if (history_) {
      // AM already reported the outcome; refresh the stored record now
      // that its own container has closed.
      history_->append(app.record);
    }
  } else if (app_was_terminal && history_) {
    history_->append(app.record);
  }
}

void ClusterState::finish_app(AppInfo& app, AppState state, const std::string& diagnostics,
                              std::int64_t now) {
  if (app_state_terminal(app.record.state)) return;
  app.record.state = state;
  app.record.finish_time_ms = now;
  if (app.record.diagnostics.empty()) app.record.diagnostics = diagnostics;

  // Anything still running for this app gets a kill directive; the agents
  // report the terminal state back on their next heartbeat.
  for (auto& [cid, c] : containers_) {
    if (c.app_id != app.record.app_id || container_state_terminal(c.state)) continue;
    if (cid == app.record.am_container) continue;
    for (auto& n : nodes_) {
      if (n.host == c.node && n.alive) {
        n.pending_directives.push_back({{"action", "kill"}, {"id", cid}});
      }
    }
  }
  // Drop whatever is still queued for it.
  for (auto& batch : queue_) {
    if (batch.app_id == app.record.app_id) batch.units.clear();
  }
  while (!queue_.empty() && queue_.front().units.empty()) queue_.pop_front();

  if (history_) history_->append(app.record);
  trace({{"event", "application_finished"},
         {"app_id", app.record.app_id},
         {"state", app_state_name(state)},
         {"t_ms", now}});
}

void ClusterState::mark_node_lost(NodeInfo& node, std::int64_t now, const std::string& why) {
  node.alive = false;
  node.pending_directives.clear();
  trace({{"event", "node_lost"}, {"host", node.host}, {"why", why}, {"t_ms", now}});
  auto live = node.live_containers;
  for (const auto& cid : live) {
    auto it = containers_.find(cid);
    if (it != containers_.end()) {
      apply_container_terminal(it->second, ContainerState::failed, std::nullopt,
                               "node lost: " + why, now);
    }
  }
  node.live_containers.clear();
  node.used = {};
}

json ClusterState::submit_application(const std::string& name, const std::string& am_command,
                                      const std::map<std::string, std::string>& extra_env,
                                      std::int64_t now) {
  std::lock_guard<std::mutex> lk(mu_);
  if (draining_) {
    throw Error(ErrorCode::ClusterUnavailable, "cluster is shutting down");
  }
  bool any_alive = std::any_of(nodes_.begin(), nodes_.end(),
                               [](const NodeInfo& n) { return n.alive; });
  if (!any_alive) {
    throw Error(ErrorCode::NoWorkers, "no node agents are registered");
  }

  std::string app_id = "app-" + std::to_string(start_ms_) + "-" +
                       std::to_string(next_app_seq_++);
  AppInfo& app = apps_[app_id];
  app.record.app_id = app_id;
  app.record.name = name;
  app.record.state = AppState::submitted;
  app.record.submit_time_ms = now;

  UnitPayload unit;
  unit.command = am_command;
  unit.tag = "am";
  unit.env = extra_env;
  unit.env["EPHEMYARN_RM"] = rm_endpoint_;
  unit.env["EPHEMYARN_APP_ID"] = app_id;
  unit.env["EPHEMYARN_JOB_ID"] = job_id_;
  unit.env["EPHEMYARN_HEARTBEAT_MS"] = std::to_string(cfg_.heartbeat_interval_ms);
  unit.env["EPHEMYARN_MAX_ATTEMPTS"] = std::to_string(cfg_.max_attempts);
  unit.env["EPHEMYARN_MAP_MEMORY_MB"] = std::to_string(cfg_.map_memory_mb);
  unit.env["EPHEMYARN_REDUCE_MEMORY_MB"] = std::to_string(cfg_.reduce_memory_mb);
  unit.env["EPHEMYARN_MAP_JAVA_OPTS"] = cfg_.map_heap_opt;

  std::vector<UnitPayload> units;
  units.push_back(std::move(unit));
  enqueue_request(app, {cfg_.am_resource_mb, 1}, std::move(units), now);
  trace({{"event", "application_submitted"}, {"app_id", app_id}, {"name", name}, {"t_ms", now}});

  run_scheduler(now);
  json reply = ok_reply("SubmitApplicationReply");
  reply["app_id"] = app_id;
  reply["state"] = app_state_name(app.record.state);
  return reply;
}

json ClusterState::enqueue_request(AppInfo& app, const ResourceProfile& requested,
                                   std::vector<UnitPayload> units, std::int64_t now) {
  ResourceProfile profile = normalize_request(requested, cfg_);
  PendingBatch batch;
  batch.app_id = app.record.app_id;
  batch.profile = profile;
  for (auto& u : units) batch.units.push_back(std::move(u));
  trace({{"event", "request_enqueued"},
         {"app_id", app.record.app_id},
         {"memory_mb", profile.memory_mb},
         {"vcores", profile.vcores},
         {"count", batch.units.size()},
         {"t_ms", now}});
  queue_.push_back(std::move(batch));
  return {{"memory_mb", profile.memory_mb}, {"vcores", profile.vcores}};
}

json ClusterState::allocate(const std::string& app_id, const json& asks, std::int64_t now) {
  std::lock_guard<std::mutex> lk(mu_);
  AppInfo& app = app_or_throw(app_id);
  if (app_state_terminal(app.record.state)) {
    throw Error(ErrorCode::NotFound, "application " + app_id + " is already finished");
  }

  if (asks.is_array() && !asks.empty()) {
    // Validate the whole request before enqueueing any of it.
    for (const auto& ask : asks) {
      ResourceProfile req{ask.value("memory_mb", std::int64_t{0}),
                          ask.value("vcores", std::int64_t{0})};
      normalize_request(req, cfg_);
      if (!ask.contains("units") || !ask["units"].is_array() || ask["units"].empty()) {
        throw Error(ErrorCode::Protocol, "ask without units");
      }
    }
    for (const auto& ask : asks) {
      ResourceProfile req{ask.value("memory_mb", std::int64_t{0}),
                          ask.value("vcores", std::int64_t{0})};
      std::vector<UnitPayload> units;
      for (const auto& u : ask["units"]) {
        UnitPayload up;
        up.command = u.value("command", "");
        up.tag = u.value("tag", "");
        if (u.contains("env") && u["env"].is_object()) {
          for (auto it = u["env"].begin(); it != u["env"].end(); ++it) {
            up.env[it.key()] = it.value().get<std::string>();
          }
        }
        units.push_back(std::move(up));
      }
      enqueue_request(app, req, std::move(units), now);
    }
    run_scheduler(now);
  }

  json reply = ok_reply("AllocateResponse");
  reply["allocated"] = json::array();
  while (!app.pending_allocated.empty()) {
    reply["allocated"].push_back(std::move(app.pending_allocated.front()));
    app.pending_allocated.pop_front();
  }
  reply["completed"] = json::array();
  while (!app.pending_completed.empty()) {
    reply["completed"].push_back(std::move(app.pending_completed.front()));
    app.pending_completed.pop_front();
  }
  return reply;
}

json ClusterState::finish_application(const json& msg, std::int64_t now) {
  std::lock_guard<std::mutex> lk(mu_);
  AppInfo& app = app_or_throw(msg.value("app_id", std::string()));
  if (app_state_terminal(app.record.state)) {
    app.finish_reported = true;
    return ok_reply("FinishApplicationReply");  // duplicate report, idempotent
  }
  app.finish_reported = true;
  if (msg.contains("counters") && msg["counters"].is_object()) {
    for (auto it = msg["counters"].begin(); it != msg["counters"].end(); ++it) {
      app.record.counters[it.key()] = it.value().get<std::int64_t>();
    }
  }
  app.record.map_ms = msg.value("map_ms", std::int64_t{0});
  app.record.reduce_ms = msg.value("reduce_ms", std::int64_t{0});
  bool success = msg.value("success", false);
  finish_app(app, success ? AppState::finished : AppState::failed,
             msg.value("diagnostics", ""), now);
  return ok_reply("FinishApplicationReply");
}

json ClusterState::application_status(const std::string& app_id) const {
  std::lock_guard<std::mutex> lk(mu_);
  const AppInfo& app = app_or_throw(app_id);
  json reply = ok_reply("ApplicationStatusReply");
  reply["record"] = app.record.to_json();
  reply["app_id"] = app_id;
  reply["state"] = app_state_name(app.record.state);
  return reply;
}

json ClusterState::cluster_status() const {
  std::lock_guard<std::mutex> lk(mu_);
  json nodes = json::array();
  int alive = 0;
  for (const auto& n : nodes_) {
    if (n.alive) ++alive;
    nodes.push_back({{"host", n.host},
                     {"alive", n.alive},
                     {"memory_mb", n.capacity.memory_mb},
                     {"vcores", n.capacity.vcores},
                     {"used_memory_mb", n.used.memory_mb},
                     {"used_vcores", n.used.vcores},
                     {"containers", n.live_containers.size()}});
  }
  json apps = json::array();
  for (const auto& [id, app] : apps_) {
    apps.push_back({{"app_id", id},
                    {"name", app.record.name},
                    {"state", app_state_name(app.record.state)}});
  }
  json reply = ok_reply("ClusterStatusReply");
  reply["job_id"] = job_id_;
  reply["expected_workers"] = expected_workers_;
  reply["registered"] = nodes_.size();
  reply["alive"] = alive;
  reply["draining"] = draining_;
  reply["nodes"] = std::move(nodes);
  reply["applications"] = std::move(apps);
  return reply;
}

bool ClusterState::all_registered() const {
  std::lock_guard<std::mutex> lk(mu_);
  size_t alive = 0;
  for (const auto& n : nodes_) {
    if (n.alive) ++alive;
  }
  return alive == expected_workers_.size();
}

void ClusterState::begin_teardown() {
  std::lock_guard<std::mutex> lk(mu_);
  if (draining_) return;
  draining_ = true;
  trace({{"event", "teardown_started"}});
}

bool ClusterState::sweep(std::int64_t now) {
  std::lock_guard<std::mutex> lk(mu_);
  for (auto& n : nodes_) {
    if (n.alive && now - n.last_heartbeat_ms > cfg_.node_timeout_ms) {
      mark_node_lost(n, now, "missed heartbeats for " +
                                 std::to_string(now - n.last_heartbeat_ms) + " ms");
    }
  }
  run_scheduler(now);

  if (!draining_) return false;
  bool any_alive = std::any_of(nodes_.begin(), nodes_.end(),
                               [](const NodeInfo& n) { return n.alive; });
  if (any_alive) return false;
  if (!done_) {
    for (auto& [id, app] : apps_) {
      finish_app(app, AppState::failed, "cluster torn down before the application finished",
                 now);
    }
    done_ = true;
    trace({{"event", "teardown_complete"}, {"t_ms", now}});
  }
  return done_;
}

// ---------------------------------------------------------------------------

RmServer::RmServer(Config cfg, std::vector<std::string> expected_workers,
                   std::string advertise_host, std::string job_id, std::string history_dir,
                   ClusterState::TraceFn trace)
    : cfg_(std::move(cfg)),
      expected_workers_(std::move(expected_workers)),
      advertise_host_(std::move(advertise_host)),
      job_id_(std::move(job_id)),
      trace_(std::move(trace)) {
  history_ = std::make_unique<HistoryStore>(history_dir);
  server_ = std::make_unique<MessageServer>(cfg_.rm_port,
                                            [this](const json& msg) { return handle(msg); });
}

RmServer::~RmServer() { stop(); }

void RmServer::start() {
  server_->start();
  std::string endpoint = advertise_host_ + ":" + std::to_string(server_->port());
  {
    std::lock_guard<std::mutex> lk(done_mu_);
    state_ = std::make_unique<ClusterState>(cfg_, expected_workers_, endpoint, job_id_,
                                            history_.get(), trace_);
  }
  done_cv_.notify_all();
  sweeper_ = std::thread([this] { sweep_loop(); });
}

void RmServer::sweep_loop() {
  std::unique_lock<std::mutex> lk(done_mu_);
  while (!stopping_ && !done_) {
    done_cv_.wait_for(lk, std::chrono::milliseconds(cfg_.heartbeat_interval_ms));
    if (stopping_) break;
    lk.unlock();
    bool finished = state_->sweep(now_ms());
    lk.lock();
    if (finished) {
      done_ = true;
      done_cv_.notify_all();
    }
  }
}

json RmServer::handle(const json& msg) {
  {
    std::unique_lock<std::mutex> lk(done_mu_);
    done_cv_.wait(lk, [this] { return state_ != nullptr || stopping_.load(); });
  }
  if (!state_) {
    return error_reply("Reply", ErrorCode::ClusterUnavailable, "resource manager is stopping");
  }
  const std::string type = msg.value("type", "");
  const std::int64_t now = now_ms();
  if (type == "RegisterNode") {
    ResourceProfile cap{msg.value("memory_mb", std::int64_t{0}),
                        msg.value("vcores", std::int64_t{0})};
    return state_->register_node(msg.value("host", ""), cap, now);
  }
  if (type == "Heartbeat") {
    return state_->heartbeat(msg.value("host", ""), msg.value("containers", json::array()),
                             msg.value("drained", false), now);
  }
  if (type == "ContainerStatus") {
    // Urgent single-container push; same handling as a heartbeat carrying
    // one status so the reply can piggyback fresh directives.
    json statuses = json::array();
    if (msg.contains("container")) statuses.push_back(msg["container"]);
    return state_->heartbeat(msg.value("host", ""), statuses, false, now);
  }
  if (type == "SubmitApplication") {
    std::map<std::string, std::string> env;
    if (msg.contains("env") && msg["env"].is_object()) {
      for (auto it = msg["env"].begin(); it != msg["env"].end(); ++it) {
        env[it.key()] = it.value().get<std::string>();
      }
    }
    return state_->submit_application(msg.value("name", "app"), msg.value("am_command", ""),
                                      env, now);
  }
  if (type == "ApplicationStatus") {
    return state_->application_status(msg.value("app_id", ""));
  }
  if (type == "AllocateRequest") {
    return state_->allocate(msg.value("app_id", ""), msg.value("asks", json::array()), now);
  }
  if (type == "FinishApplication") {
    return state_->finish_application(msg, now);
  }
  if (type == "ClusterStatus") {
    return state_->cluster_status();
  }
  if (type == "Teardown") {
    state_->begin_teardown();
    return ok_reply("TeardownReply");
  }
  if (type == "QueryHistory") {
    json reply = ok_reply("QueryHistoryReply");
    if (msg.contains("app_id")) {
      reply["record"] = history_->query(msg["app_id"].get<std::string>()).to_json();
    } else {
      json records = json::array();
      for (const auto& r : history_->list()) records.push_back(r.to_json());
      reply["records"] = std::move(records);
    }
    return reply;
  }
  throw Error(ErrorCode::Protocol, "unknown message type '" + type + "'");
}

void RmServer::stop() {
  {
    std::lock_guard<std::mutex> lk(done_mu_);
    if (stopping_) return;
    stopping_ = true;
  }
  done_cv_.notify_all();
  if (sweeper_.joinable()) sweeper_.join();
  server_->stop();
}

void RmServer::wait() {
  std::unique_lock<std::mutex> lk(done_mu_);
  done_cv_.wait(lk, [this] { return done_ || stopping_.load(); });
}

}  // namespace ephemyarn
