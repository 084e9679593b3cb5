#include "ephemyarn/app_master.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "ephemyarn/errors.hpp"
#include "ephemyarn/util.hpp"

namespace fs = std::filesystem;

namespace ephemyarn {

JobSpec JobSpec::from_string(const std::string& text) {
  JobSpec spec;
  size_t lineno = 0;
  for (const auto& raw : split(text, '\n')) {
    ++lineno;
    std::string line = raw;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::MalformedEntry,
                  "job spec line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    auto as_int = [&](std::int64_t& out) {
      if (!parse_int64(value, out) || out < 0) {
        throw Error(ErrorCode::MalformedEntry,
                    "job spec line " + std::to_string(lineno) + ": bad number for " + key);
      }
    };
    if (key == "name") spec.name = value;
    else if (key == "input") spec.input = value;
    else if (key == "output") spec.output = value;
    else if (key == "mappers") as_int(spec.mappers);
    else if (key == "reducers") as_int(spec.reducers);
    else if (key == "map_command") spec.map_command = value;
    else if (key == "reduce_command") spec.reduce_command = value;
    else if (key == "map_memory_mb") as_int(spec.map_memory_mb);
    else if (key == "reduce_memory_mb") as_int(spec.reduce_memory_mb);
    else if (key == "map_vcores") as_int(spec.map_vcores);
    else if (key == "reduce_vcores") as_int(spec.reduce_vcores);
    else {
      throw Error(ErrorCode::MalformedEntry,
                  "job spec line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  return spec;
}

JobSpec JobSpec::from_file(const std::string& path) {
  return from_string(read_file(path));
}

std::string JobSpec::to_string() const {
  std::string out;
  out += "name=" + name + "\n";
  if (!input.empty()) out += "input=" + input + "\n";
  out += "output=" + output + "\n";
  out += "mappers=" + std::to_string(mappers) + "\n";
  out += "reducers=" + std::to_string(reducers) + "\n";
  out += "map_command=" + map_command + "\n";
  if (!reduce_command.empty()) out += "reduce_command=" + reduce_command + "\n";
  if (map_memory_mb > 0) out += "map_memory_mb=" + std::to_string(map_memory_mb) + "\n";
  if (reduce_memory_mb > 0) out += "reduce_memory_mb=" + std::to_string(reduce_memory_mb) + "\n";
  if (map_vcores != 1) out += "map_vcores=" + std::to_string(map_vcores) + "\n";
  if (reduce_vcores != 1) out += "reduce_vcores=" + std::to_string(reduce_vcores) + "\n";
  return out;
}

void JobSpec::validate() const {
  if (name.empty()) throw Error(ErrorCode::MalformedEntry, "job spec: name is required");
  if (output.empty()) throw Error(ErrorCode::MalformedEntry, "job spec: output is required");
  if (mappers < 1) throw Error(ErrorCode::MalformedEntry, "job spec: mappers must be >= 1");
  if (map_command.empty()) {
    throw Error(ErrorCode::MalformedEntry, "job spec: map_command is required");
  }
  if (reducers > 0 && reduce_command.empty()) {
    throw Error(ErrorCode::MalformedEntry,
                "job spec: reduce_command is required when reducers > 0");
  }
}

std::string substitute_placeholders(const std::string& tmpl,
                                    const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  size_t pos = 0;
  while (pos < tmpl.size()) {
    auto open = tmpl.find('{', pos);
    if (open == std::string::npos) {
      out.append(tmpl, pos, std::string::npos);
      break;
    }
    auto close = tmpl.find('}', open);
    if (close == std::string::npos) {
      out.append(tmpl, pos, std::string::npos);
      break;
    }
    out.append(tmpl, pos, open - pos);
    std::string key = tmpl.substr(open + 1, close - open - 1);
    auto it = values.find(key);
    if (it != values.end()) {
      out += it->second;
    } else {
      out.append(tmpl, open, close - open + 1);  // unknown: left verbatim
    }
    pos = close + 1;
  }
  return out;
}

AppMaster::Settings AppMaster::settings_from_env() {
  Settings s;
  auto need = [](const char* name) {
    auto v = getenv_opt(name);
    if (!v) throw Error(ErrorCode::MissingEnv, std::string(name) + " is not set");
    return *v;
  };
  std::string rm = need("EPHEMYARN_RM");
  auto colon = rm.rfind(':');
  std::int64_t port = 0;
  if (colon == std::string::npos || !parse_int64(rm.substr(colon + 1), port)) {
    throw Error(ErrorCode::MalformedEntry, "EPHEMYARN_RM must be host:port, got '" + rm + "'");
  }
  s.rm_host = rm.substr(0, colon);
  s.rm_port = static_cast<int>(port);
  s.app_id = need("EPHEMYARN_APP_ID");
  s.staging = need("EPHEMYARN_STAGING");
  std::int64_t n = 0;
  if (auto v = getenv_opt("EPHEMYARN_HEARTBEAT_MS"); v && parse_int64(*v, n)) s.heartbeat_ms = n;
  if (auto v = getenv_opt("EPHEMYARN_MAX_ATTEMPTS"); v && parse_int64(*v, n)) {
    s.max_attempts = static_cast<int>(n);
  }
  if (auto v = getenv_opt("EPHEMYARN_MAP_MEMORY_MB"); v && parse_int64(*v, n)) {
    s.default_map_memory_mb = n;
  }
  if (auto v = getenv_opt("EPHEMYARN_REDUCE_MEMORY_MB"); v && parse_int64(*v, n)) {
    s.default_reduce_memory_mb = n;
  }
  if (auto v = getenv_opt("EPHEMYARN_MAP_JAVA_OPTS")) s.map_java_opts = *v;
  if (auto v = getenv_opt("EPHEMYARN_RM_TIMEOUT_MS"); v && parse_int64(*v, n)) {
    s.rm_timeout_ms = n;
  }
  return s;
}

AppMaster::AppMaster(Settings settings, JobSpec spec)
    : s_(std::move(settings)), spec_(std::move(spec)) {
  rm_ = std::make_unique<MessageClient>(s_.rm_host, s_.rm_port);
  staged_output_ = s_.staging + "/jobs/" + s_.app_id + "/output_staged";
  shuffle_dir_ = s_.staging + "/shuffle/" + s_.app_id;
  events_path_ = s_.staging + "/logs/" + s_.app_id + "/am_events.ndjson";
}

void AppMaster::emit(json event) {
  event["seq"] = next_seq_++;
  event["t_ms"] = now_ms();
  std::ofstream out(events_path_, std::ios::app);
  out << event.dump() << "\n";
}

json AppMaster::allocate(const json& asks) {
  const std::int64_t deadline = steady_now_ms() + s_.rm_timeout_ms;
  for (;;) {
    try {
      json req{{"type", "AllocateRequest"}, {"app_id", s_.app_id}, {"asks", asks}};
      json reply = rm_->request(req);
      throw_if_error(reply);
      return reply;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ClusterUnavailable && steady_now_ms() < deadline) {
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
        continue;
      }
      throw;
    }
  }
}

std::string AppMaster::expand(const std::string& tmpl, std::int64_t task_index) const {
  return substitute_placeholders(
      tmpl, {{"TASK_INDEX", std::to_string(task_index)},
             {"INPUT", spec_.input},
             {"OUTPUT", staged_output_},
             {"STAGING", s_.staging},
             {"SHUFFLE", shuffle_dir_},
             {"NUM_MAPPERS", std::to_string(spec_.mappers)},
             {"NUM_REDUCERS", std::to_string(spec_.reducers)}});
}

void AppMaster::read_counters(const std::string& container_id) {
  std::ifstream in(s_.staging + "/counters/" + container_id);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::int64_t v = 0;
    if (parse_int64(trim(line.substr(eq + 1)), v)) {
      counters_[trim(line.substr(0, eq))] += v;
    }
  }
}

bool AppMaster::run_phase(const std::string& phase, std::vector<Task>& tasks,
                          const std::string& command_template, ResourceProfile profile,
                          std::string& fail_reason) {
  emit({{"event", "phase_started"},
        {"phase", phase},
        {"tasks", tasks.size()},
        {"memory_mb", profile.memory_mb},
        {"vcores", profile.vcores}});
  std::map<std::string, size_t> by_container;

  for (;;) {
    json units = json::array();
    for (auto& t : tasks) {
      if (t.state != TaskState::pending) continue;
      ++t.attempts;
      t.tag = phase + "_" + std::to_string(t.index) + "_a" + std::to_string(t.attempts);
      t.state = TaskState::waiting;
      json env = json::object();
      if (phase == "map" && !s_.map_java_opts.empty()) {
        env["EPHEMYARN_MAP_JAVA_OPTS"] = s_.map_java_opts;
      }
      units.push_back({{"command", expand(command_template, t.index)},
                       {"env", std::move(env)},
                       {"tag", t.tag}});
      emit({{"event", "task_requested"},
            {"phase", phase},
            {"task", t.index},
            {"attempt", t.attempts},
            {"tag", t.tag}});
    }
    json asks = json::array();
    if (!units.empty()) {
      asks.push_back({{"memory_mb", profile.memory_mb},
                      {"vcores", profile.vcores},
                      {"units", std::move(units)}});
    }

    json reply = allocate(asks);
    for (const auto& a : reply["allocated"]) {
      std::string tag = a.value("tag", "");
      for (size_t i = 0; i < tasks.size(); ++i) {
        if (tasks[i].tag == tag && tasks[i].state == TaskState::waiting) {
          tasks[i].container = a.value("id", "");
          by_container[tasks[i].container] = i;
          emit({{"event", "task_launched"},
                {"phase", phase},
                {"task", tasks[i].index},
                {"attempt", tasks[i].attempts},
                {"container", tasks[i].container},
                {"host", a.value("host", "")}});
          break;
        }
      }
    }
    for (const auto& c : reply["completed"]) {
      auto it = by_container.find(c.value("id", std::string()));
      if (it == by_container.end()) continue;
      Task& t = tasks[it->second];
      if (t.state != TaskState::waiting || t.container != c.value("id", std::string())) {
        continue;  // stale attempt
      }
      std::string state = c.value("state", "");
      if (state == "completed") {
        t.state = TaskState::succeeded;
        read_counters(t.container);
        emit({{"event", "task_succeeded"},
              {"phase", phase},
              {"task", t.index},
              {"attempt", t.attempts},
              {"container", t.container}});
      } else {
        std::string why = c.value("diagnostics", "");
        emit({{"event", "task_failed"},
              {"phase", phase},
              {"task", t.index},
              {"attempt", t.attempts},
              {"container", t.container},
              {"state", state},
              {"diagnostics", why}});
        if (t.attempts >= s_.max_attempts) {
          t.state = TaskState::failed;
          fail_reason = phase + " task " + std::to_string(t.index) + " failed after " +
                        std::to_string(t.attempts) + " attempts: " + why;
          return false;
        }
        t.state = TaskState::pending;
        emit({{"event", "task_retry"},
              {"phase", phase},
              {"task", t.index},
              {"next_attempt", t.attempts + 1}});
      }
    }

    bool all_done = true;
    for (const auto& t : tasks) {
      if (t.state != TaskState::succeeded) all_done = false;
    }
    if (all_done) {
      emit({{"event", "phase_completed"}, {"phase", phase}});
      return true;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(s_.heartbeat_ms));
  }
}

void AppMaster::report(bool success, const std::string& diagnostics) {
  json counters = json::object();
  for (const auto& [k, v] : counters_) counters[k] = v;
  json req{{"type", "FinishApplication"}, {"app_id", s_.app_id},    {"success", success},
           {"diagnostics", diagnostics},  {"counters", counters},   {"map_ms", map_ms_},
           {"reduce_ms", reduce_ms_}};
  json reply = rm_->request(req);
  throw_if_error(reply);
  emit({{"event", success ? "job_succeeded" : "job_failed"}, {"diagnostics", diagnostics}});
}

int AppMaster::run() {
  std::error_code ec;
  fs::create_directories(fs::path(events_path_).parent_path(), ec);
  try {
    spec_.validate();
    emit({{"event", "job_loaded"},
          {"name", spec_.name},
          {"mappers", spec_.mappers},
          {"reducers", spec_.reducers},
          {"input", spec_.input},
          {"output", spec_.output}});

    if (fs::exists(spec_.output)) {
      report(false, "OutputExists: output path already exists: " + spec_.output);
      return 0;
    }
    if (!spec_.input.empty()) {
      bool has_file = false;
      if (fs::is_directory(spec_.input, ec)) {
        for (const auto& e : fs::directory_iterator(spec_.input)) {
          if (e.is_regular_file()) {
            has_file = true;
            break;
          }
        }
      }
      if (!has_file) {
        report(false, "MissingInput: input path missing or empty: " + spec_.input);
        return 0;
      }
    }

    fs::create_directories(staged_output_);
    fs::create_directories(s_.staging + "/counters");
    if (spec_.reducers > 0) fs::create_directories(shuffle_dir_);

    std::vector<Task> maps(static_cast<size_t>(spec_.mappers));
    for (size_t i = 0; i < maps.size(); ++i) maps[i].index = static_cast<std::int64_t>(i);
    ResourceProfile map_profile{
        spec_.map_memory_mb > 0 ? spec_.map_memory_mb : s_.default_map_memory_mb,
        spec_.map_vcores};
    std::string why;
    std::int64_t t0 = now_ms();
    if (!run_phase("map", maps, spec_.map_command, map_profile, why)) {
      map_ms_ = now_ms() - t0;
      report(false, why);
      return 0;
    }
    map_ms_ = now_ms() - t0;
    emit({{"event", "barrier_reached"}, {"maps", spec_.mappers}});

    if (spec_.reducers > 0) {
      std::vector<Task> reduces(static_cast<size_t>(spec_.reducers));
      for (size_t i = 0; i < reduces.size(); ++i) {
        reduces[i].index = static_cast<std::int64_t>(i);
      }
      ResourceProfile reduce_profile{
          spec_.reduce_memory_mb > 0 ? spec_.reduce_memory_mb : s_.default_reduce_memory_mb,
          spec_.reduce_vcores};
      std::int64_t r0 = now_ms();
      if (!run_phase("reduce", reduces, spec_.reduce_command, reduce_profile, why)) {
        reduce_ms_ = now_ms() - r0;
        report(false, why);
        return 0;
      }
      reduce_ms_ = now_ms() - r0;
    }

    fs::create_directories(fs::path(spec_.output).parent_path(), ec);
    std::error_code rename_ec;
    fs::rename(staged_output_, spec_.output, rename_ec);
    if (rename_ec) {
      report(false, "OutputExists: could not move staged output into place: " +
                        rename_ec.message());
      return 0;
    }
    emit({{"event", "output_committed"}, {"output", spec_.output}});
    fs::remove_all(shuffle_dir_, ec);
    fs::remove_all(s_.staging + "/jobs/" + s_.app_id, ec);

    report(true, "");
    return 0;
  } catch (const std::exception& e) {
    try {
      report(false, std::string("application master error: ") + e.what());
      return 0;
    } catch (...) {
      emit({{"event", "job_failed"}, {"diagnostics", e.what()}});
      return 1;
    }
  }
}

}  // namespace ephemyarn
