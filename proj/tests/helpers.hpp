#pragma once

#include <stdlib.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ephemyarn/config.hpp"

namespace testutil {

/// Self-deleting scratch directory.
struct TempDir {
  std::string path;

  TempDir() {
    std::string tmpl =
        (std::filesystem::temp_directory_path() / "ephemyarn-test-XXXXXX").string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
    path = buf.data();
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string sub(const std::string& name) const { return path + "/" + name; }
};

/// Ephemeral ports and short timeouts so suites can run side by side and
/// failures surface quickly. Resource numbers are bookkeeping only.
inline ephemyarn::Config fast_config(const std::string& root) {
  ephemyarn::Config cfg;
  cfg.rm_port = 0;
  cfg.history_port = 0;
  cfg.nm_base_port = 0;
  cfg.local_root = root + "/local";
  cfg.shared_root = root + "/shared";
  cfg.heartbeat_interval_ms = 50;
  cfg.node_timeout_ms = 1000;
  cfg.kill_grace_ms = 500;
  cfg.ready_timeout_ms = 15000;
  return cfg;
}

inline std::string tool_dir() {
#ifdef EPHEMYARN_TOOL_DIR
  return EPHEMYARN_TOOL_DIR;
#else
  return ".";
#endif
}

/// Live processes (not this one, not zombies) whose command line mentions
/// `needle`. Zero after teardown means no daemon or container survived.
inline int live_processes_mentioning(const std::string& needle) {
  namespace fs = std::filesystem;
  int count = 0;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator("/proc", ec)) {
    std::string name = entry.path().filename().string();
    if (name.empty() || name.find_first_not_of("0123456789") != std::string::npos) continue;
    if (name == std::to_string(getpid())) continue;
    std::ifstream cmd(entry.path() / "cmdline", std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(cmd)), std::istreambuf_iterator<char>());
    if (data.empty()) continue;
    std::replace(data.begin(), data.end(), '\0', ' ');
    if (data.find(needle) != std::string::npos) ++count;
  }
  return count;
}

}  // namespace testutil
