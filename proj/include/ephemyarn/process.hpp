#pragma once

#include <sys/types.h>

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace ephemyarn {

struct SpawnOptions {
  std::string command;  // run via /bin/sh -c
  std::string workdir;
  std::map<std::string, std::string> env;  // overlaid on the parent environment
  std::string stdout_path;
  std::string stderr_path;
  bool die_with_parent = true;  // false for daemons that outlive the launcher
};

struct ExitStatus {
  int code = 0;        // exit code, or 128+signal when killed by a signal
  bool signaled = false;
  int signal = 0;
};

/// Forks and execs the command in its own process group so the whole tree
/// can be signalled and accounted as one unit. The child dies with its
/// parent (PR_SET_PDEATHSIG). Throws Error(LaunchFailed) when the fork or
/// the pre-exec setup fails.
pid_t spawn_process(const SpawnOptions& opts);

/// Non-blocking reap. Returns the exit status once the direct child has
/// exited, std::nullopt while it is still running.
std::optional<ExitStatus> try_reap(pid_t pid);

/// Signals the whole process group.
void kill_group(pid_t pid, int sig);

/// Total resident set of every process in the group, in bytes, via a /proc
/// scan. Exited members count as zero; returns 0 when the group is gone.
std::int64_t group_rss_bytes(pid_t pgid);

/// True when the pid exists (not necessarily our child).
bool pid_alive(pid_t pid);

/// True when the pid exists and its command line contains `needle`. Used
/// before signalling recorded pids so a recycled pid is never killed.
bool pid_command_contains(pid_t pid, const std::string& needle);

}  // namespace ephemyarn
