#include "ephemyarn/process.hpp"

#include <dirent.h>
#include <fcntl.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

#include "ephemyarn/errors.hpp"

namespace ephemyarn {

namespace {

[[noreturn]] void child_fail(const char* what) {
  // Keep the child's failure visible in its stderr capture, then exit with
  // a distinctive code so the parent can tell setup failures from the
  // command's own exits.
  std::fprintf(stderr, "container setup failed: %s: %s\n", what, std::strerror(errno));
  _exit(127);
}

int open_sink(const std::string& path) {
  if (path.empty()) return open("/dev/null", O_WRONLY);
  return open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
}

}  // namespace

pid_t spawn_process(const SpawnOptions& opts) {
  pid_t pid = fork();
  if (pid < 0) {
    throw Error(ErrorCode::LaunchFailed, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    setpgid(0, 0);
    if (opts.die_with_parent) {
      prctl(PR_SET_PDEATHSIG, SIGKILL);
      if (getppid() == 1) _exit(127);  // parent died before prctl took effect
    }

    if (!opts.workdir.empty() && chdir(opts.workdir.c_str()) != 0) child_fail("chdir");

    int out = open_sink(opts.stdout_path);
    int err = open_sink(opts.stderr_path);
    if (out < 0 || err < 0) child_fail("open log");
    if (dup2(out, STDOUT_FILENO) < 0 || dup2(err, STDERR_FILENO) < 0) child_fail("dup2");
    if (out > STDERR_FILENO) close(out);
    if (err > STDERR_FILENO && err != out) close(err);

    int devnull = open("/dev/null", O_RDONLY);
    if (devnull >= 0) {
      dup2(devnull, STDIN_FILENO);
      if (devnull > STDERR_FILENO) close(devnull);
    }

    for (const auto& [k, v] : opts.env) setenv(k.c_str(), v.c_str(), 1);

    execl("/bin/sh", "sh", "-c", opts.command.c_str(), (char*)nullptr);
    child_fail("execl");
  }
  // Also set the group from the parent so an immediate kill_group cannot
  // race the child's own setpgid.
  setpgid(pid, pid);
  return pid;
}

std::optional<ExitStatus> try_reap(pid_t pid) {
  int status = 0;
  pid_t r = waitpid(pid, &status, WNOHANG);
  if (r == 0) return std::nullopt;
  ExitStatus es;
  if (r < 0) {
    // Already reaped elsewhere or never existed; report a generic failure.
    es.code = 127;
    return es;
  }
  if (WIFEXITED(status)) {
    es.code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    es.signaled = true;
    es.signal = WTERMSIG(status);
    es.code = 128 + es.signal;
  } else {
    return std::nullopt;  // stopped/continued, keep waiting
  }
  return es;
}

void kill_group(pid_t pid, int sig) {
  if (pid > 0) kill(-pid, sig);
}

std::int64_t group_rss_bytes(pid_t pgid) {
  static const std::int64_t page = sysconf(_SC_PAGESIZE);
  DIR* proc = opendir("/proc");
  if (!proc) return 0;
  std::int64_t total = 0;
  while (dirent* entry = readdir(proc)) {
    const char* name = entry->d_name;
    char* end = nullptr;
    long pid = std::strtol(name, &end, 10);
    if (end == name || *end != '\0' || pid <= 0) continue;

    std::ifstream stat("/proc/" + std::string(name) + "/stat");
    if (!stat) continue;
    std::string line;
    std::getline(stat, line);
    // Field 2 (comm) may contain spaces; parse from after its closing paren.
    auto paren = line.rfind(')');
    if (paren == std::string::npos) continue;
    std::istringstream rest(line.substr(paren + 1));
    std::string state;
    long ppid = 0, grp = 0, session = 0, tty = 0, tpgid = 0;
    unsigned long flags = 0, minflt = 0, cminflt = 0, majflt = 0, cmajflt = 0;
    unsigned long utime = 0, stime = 0;
    long cutime = 0, cstime = 0, prio = 0, nice = 0, threads = 0, itreal = 0;
    unsigned long long starttime = 0;
    unsigned long vsize = 0;
    long rss_pages = 0;
    rest >> state >> ppid >> grp >> session >> tty >> tpgid >> flags >> minflt >> cminflt >>
        majflt >> cmajflt >> utime >> stime >> cutime >> cstime >> prio >> nice >> threads >>
        itreal >> starttime >> vsize >> rss_pages;
    if (!rest || grp != pgid) continue;
    total += static_cast<std::int64_t>(rss_pages) * page;
  }
  closedir(proc);
  return total;
}

bool pid_alive(pid_t pid) {
  if (pid <= 0) return false;
  return kill(pid, 0) == 0 || errno == EPERM;
}

bool pid_command_contains(pid_t pid, const std::string& needle) {
  if (!pid_alive(pid)) return false;
  std::ifstream in("/proc/" + std::to_string(pid) + "/cmdline", std::ios::binary);
  if (!in) return false;
  std::string cmdline((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (auto& ch : cmdline) {
    if (ch == '\0') ch = ' ';
  }
  return cmdline.find(needle) != std::string::npos;
}

}  // namespace ephemyarn
