#include <unistd.h>

#include <csignal>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "ephemyarn/config.hpp"
#include "ephemyarn/node_agent.hpp"
#include "ephemyarn/util.hpp"

using namespace ephemyarn;

namespace {
NodeAgent* g_agent = nullptr;
extern "C" void on_term(int) {
  if (g_agent) g_agent->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ephemyarn node agent daemon"};
  std::string config_path;
  std::string rm_addr;
  std::string host;
  std::string local_root;
  std::string staging;
  std::string pidfile;
  int port = 0;
  std::int64_t capacity_mb = 0;
  std::int64_t vcores = 0;
  app.add_option("--config", config_path, "cluster config file");
  app.add_option("--rm", rm_addr, "resource manager host:port")->required();
  app.add_option("--host", host, "this node's name as the manager knows it")->required();
  app.add_option("--port", port, "agent lock port (0 picks a free one)");
  app.add_option("--capacity-mb", capacity_mb, "advertised memory, overrides config");
  app.add_option("--vcores", vcores, "advertised vcores, overrides config");
  app.add_option("--local-root", local_root, "local scratch root for container workdirs")
      ->required();
  app.add_option("--staging", staging, "shared staging directory")->required();
  app.add_option("--pidfile", pidfile, "write the daemon pid here");
  CLI11_PARSE(app, argc, argv);

  auto colon = rm_addr.rfind(':');
  std::int64_t rm_port = 0;
  if (colon == std::string::npos || !parse_int64(rm_addr.substr(colon + 1), rm_port)) {
    std::fprintf(stderr, "ephemyarn-agent: --rm wants host:port, got '%s'\n", rm_addr.c_str());
    return 1;
  }

  try {
    Config cfg = config_path.empty() ? Config{} : Config::from_file(config_path);
    if (capacity_mb > 0) cfg.node_capacity.memory_mb = capacity_mb;
    if (vcores > 0) cfg.node_capacity.vcores = vcores;
    cfg.validate();

    NodeAgent agent(cfg, host, port, rm_addr.substr(0, colon), static_cast<int>(rm_port),
                    local_root, staging);
    g_agent = &agent;
    std::signal(SIGTERM, on_term);
    std::signal(SIGINT, on_term);
    if (!pidfile.empty()) write_file(pidfile, std::to_string(getpid()) + "\n");
    int rc = agent.run();
    g_agent = nullptr;
    return rc;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ephemyarn-agent: %s\n", e.what());
    return 1;
  }
}
