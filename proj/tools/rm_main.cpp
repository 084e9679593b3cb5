#include <unistd.h>

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ephemyarn/config.hpp"
#include "ephemyarn/negotiator.hpp"
#include "ephemyarn/util.hpp"

using namespace ephemyarn;

int main(int argc, char** argv) {
  CLI::App app{"ephemyarn resource negotiator daemon"};
  std::string config_path;
  std::string advertise = "127.0.0.1";
  std::string workers_csv;
  std::string job_id = "adhoc";
  std::string staging;
  std::string pidfile;
  int port = -1;
  app.add_option("--config", config_path, "cluster config file");
  app.add_option("--port", port, "listen port (0 picks a free one)");
  app.add_option("--advertise", advertise, "address agents and clients dial");
  app.add_option("--workers", workers_csv, "comma-separated expected worker hosts")->required();
  app.add_option("--job-id", job_id, "cluster instance id");
  app.add_option("--staging", staging, "shared staging directory")->required();
  app.add_option("--pidfile", pidfile, "write the daemon pid here");
  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg = config_path.empty() ? Config{} : Config::from_file(config_path);
    if (port >= 0) cfg.rm_port = port;
    cfg.validate();

    std::vector<std::string> workers;
    for (const auto& w : split(workers_csv, ',')) {
      if (!trim(w).empty()) workers.push_back(trim(w));
    }

    RmServer server(cfg, workers, advertise, job_id, staging + "/history");
    server.start();
    if (!pidfile.empty()) write_file(pidfile, std::to_string(getpid()) + "\n");
    std::fprintf(stderr, "negotiator listening on %s:%d\n", advertise.c_str(), server.port());
    server.wait();
    server.stop();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ephemyarn-rm: %s\n", e.what());
    return 1;
  }
  return 0;
}
