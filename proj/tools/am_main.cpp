#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "ephemyarn/app_master.hpp"

using namespace ephemyarn;

int main(int argc, char** argv) {
  CLI::App app{"ephemyarn application master"};
  std::string job_path;
  app.add_option("--job", job_path, "jobspec file")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    JobSpec spec = JobSpec::from_file(job_path);
    spec.validate();
    AppMaster master(AppMaster::settings_from_env(), spec);
    return master.run();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ephemyarn-am: %s\n", e.what());
    return 2;
  }
}
