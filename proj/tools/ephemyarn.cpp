#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ephemyarn/allocation.hpp"
#include "ephemyarn/bench.hpp"
#include "ephemyarn/cluster.hpp"
#include "ephemyarn/config.hpp"
#include "ephemyarn/errors.hpp"
#include "ephemyarn/history.hpp"
#include "ephemyarn/protocol.hpp"
#include "ephemyarn/util.hpp"

using namespace ephemyarn;
namespace fs = std::filesystem;

namespace {

Config load_config(const std::string& flag_path) {
  std::string path = flag_path;
  if (path.empty()) path = getenv_opt("EPHEMYARN_CONFIG").value_or("");
  if (path.empty()) return Config{};
  std::string warn;
  Config cfg = Config::from_file(path, &warn);
  if (!warn.empty()) std::fprintf(stderr, "warning: %s\n", warn.c_str());
  return cfg;
}

NodeAllocation resolve_allocation(const Config& cfg, const std::string& hostfile,
                                  const std::string& from_env, int local_n,
                                  std::int64_t slots, bool* local) {
  int sources = (!hostfile.empty() ? 1 : 0) + (!from_env.empty() ? 1 : 0) +
                (local_n > 0 ? 1 : 0);
  if (sources != 1) {
    throw Error(ErrorCode::EmptyAllocation,
                "give exactly one allocation source: --hostfile, --from-env or --local");
  }
  *local = local_n > 0;
  if (local_n > 0) return local_allocation(local_n, slots);
  if (!hostfile.empty()) return parse_hostfile(read_file(hostfile));
  std::map<std::string, std::string> env;
  for (const auto& name : {cfg.lsf_hosts_var, cfg.slurm_nodelist_var, cfg.slurm_tasks_var}) {
    if (auto v = getenv_opt(name)) env[name] = *v;
  }
  EnvFlavor flavor;
  if (from_env == "lsf") {
    flavor = EnvFlavor::lsf;
  } else if (from_env == "slurm") {
    flavor = EnvFlavor::slurm;
  } else {
    throw Error(ErrorCode::MalformedEntry, "--from-env wants lsf or slurm, got '" + from_env + "'");
  }
  return read_env_allocation(env, flavor, cfg);
}

void print_record(const ApplicationRecord& rec) {
  std::fprintf(stderr, "application %s (%s): %s\n", rec.app_id.c_str(), rec.name.c_str(),
               app_state_name(rec.state));
  if (!rec.diagnostics.empty()) std::fprintf(stderr, "  diagnostics: %s\n", rec.diagnostics.c_str());
  if (rec.map_ms || rec.reduce_ms) {
    std::fprintf(stderr, "  map %lld ms, reduce %lld ms\n",
                 static_cast<long long>(rec.map_ms), static_cast<long long>(rec.reduce_ms));
  }
  for (const auto& [k, v] : rec.counters) {
    std::fprintf(stderr, "  %s=%lld\n", k.c_str(), static_cast<long long>(v));
  }
}

/// `ephemyarn history` works against a live state file, a staging
/// directory, or a bare history directory left behind by teardown.
std::string resolve_history_dir(const std::string& path) {
  if (fs::is_regular_file(path)) {
    ClusterStateFile state = ClusterStateFile::load(path);
    return state.plan(state.config()).history_dir();
  }
  if (fs::is_directory(path + "/history")) return path + "/history";
  return path;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ephemeral YARN-style cluster wrapper for batch allocations"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path,
                 "cluster config file (default: $EPHEMYARN_CONFIG, else built-ins)");

  std::string hostfile, from_env, job_id, state_path, job_path, output_dir, app_id;
  int local_n = 0;
  std::int64_t slots = 4;

  auto* prov = app.add_subcommand("provision", "stand an ephemeral cluster up");
  prov->add_option("--hostfile", hostfile, "scheduler hostfile (hostname [slots] lines)");
  prov->add_option("--from-env", from_env, "read the allocation from lsf or slurm env vars");
  prov->add_option("--local", local_n, "simulate N nodes on this machine");
  prov->add_option("--slots", slots, "slots per simulated local node");
  prov->add_option("--job-id", job_id, "cluster instance id (default: generated)");

  auto* run = app.add_subcommand("run", "run a jobspec on a provisioned cluster");
  run->add_option("state", state_path, "cluster state file from provision")->required();
  run->add_option("--job", job_path, "jobspec file")->required();
  run->add_option("--output", output_dir, "override the jobspec output directory");

  auto* down = app.add_subcommand("teardown", "stop daemons and clean up");
  down->add_option("state", state_path, "cluster state file from provision")->required();

  auto* hist = app.add_subcommand("history", "inspect job history records");
  hist->add_option("path", state_path, "state file, staging dir, or history dir")->required();
  hist->add_option("--app", app_id, "show one application id in full");

  std::string mode, plan_text, bench_input, bench_out = "bench-out";
  BenchOptions bopts;
  auto* bench = app.add_subcommand("bench", "scaling benchmarks over local clusters");
  bench->add_option("mode", mode, "overhead | teragen | terasort | full")->required();
  bench->add_option("--local", plan_text, "node-count plan: N, a..b, or n1,n2,...")->required();
  bench->add_option("--rows", bopts.rows, "dataset rows");
  bench->add_option("--mappers", bopts.mappers, "mapper count (fixed)");
  bench->add_option("--reducers", bopts.reducers, "reducer count");
  bench->add_option("--ratio", bopts.ratio, "mappers per allocated core (overrides --mappers)");
  bench->add_option("--repeats", bopts.repeats, "runs per node count");
  bench->add_option("--seed", bopts.seed, "teragen seed");
  bench->add_option("--slots", bopts.slots_per_node, "slots per simulated node");
  bench->add_option("--input", bench_input, "existing dataset (terasort mode)");
  bench->add_option("--out", bench_out, "report directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prov->parsed()) {
      Config cfg = load_config(config_path);
      bool local = false;
      NodeAllocation alloc =
          resolve_allocation(cfg, hostfile, from_env, local_n, slots, &local);
      ProvisionOptions popts;
      popts.cfg = cfg;
      popts.alloc = alloc;
      popts.job_id = job_id;
      popts.local = local;
      ProvisionResult res = provision(popts);
      std::fprintf(stderr, "cluster %s ready: %zu hosts, %lld ms\n",
                   res.state.job_id.c_str(), alloc.hosts.size(),
                   static_cast<long long>(res.wall_ms));
      std::printf("%s\n", res.state_path.c_str());
      return 0;
    }

    if (run->parsed()) {
      JobSpec spec = JobSpec::from_file(job_path);
      if (!output_dir.empty()) spec.output = output_dir;
      spec.validate();
      RunResult res = run_job(state_path, spec);
      print_record(res.record);
      return res.succeeded() ? 0 : 1;
    }

    if (down->parsed()) {
      TeardownReport report = teardown(state_path);
      if (!report.performed) {
        std::fprintf(stderr, "no cluster state at %s, nothing to do\n", state_path.c_str());
        return 0;
      }
      for (const auto& issue : report.issues) {
        std::fprintf(stderr, "teardown issue: %s\n", issue.c_str());
      }
      std::fprintf(stderr, "teardown %s in %lld ms\n", report.ok ? "clean" : "with issues",
                   static_cast<long long>(report.wall_ms));
      return report.ok ? 0 : 1;
    }

    if (hist->parsed()) {
      HistoryStore store(resolve_history_dir(state_path));
      if (!app_id.empty()) {
        std::printf("%s\n", store.query(app_id).to_json().dump(2).c_str());
      } else {
        for (const auto& rec : store.list()) {
          std::printf("%s  %-8s  %s\n", rec.app_id.c_str(), app_state_name(rec.state),
                      rec.name.c_str());
        }
      }
      return 0;
    }

    if (bench->parsed()) {
      bopts.mode = mode;
      bopts.node_counts = parse_plan(plan_text);
      bopts.input = bench_input;
      bopts.out_dir = bench_out;
      bopts.cfg = load_config(config_path);
      return scaling_run(bopts);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ephemyarn: %s\n", e.what());
    return 1;
  }
  return 0;
}
