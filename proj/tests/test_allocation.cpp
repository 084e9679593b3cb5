#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <string>

#include "ephemyarn/allocation.hpp"
#include "ephemyarn/config.hpp"
#include "ephemyarn/errors.hpp"

using namespace ephemyarn;

TEST_CASE("hostfile parsing merges repeats and honours slot counts") {
  NodeAllocation a = parse_hostfile(
      "# comment\n"
      "cstl001\n"
      "cstl001\n"
      "cstl002 16\n"
      "\n"
      "  cstl003   4  \n"
      "cstl002 2\n");
  REQUIRE(a.hosts.size() == 3);
  CHECK(a.hosts[0].hostname == "cstl001");
  CHECK(a.hosts[0].slots == 2);
  CHECK(a.hosts[1].hostname == "cstl002");
  CHECK(a.hosts[1].slots == 18);
  CHECK(a.hosts[2].hostname == "cstl003");
  CHECK(a.hosts[2].slots == 4);
  CHECK(a.total_cores == 24);
}

TEST_CASE("hostfile order is first-appearance order") {
  NodeAllocation a = parse_hostfile("b\na\nb\nc\n");
  REQUIRE(a.hosts.size() == 3);
  CHECK(a.hosts[0].hostname == "b");
  CHECK(a.hosts[1].hostname == "a");
  CHECK(a.hosts[2].hostname == "c");
}

TEST_CASE("hostfile rejects malformed entries") {
  CHECK_THROWS_AS(parse_hostfile("h1 0\n"), Error);
  CHECK_THROWS_AS(parse_hostfile("h1 -3\n"), Error);
  CHECK_THROWS_AS(parse_hostfile("h1 xyz\n"), Error);
  CHECK_THROWS_AS(parse_hostfile("h1 2 extra\n"), Error);
  try {
    parse_hostfile("h1 4\nh2 oops\n");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedEntry);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("empty hostfile is its own error") {
  try {
    parse_hostfile("# nothing\n\n");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyAllocation);
  }
}

TEST_CASE("to_hostfile round-trips") {
  NodeAllocation a = parse_hostfile("n1 3\nn2 1\nn3 16\n");
  NodeAllocation b = parse_hostfile(a.to_hostfile());
  CHECK(a == b);
}

TEST_CASE("slurm nodelist expansion") {
  CHECK(expand_slurm_nodelist("n1") == std::vector<std::string>{"n1"});
  CHECK(expand_slurm_nodelist("n[1-3]") ==
        std::vector<std::string>{"n1", "n2", "n3"});
  CHECK(expand_slurm_nodelist("n[01-03]") ==
        std::vector<std::string>{"n01", "n02", "n03"});
  CHECK(expand_slurm_nodelist("n[008-011]") ==
        std::vector<std::string>{"n008", "n009", "n010", "n011"});
  CHECK(expand_slurm_nodelist("a[1,5,9]") ==
        std::vector<std::string>{"a1", "a5", "a9"});
  CHECK(expand_slurm_nodelist("a[1-2,7],b3,c[10-11]") ==
        std::vector<std::string>{"a1", "a2", "a7", "b3", "c10", "c11"});
  CHECK_THROWS_AS(expand_slurm_nodelist(""), Error);
  CHECK_THROWS_AS(expand_slurm_nodelist("n["), Error);
  CHECK_THROWS_AS(expand_slurm_nodelist("n[3-1]"), Error);
  CHECK_THROWS_AS(expand_slurm_nodelist("n[a-b]"), Error);
  CHECK_THROWS_AS(expand_slurm_nodelist("n]"), Error);
  CHECK_THROWS_AS(expand_slurm_nodelist("n[1]x"), Error);
}

TEST_CASE("lsf environment allocation") {
  Config cfg;
  std::map<std::string, std::string> env;
  env["LSB_HOSTS"] = "h1 h1 h1 h1 h2 h2 h3";
  NodeAllocation a = read_env_allocation(env, EnvFlavor::lsf, cfg);
  REQUIRE(a.hosts.size() == 3);
  CHECK(a.hosts[0] == NodeAllocation::Host{"h1", 4});
  CHECK(a.hosts[1] == NodeAllocation::Host{"h2", 2});
  CHECK(a.hosts[2] == NodeAllocation::Host{"h3", 1});
  CHECK(a.total_cores == 7);

  CHECK_THROWS_AS(read_env_allocation({}, EnvFlavor::lsf, cfg), Error);
  env["LSB_HOSTS"] = "   ";
  try {
    read_env_allocation(env, EnvFlavor::lsf, cfg);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyAllocation);
  }
}

TEST_CASE("lsf respects a renamed hosts variable") {
  Config cfg;
  cfg.lsf_hosts_var = "MY_HOSTS";
  std::map<std::string, std::string> env{{"MY_HOSTS", "x y"}};
  NodeAllocation a = read_env_allocation(env, EnvFlavor::lsf, cfg);
  CHECK(a.hosts.size() == 2);
}

TEST_CASE("slurm environment allocation") {
  Config cfg;
  std::map<std::string, std::string> env;
  env["SLURM_JOB_NODELIST"] = "n[1-4]";
  env["SLURM_TASKS_PER_NODE"] = "16";
  NodeAllocation a = read_env_allocation(env, EnvFlavor::slurm, cfg);
  REQUIRE(a.hosts.size() == 4);
  for (const auto& h : a.hosts) CHECK(h.slots == 16);
  CHECK(a.total_cores == 64);

  env["SLURM_TASKS_PER_NODE"] = "2(x3),1";
  a = read_env_allocation(env, EnvFlavor::slurm, cfg);
  REQUIRE(a.hosts.size() == 4);
  CHECK(a.hosts[0].slots == 2);
  CHECK(a.hosts[1].slots == 2);
  CHECK(a.hosts[2].slots == 2);
  CHECK(a.hosts[3].slots == 1);

  env["SLURM_TASKS_PER_NODE"] = "2,1";
  CHECK_THROWS_AS(read_env_allocation(env, EnvFlavor::slurm, cfg), Error);
  env.erase("SLURM_TASKS_PER_NODE");
  try {
    read_env_allocation(env, EnvFlavor::slurm, cfg);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingEnv);
  }
}

TEST_CASE("role assignment is exhaustively correct for 3 to 64 hosts") {
  Config cfg;
  for (int n = 3; n <= 64; ++n) {
    std::string text;
    for (int i = 0; i < n; ++i) text += "host" + std::to_string(i) + " 4\n";
    NodeAllocation alloc = parse_hostfile(text);
    ClusterLayout layout = assign_roles(alloc, cfg);
    CHECK(layout.rm_host == "host0");
    CHECK(layout.history_host == "host1");
    REQUIRE(layout.worker_hosts.size() == static_cast<size_t>(n - 2));
    std::set<std::string> workers(layout.worker_hosts.begin(), layout.worker_hosts.end());
    CHECK(workers.size() == layout.worker_hosts.size());
    CHECK(workers.count(layout.rm_host) == 0);
    CHECK(workers.count(layout.history_host) == 0);
    for (int i = 2; i < n; ++i) {
      CHECK(layout.worker_hosts[static_cast<size_t>(i - 2)] == "host" + std::to_string(i));
    }
  }
}

TEST_CASE("small allocations need colocation") {
  Config cfg;
  NodeAllocation two = parse_hostfile("a 4\nb 4\n");
  try {
    assign_roles(two, cfg);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientNodes);
  }

  cfg.colocate_daemons = true;
  ClusterLayout layout = assign_roles(two, cfg);
  CHECK(layout.rm_host == "a");
  CHECK(layout.history_host == "b");
  CHECK(layout.worker_hosts == std::vector<std::string>{"a", "b"});

  NodeAllocation one = parse_hostfile("solo 8\n");
  layout = assign_roles(one, cfg);
  CHECK(layout.rm_host == "solo");
  CHECK(layout.history_host == "solo");
  CHECK(layout.worker_hosts == std::vector<std::string>{"solo"});
}

TEST_CASE("worker ports step from the base port") {
  Config cfg;
  cfg.nm_base_port = 21000;
  NodeAllocation a = parse_hostfile("r\nh\nw0\nw1\nw2\n");
  ClusterLayout layout = assign_roles(a, cfg);
  CHECK(layout.worker_port(0) == 21000);
  CHECK(layout.worker_port(2) == 21002);
  cfg.nm_base_port = 0;
  layout = assign_roles(a, cfg);
  CHECK(layout.worker_port(5) == 0);
}

TEST_CASE("directory plan splits local and shared trees by job id") {
  Config cfg;
  cfg.local_root = "/scratch/local";
  cfg.shared_root = "/lustre/shared";
  DirectoryPlan plan = plan_directories(cfg, "job-7");
  CHECK(plan.local_job_root == "/scratch/local/job-7");
  CHECK(plan.am_log == "/scratch/local/job-7/am_log");
  CHECK(plan.namenode_log == "/scratch/local/job-7/namenode_log");
  CHECK(plan.rm_log == "/scratch/local/job-7/rm_log");
  CHECK(plan.namenode_data == "/scratch/local/job-7/namenode_data");
  CHECK(plan.shared_job_root == "/lustre/shared/job-7");
  CHECK(plan.staging == "/lustre/shared/job-7/staging");
  CHECK(plan.input == "/lustre/shared/job-7/input");
  CHECK(plan.output == "/lustre/shared/job-7/output");
  CHECK(plan.history_dir() == plan.staging + "/history");
  CHECK(plan.logs_dir() == plan.staging + "/logs");
  CHECK(plan.state_file() == plan.staging + "/cluster.state");
  CHECK(plan.agent_work_dir("n5") == "/scratch/local/job-7/agents/n5");

  // Different job ids never share a directory.
  DirectoryPlan other = plan_directories(cfg, "job-8");
  auto dirs = plan.local_dirs();
  std::set<std::string> mine(dirs.begin(), dirs.end());
  for (const auto& d : other.local_dirs()) CHECK(mine.count(d) == 0);
}

TEST_CASE("directory plan rejects unusable roots and job ids") {
  Config cfg;
  SUBCASE("missing roots") {
    cfg.local_root = "";
    cfg.shared_root = "/s";
    CHECK_THROWS_AS(plan_directories(cfg, "j"), Error);
  }
  SUBCASE("nested roots") {
    cfg.local_root = "/data";
    cfg.shared_root = "/data/shared";
    try {
      plan_directories(cfg, "j");
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidRoots);
    }
    cfg.local_root = "/data/shared/deeper";
    CHECK_THROWS_AS(plan_directories(cfg, "j"), Error);
  }
  SUBCASE("equal roots") {
    cfg.local_root = "/same";
    cfg.shared_root = "/same/";
    CHECK_THROWS_AS(plan_directories(cfg, "j"), Error);
  }
  SUBCASE("sibling roots with a common prefix are fine") {
    cfg.local_root = "/data/local";
    cfg.shared_root = "/data/localshared";
    CHECK_NOTHROW(plan_directories(cfg, "j"));
  }
  SUBCASE("path-hostile job ids") {
    cfg.local_root = "/l";
    cfg.shared_root = "/s";
    CHECK_THROWS_AS(plan_directories(cfg, ""), Error);
    CHECK_THROWS_AS(plan_directories(cfg, ".."), Error);
    CHECK_THROWS_AS(plan_directories(cfg, "a/b"), Error);
    CHECK_NOTHROW(plan_directories(cfg, "run_2024-01.5"));
  }
}
