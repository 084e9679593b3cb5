#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ephemyarn/app_master.hpp"
#include "ephemyarn/cluster.hpp"
#include "ephemyarn/errors.hpp"
#include "ephemyarn/history.hpp"
#include "helpers.hpp"

using namespace ephemyarn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<json> read_events(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<json> events;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) events.push_back(json::parse(line));
  }
  return events;
}

bool has_event(const std::vector<json>& events, const std::string& name) {
  return std::any_of(events.begin(), events.end(), [&](const json& e) {
    return e.value("event", "") == name;
  });
}

}  // namespace

TEST_CASE("job spec parsing") {
  SUBCASE("full spec with comments and loose spacing") {
    JobSpec spec = JobSpec::from_string(
        "# nightly sort\n"
        "name = tsort\n"
        "input = /data/in\n"
        "output= /data/out\n"
        "\n"
        "mappers=8\n"
        "reducers = 4   # one per rack\n"
        "map_command = do map {TASK_INDEX}\n"
        "reduce_command=do reduce\n"
        "map_memory_mb = 4096\n"
        "reduce_memory_mb=2048\n"
        "map_vcores=2\n"
        "reduce_vcores = 3\n");
    CHECK(spec.name == "tsort");
    CHECK(spec.input == "/data/in");
    CHECK(spec.output == "/data/out");
    CHECK(spec.mappers == 8);
    CHECK(spec.reducers == 4);
    CHECK(spec.map_command == "do map {TASK_INDEX}");
    CHECK(spec.reduce_command == "do reduce");
    CHECK(spec.map_memory_mb == 4096);
    CHECK(spec.reduce_memory_mb == 2048);
    CHECK(spec.map_vcores == 2);
    CHECK(spec.reduce_vcores == 3);
    spec.validate();
  }

  SUBCASE("defaults for a minimal map-only spec") {
    JobSpec spec = JobSpec::from_string("name=x\noutput=/o\nmap_command=true\n");
    CHECK(spec.input.empty());
    CHECK(spec.mappers == 1);
    CHECK(spec.reducers == 0);
    CHECK(spec.reduce_command.empty());
    CHECK(spec.map_memory_mb == 0);
    CHECK(spec.reduce_memory_mb == 0);
    CHECK(spec.map_vcores == 1);
    CHECK(spec.reduce_vcores == 1);
    spec.validate();
  }

  SUBCASE("line without key=value") {
    try {
      JobSpec::from_string("name=x\nnot a pair\n");
      FAIL("expected MalformedEntry");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedEntry);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }

  SUBCASE("non-numeric and negative counts") {
    CHECK_THROWS_AS(JobSpec::from_string("mappers=abc\n"), Error);
    CHECK_THROWS_AS(JobSpec::from_string("mappers=-2\n"), Error);
    try {
      JobSpec::from_string("name=x\nreducers=many\n");
      FAIL("expected MalformedEntry");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("bad number for reducers") != std::string::npos);
    }
  }

  SUBCASE("unknown key is rejected with its line number") {
    try {
      JobSpec::from_string("name=x\noutput=/o\ncombiner=sum\n");
      FAIL("expected MalformedEntry");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedEntry);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
      CHECK(std::string(e.what()).find("combiner") != std::string::npos);
    }
  }

  SUBCASE("to_string round trip") {
    JobSpec full;
    full.name = "gen";
    full.input = "/in";
    full.output = "/out";
    full.mappers = 5;
    full.reducers = 2;
    full.map_command = "map it";
    full.reduce_command = "reduce it";
    full.map_memory_mb = 1024;
    full.reduce_memory_mb = 512;
    full.map_vcores = 2;
    full.reduce_vcores = 4;
    JobSpec back = JobSpec::from_string(full.to_string());
    CHECK(back.name == full.name);
    CHECK(back.input == full.input);
    CHECK(back.output == full.output);
    CHECK(back.mappers == full.mappers);
    CHECK(back.reducers == full.reducers);
    CHECK(back.map_command == full.map_command);
    CHECK(back.reduce_command == full.reduce_command);
    CHECK(back.map_memory_mb == full.map_memory_mb);
    CHECK(back.reduce_memory_mb == full.reduce_memory_mb);
    CHECK(back.map_vcores == full.map_vcores);
    CHECK(back.reduce_vcores == full.reduce_vcores);

    JobSpec minimal = JobSpec::from_string("name=m\noutput=/o\nmap_command=true\n");
    JobSpec minimal_back = JobSpec::from_string(minimal.to_string());
    CHECK(minimal_back.mappers == 1);
    CHECK(minimal_back.reducers == 0);
    CHECK(minimal_back.map_memory_mb == 0);
    CHECK(minimal_back.map_vcores == 1);
  }

  SUBCASE("from_file") {
    testutil::TempDir tmp;
    std::ofstream(tmp.sub("a.job")) << "name=filed\noutput=/o\nmap_command=true\n";
    JobSpec spec = JobSpec::from_file(tmp.sub("a.job"));
    CHECK(spec.name == "filed");
  }

  SUBCASE("validate requirements") {
    JobSpec ok;
    ok.name = "j";
    ok.output = "/o";
    ok.map_command = "true";
    ok.validate();

    JobSpec no_name = ok;
    no_name.name.clear();
    CHECK_THROWS_AS(no_name.validate(), Error);

    JobSpec no_output = ok;
    no_output.output.clear();
    CHECK_THROWS_AS(no_output.validate(), Error);

    JobSpec zero_maps = ok;
    zero_maps.mappers = 0;
    CHECK_THROWS_AS(zero_maps.validate(), Error);

    JobSpec no_map_cmd = ok;
    no_map_cmd.map_command.clear();
    CHECK_THROWS_AS(no_map_cmd.validate(), Error);

    JobSpec reducers_without_cmd = ok;
    reducers_without_cmd.reducers = 2;
    CHECK_THROWS_AS(reducers_without_cmd.validate(), Error);
    reducers_without_cmd.reduce_command = "true";
    reducers_without_cmd.validate();
  }
}

TEST_CASE("placeholder substitution") {
  std::map<std::string, std::string> values{
      {"TASK_INDEX", "3"}, {"INPUT", "/in"},      {"OUTPUT", "/out"},
      {"STAGING", "/stg"}, {"SHUFFLE", "/shuf"},  {"NUM_MAPPERS", "8"},
      {"NUM_REDUCERS", "4"}};

  CHECK(substitute_placeholders("sort {INPUT} {OUTPUT} -r {TASK_INDEX}/{NUM_REDUCERS}",
                                values) == "sort /in /out -r 3/4");
  CHECK(substitute_placeholders("{STAGING}{SHUFFLE}", values) == "/stg/shuf");
  CHECK(substitute_placeholders("no markers", values) == "no markers");
  CHECK(substitute_placeholders("", values).empty());

  SUBCASE("unknown keys survive verbatim") {
    CHECK(substitute_placeholders("keep {NOPE} and {TASK_INDEX}", values) ==
          "keep {NOPE} and 3");
    CHECK(substitute_placeholders("{}", values) == "{}");
  }

  SUBCASE("unterminated brace is passed through") {
    CHECK(substitute_placeholders("tail {OPEN", values) == "tail {OPEN");
    CHECK(substitute_placeholders("{NUM_MAPPERS} then {", values) == "8 then {");
  }

  SUBCASE("substituted values are not re-expanded") {
    std::map<std::string, std::string> tricky{{"A", "{B}"}, {"B", "x"}};
    CHECK(substitute_placeholders("{A}", tricky) == "{B}");
  }
}

TEST_CASE("local cluster runs jobs end to end") {
  testutil::TempDir tmp;
  Config cfg = testutil::fast_config(tmp.path);
  ProvisionOptions opts;
  opts.cfg = cfg;
  opts.alloc = local_allocation(3, 1);
  opts.job_id = "jobs-it";
  opts.local = true;
  opts.bin_dir = testutil::tool_dir();

  ProvisionResult prov = provision(opts);
  DirectoryPlan plan = prov.state.plan(prov.state.config());
  bool torn_down = false;
  auto cleanup = [&] {
    if (!torn_down) teardown(prov.state_path);
    torn_down = true;
  };

  try {
    // Map-only job: three tasks write their own output shard, a counter
    // file, and the heap opt the agent handed them.
    JobSpec hello;
    hello.name = "hello";
    hello.output = plan.output + "/hello";
    hello.mappers = 3;
    hello.map_command =
        "echo task {TASK_INDEX} > {OUTPUT}/part_{TASK_INDEX} && "
        "printf %s \"$EPHEMYARN_MAP_JAVA_OPTS\" > {OUTPUT}/opts_{TASK_INDEX} && "
        "echo rows_written=5 > \"$EPHEMYARN_STAGING/counters/$EPHEMYARN_CONTAINER_ID\"";
    RunResult hello_run = run_job(prov.state_path, hello);
    REQUIRE(hello_run.succeeded());
    CHECK(hello_run.record.state == AppState::finished);
    CHECK(hello_run.record.name == "hello");
    CHECK_FALSE(hello_run.record.app_id.empty());
    CHECK_FALSE(hello_run.record.am_container.empty());
    CHECK(hello_run.record.finish_time_ms >= hello_run.record.submit_time_ms);
    CHECK(hello_run.record.map_ms >= 0);
    CHECK(hello_run.record.counters.at("rows_written") == 15);
    for (int i = 0; i < 3; ++i) {
      CHECK(slurp(hello.output + "/part_" + std::to_string(i)) ==
            "task " + std::to_string(i) + "\n");
      CHECK(slurp(hello.output + "/opts_" + std::to_string(i)) == "-Xmx3072m");
    }
    // The record snapshot at finish time has the three task containers;
    // the master's own entry joins once its process exits.
    REQUIRE(hello_run.record.container_history.size() == 3);
    for (const auto& c : hello_run.record.container_history) {
      CHECK(c.state == "completed");
      CHECK(c.exit_code == 0);
      CHECK(c.tag.rfind("map_", 0) == 0);
    }
    // Staging leftovers for the app are gone once the output is committed.
    CHECK_FALSE(fs::exists(plan.jobs_dir() + "/" + hello_run.record.app_id));

    auto hello_events = read_events(plan.logs_dir() + "/" + hello_run.record.app_id +
                                    "/am_events.ndjson");
    REQUIRE_FALSE(hello_events.empty());
    CHECK(hello_events.front().value("event", "") == "job_loaded");
    CHECK(has_event(hello_events, "phase_started"));
    CHECK(has_event(hello_events, "barrier_reached"));
    CHECK(has_event(hello_events, "output_committed"));
    CHECK(has_event(hello_events, "job_succeeded"));
    int succeeded_events = 0;
    std::int64_t last_seq = -1;
    for (const auto& e : hello_events) {
      REQUIRE(e.contains("seq"));
      CHECK(e["seq"].get<std::int64_t>() > last_seq);
      last_seq = e["seq"].get<std::int64_t>();
      if (e.value("event", "") == "task_succeeded") ++succeeded_events;
    }
    CHECK(succeeded_events == 3);

    // First attempts fail, the retries succeed, the job still finishes.
    JobSpec flaky;
    flaky.name = "flaky";
    flaky.output = plan.output + "/flaky";
    flaky.mappers = 2;
    flaky.map_command =
        "case \"$EPHEMYARN_TAG\" in *_a1) exit 3;; esac; "
        "echo ok > {OUTPUT}/part_{TASK_INDEX}";
    RunResult flaky_run = run_job(prov.state_path, flaky);
    REQUIRE(flaky_run.succeeded());
    CHECK(slurp(flaky.output + "/part_0") == "ok\n");
    CHECK(slurp(flaky.output + "/part_1") == "ok\n");
    int failed_containers = 0;
    int completed_tasks = 0;
    for (const auto& c : flaky_run.record.container_history) {
      if (c.tag.rfind("map_", 0) != 0) continue;
      if (c.state == "failed") {
        ++failed_containers;
        CHECK(c.exit_code == 3);
        CHECK(c.tag.find("_a1") != std::string::npos);
      } else {
        ++completed_tasks;
        CHECK(c.tag.find("_a2") != std::string::npos);
      }
    }
    CHECK(failed_containers == 2);
    CHECK(completed_tasks == 2);
    auto flaky_events = read_events(plan.logs_dir() + "/" + flaky_run.record.app_id +
                                    "/am_events.ndjson");
    CHECK(has_event(flaky_events, "task_failed"));
    CHECK(has_event(flaky_events, "task_retry"));
    CHECK(has_event(flaky_events, "job_succeeded"));

    // Shuffle through the shared directory: two mappers scatter a line per
    // reducer, reducers gather their partition from both map outputs.
    JobSpec pipeline;
    pipeline.name = "pipeline";
    pipeline.output = plan.output + "/pipeline";
    pipeline.mappers = 2;
    pipeline.reducers = 2;
    pipeline.map_command =
        "mkdir -p {SHUFFLE}/map_{TASK_INDEX} && r=0; "
        "while [ $r -lt {NUM_REDUCERS} ]; do "
        "echo m{TASK_INDEX}r$r > {SHUFFLE}/map_{TASK_INDEX}/part_$r; r=$((r+1)); done";
    pipeline.reduce_command =
        "cat {SHUFFLE}/map_0/part_{TASK_INDEX} {SHUFFLE}/map_1/part_{TASK_INDEX} "
        "> {OUTPUT}/part-r-{TASK_INDEX}";
    RunResult pipe_run = run_job(prov.state_path, pipeline);
    REQUIRE(pipe_run.succeeded());
    CHECK(slurp(pipeline.output + "/part-r-0") == "m0r0\nm1r0\n");
    CHECK(slurp(pipeline.output + "/part-r-1") == "m0r1\nm1r1\n");
    CHECK(pipe_run.record.map_ms >= 0);
    CHECK(pipe_run.record.reduce_ms >= 0);
    // The per-app shuffle area is cleaned up with the success commit.
    CHECK_FALSE(fs::exists(plan.shuffle_dir() + "/" + pipe_run.record.app_id));

    auto pipe_events = read_events(plan.logs_dir() + "/" + pipe_run.record.app_id +
                                   "/am_events.ndjson");
    std::int64_t last_map_done = -1;
    std::int64_t first_reduce_req = -1;
    for (const auto& e : pipe_events) {
      std::string name = e.value("event", "");
      std::string phase = e.value("phase", "");
      std::int64_t seq = e["seq"].get<std::int64_t>();
      if (name == "task_succeeded" && phase == "map") {
        last_map_done = std::max(last_map_done, seq);
      }
      if (name == "task_requested" && phase == "reduce" &&
          (first_reduce_req < 0 || seq < first_reduce_req)) {
        first_reduce_req = seq;
      }
    }
    REQUIRE(last_map_done >= 0);
    REQUIRE(first_reduce_req >= 0);
    CHECK(last_map_done < first_reduce_req);

    // Task that keeps failing exhausts its attempts and fails the job.
    JobSpec doomed;
    doomed.name = "doomed";
    doomed.output = plan.output + "/doomed";
    doomed.mappers = 1;
    doomed.map_command = "exit 7";
    RunResult doomed_run = run_job(prov.state_path, doomed);
    CHECK_FALSE(doomed_run.succeeded());
    CHECK(doomed_run.record.state == AppState::failed);
    CHECK(doomed_run.record.diagnostics.find("map task 0") != std::string::npos);
    CHECK(doomed_run.record.diagnostics.find("after 3 attempts") != std::string::npos);
    CHECK_FALSE(fs::exists(doomed.output));
    auto doomed_events = read_events(plan.logs_dir() + "/" + doomed_run.record.app_id +
                                     "/am_events.ndjson");
    int retries = 0;
    for (const auto& e : doomed_events) {
      if (e.value("event", "") == "task_retry") ++retries;
    }
    CHECK(retries == 2);
    CHECK(has_event(doomed_events, "job_failed"));

    // Existing output is refused before anything is submitted.
    JobSpec clobber = hello;
    clobber.name = "clobber";
    try {
      run_job(prov.state_path, clobber);
      FAIL("expected OutputExists");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::OutputExists);
    }

    // Input precheck happens inside the application master.
    fs::create_directories(plan.input + "/empty");
    JobSpec starved;
    starved.name = "starved";
    starved.input = plan.input + "/empty";
    starved.output = plan.output + "/starved";
    starved.map_command = "cat {INPUT}/* > {OUTPUT}/part_0";
    RunResult starved_run = run_job(prov.state_path, starved);
    CHECK_FALSE(starved_run.succeeded());
    CHECK(starved_run.record.diagnostics.find("MissingInput") != std::string::npos);

    // Bad specs are rejected client-side.
    JobSpec invalid;
    invalid.name = "invalid";
    invalid.output = plan.output + "/invalid";
    CHECK_THROWS_AS(run_job(prov.state_path, invalid), Error);

    // Teardown leaves outputs, logs, and history; everything else goes.
    TeardownReport report = teardown(prov.state_path);
    torn_down = true;
    CHECK(report.performed);
    CHECK(report.ok);
    CHECK(report.issues.empty());
    CHECK_FALSE(fs::exists(plan.state_file()));
    CHECK_FALSE(fs::exists(plan.jobs_dir()));
    CHECK_FALSE(fs::exists(plan.shuffle_dir()));
    CHECK_FALSE(fs::exists(plan.local_job_root));
    CHECK(fs::exists(plan.history_dir()));
    CHECK(fs::exists(plan.logs_dir()));
    CHECK(slurp(hello.output + "/part_1") == "task 1\n");
    CHECK(slurp(pipeline.output + "/part-r-1") == "m0r1\nm1r1\n");

    HistoryStore store(plan.history_dir());
    auto records = store.list();
    REQUIRE(records.size() == 5);
    int finished = 0;
    int failed = 0;
    for (const auto& r : records) {
      if (r.state == AppState::finished) ++finished;
      if (r.state == AppState::failed) ++failed;
    }
    CHECK(finished == 3);
    CHECK(failed == 2);
    CHECK(store.query(doomed_run.record.app_id).state == AppState::failed);

    // By now the hello master's container has closed too, so the stored
    // record carries all four containers.
    ApplicationRecord hello_rec = store.query(hello_run.record.app_id);
    CHECK(hello_rec.container_history.size() == 4);
    int am_entries = 0;
    for (const auto& c : hello_rec.container_history) {
      if (c.tag == "am") {
        ++am_entries;
        CHECK(c.id == hello_rec.am_container);
        CHECK(c.state == "completed");
      }
    }
    CHECK(am_entries == 1);

    // A second teardown is a clean no-op, and jobs can no longer run.
    TeardownReport again = teardown(prov.state_path);
    CHECK_FALSE(again.performed);
    CHECK(again.ok);
    try {
      run_job(prov.state_path, hello);
      FAIL("expected ClusterUnavailable");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ClusterUnavailable);
    }
  } catch (...) {
    cleanup();
    throw;
  }
  cleanup();
}
