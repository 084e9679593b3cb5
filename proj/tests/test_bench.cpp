#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ephemyarn/bench.hpp"
#include "ephemyarn/errors.hpp"
#include "helpers.hpp"

using namespace ephemyarn;
namespace fs = std::filesystem;

namespace {

struct CsvRow {
  std::string run_id;
  std::string phase;
  int nodes = 0;
  std::int64_t cores = 0;
  std::int64_t mappers = 0;
  std::int64_t reducers = 0;
  std::int64_t rows = 0;
  std::int64_t wall_ms = 0;
  int ok = -1;
};

std::vector<CsvRow> read_csv(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  REQUIRE(std::getline(in, line));
  REQUIRE(line == bench_csv_header());
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    CsvRow r;
    std::getline(fields, r.run_id, ',');
    std::getline(fields, r.phase, ',');
    std::getline(fields, cell, ',');
    r.nodes = std::stoi(cell);
    std::getline(fields, cell, ',');
    r.cores = std::stoll(cell);
    std::getline(fields, cell, ',');
    r.mappers = std::stoll(cell);
    std::getline(fields, cell, ',');
    r.reducers = std::stoll(cell);
    std::getline(fields, cell, ',');
    r.rows = std::stoll(cell);
    std::getline(fields, cell, ',');
    r.wall_ms = std::stoll(cell);
    std::getline(fields, cell, ',');
    r.ok = std::stoi(cell);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

TEST_CASE("plan parsing") {
  CHECK(parse_plan("4") == std::vector<int>{4});
  CHECK(parse_plan("3,4,6,8") == std::vector<int>({3, 4, 6, 8}));
  CHECK(parse_plan(" 5 , 7 ") == std::vector<int>({5, 7}));
  CHECK(parse_plan("3..8") == std::vector<int>({3, 4, 5, 6, 7, 8}));
  CHECK(parse_plan("5..5") == std::vector<int>{5});

  auto message_of = [](const std::string& text) {
    try {
      parse_plan(text);
      return std::string("no error");
    } catch (const Error& e) {
      return std::string(e.what());
    }
  };
  CHECK(message_of("0").find("bad node count") != std::string::npos);
  CHECK(message_of("x").find("bad node count") != std::string::npos);
  CHECK(message_of("3,,4").find("bad node count") != std::string::npos);
  CHECK(message_of("8..3").find("descending plan range") != std::string::npos);
  CHECK_THROWS_AS(parse_plan(""), Error);
}

TEST_CASE("mapper count follows allocated cores") {
  CHECK(mappers_for_cores(0.5, 16) == 8);
  CHECK(mappers_for_cores(1.0, 12) == 12);
  CHECK(mappers_for_cores(2.0, 16) == 32);
  CHECK(mappers_for_cores(0.6, 7) == 5);
  CHECK(mappers_for_cores(0.1, 1) == 1);
}

TEST_CASE("csv formatting") {
  CHECK(bench_csv_header() == "run_id,phase,nodes,cores,mappers,reducers,rows,wall_ms,ok");
  BenchRow r;
  r.run_id = "full-n4-x0";
  r.phase = "teragen";
  r.nodes = 4;
  r.cores = 16;
  r.mappers = 8;
  r.reducers = 4;
  r.rows = 1000000;
  r.wall_ms = 4321;
  r.ok = true;
  CHECK(to_csv_line(r) == "full-n4-x0,teragen,4,16,8,4,1000000,4321,1");
  r.ok = false;
  r.wall_ms = 0;
  CHECK(to_csv_line(r) == "full-n4-x0,teragen,4,16,8,4,1000000,0,0");
}

TEST_CASE("mode and input validation") {
  testutil::TempDir tmp;
  BenchOptions opts;
  opts.cfg = testutil::fast_config(tmp.path);
  opts.out_dir = tmp.sub("out");
  opts.node_counts = {3};
  opts.bin_dir = testutil::tool_dir();

  opts.mode = "sprint";
  try {
    scaling_run(opts);
    FAIL("expected MalformedEntry");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedEntry);
  }

  opts.mode = "terasort";
  try {
    scaling_run(opts);
    FAIL("expected MissingInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingInput);
  }

  fs::create_directories(tmp.sub("empty-data"));
  opts.input = tmp.sub("empty-data");
  CHECK_THROWS_AS(scaling_run(opts), Error);
}

TEST_CASE("overhead plan provisions and tears down per node count") {
  testutil::TempDir tmp;
  BenchOptions opts;
  opts.mode = "overhead";
  opts.node_counts = {3, 4};
  opts.slots_per_node = 2;
  opts.cfg = testutil::fast_config(tmp.path);
  opts.out_dir = tmp.sub("out");
  opts.bin_dir = testutil::tool_dir();

  REQUIRE(scaling_run(opts) == 0);

  auto rows = read_csv(opts.out_dir + "/bench.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].phase == "provision");
  CHECK(rows[1].phase == "teardown");
  CHECK(rows[2].phase == "provision");
  CHECK(rows[3].phase == "teardown");
  CHECK(rows[0].nodes == 3);
  CHECK(rows[0].cores == 6);
  CHECK(rows[2].nodes == 4);
  CHECK(rows[2].cores == 8);
  CHECK(rows[0].run_id == "overhead-n3-x0");
  CHECK(rows[2].run_id == "overhead-n4-x0");
  for (const auto& r : rows) {
    CHECK(r.ok == 1);
    CHECK(r.mappers == 0);
    CHECK(r.reducers == 0);
    CHECK(r.rows == 0);
    CHECK(r.wall_ms >= 0);
  }

  // Nothing survives the plan: no processes, no local job trees.
  CHECK(testutil::live_processes_mentioning(tmp.path) == 0);
  if (fs::exists(tmp.sub("local"))) CHECK(fs::is_empty(tmp.sub("local")));

  // Summary groups by phase and node count; the plot script is emitted
  // alongside so the curves can be rendered elsewhere.
  std::ifstream summary(opts.out_dir + "/summary.csv");
  REQUIRE(summary.good());
  std::string header;
  std::getline(summary, header);
  CHECK(header == "phase,nodes,runs,min_ms,median_ms,max_ms");
  int summary_rows = 0;
  std::string line;
  while (std::getline(summary, line)) {
    if (!line.empty()) ++summary_rows;
  }
  CHECK(summary_rows == 4);
  std::ifstream plot(opts.out_dir + "/plot.gp");
  REQUIRE(plot.good());
  std::stringstream plot_text;
  plot_text << plot.rdbuf();
  CHECK(plot_text.str().find("bench.csv") != std::string::npos);
  CHECK(plot_text.str().find("bench.png") != std::string::npos);

  SUBCASE("a second run appends to the same csv") {
    BenchOptions more = opts;
    more.node_counts = {3};
    REQUIRE(scaling_run(more) == 0);
    auto all = read_csv(opts.out_dir + "/bench.csv");
    CHECK(all.size() == 6);
    std::ifstream csv(opts.out_dir + "/bench.csv");
    std::string first_line;
    std::getline(csv, first_line);
    int header_count = first_line == bench_csv_header() ? 1 : 0;
    while (std::getline(csv, first_line)) {
      if (first_line == bench_csv_header()) ++header_count;
    }
    CHECK(header_count == 1);
  }
}

TEST_CASE("full mode runs the whole pipeline on a small dataset") {
  testutil::TempDir tmp;
  BenchOptions opts;
  opts.mode = "full";
  opts.node_counts = {3};
  opts.slots_per_node = 2;
  opts.rows = 2000;
  opts.mappers = 2;
  opts.reducers = 2;
  opts.seed = 20240815;
  opts.cfg = testutil::fast_config(tmp.path);
  opts.out_dir = tmp.sub("out");
  opts.bin_dir = testutil::tool_dir();

  REQUIRE(scaling_run(opts) == 0);

  auto rows = read_csv(opts.out_dir + "/bench.csv");
  std::map<std::string, CsvRow> by_phase;
  for (const auto& r : rows) by_phase[r.phase] = r;
  for (const char* phase : {"provision", "teragen", "terasort_map", "terasort_reduce",
                            "teravalidate", "teardown"}) {
    REQUIRE(by_phase.count(phase) == 1);
    CHECK(by_phase[phase].ok == 1);
  }
  CHECK(by_phase["teragen"].rows == 2000);
  CHECK(by_phase["teragen"].mappers == 2);
  CHECK(by_phase["terasort_reduce"].reducers == 2);
  CHECK(testutil::live_processes_mentioning(tmp.path) == 0);

  // The sorted output survives teardown inside the job's shared tree.
  bool found_sorted = false;
  for (const auto& job : fs::directory_iterator(tmp.sub("shared"))) {
    if (fs::exists(job.path() / "output" / "sorted" / "part-r-00000")) found_sorted = true;
  }
  CHECK(found_sorted);
}

TEST_CASE("mapper ratio scales with the allocation") {
  testutil::TempDir tmp;
  BenchOptions opts;
  opts.mode = "teragen";
  opts.node_counts = {3};
  opts.slots_per_node = 2;
  opts.rows = 600;
  opts.ratio = 1.0;  // one mapper per allocated core
  opts.cfg = testutil::fast_config(tmp.path);
  opts.out_dir = tmp.sub("out");
  opts.bin_dir = testutil::tool_dir();

  REQUIRE(scaling_run(opts) == 0);
  auto rows = read_csv(opts.out_dir + "/bench.csv");
  bool saw_teragen = false;
  for (const auto& r : rows) {
    if (r.phase != "teragen") continue;
    saw_teragen = true;
    CHECK(r.mappers == 6);
    CHECK(r.ok == 1);
  }
  CHECK(saw_teragen);

  // Six generator shards landed in the dataset directory.
  int parts = 0;
  for (const auto& job : fs::directory_iterator(tmp.sub("shared"))) {
    auto dataset = job.path() / "input" / "tera";
    if (!fs::exists(dataset)) continue;
    for (const auto& f : fs::directory_iterator(dataset)) {
      if (f.path().filename().string().rfind("part-m-", 0) == 0) ++parts;
    }
  }
  CHECK(parts == 6);
}

TEST_CASE("a failed provision is recorded and the plan continues") {
  testutil::TempDir tmp;
  BenchOptions opts;
  opts.mode = "overhead";
  opts.node_counts = {3};
  opts.cfg = testutil::fast_config(tmp.path);
  opts.out_dir = tmp.sub("out");
  opts.bin_dir = tmp.sub("nobin");
  fs::create_directories(opts.bin_dir);

  CHECK(scaling_run(opts) == 1);
  auto rows = read_csv(opts.out_dir + "/bench.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].phase == "provision");
  CHECK(rows[0].ok == 0);
  CHECK(testutil::live_processes_mentioning(tmp.path) == 0);
}
