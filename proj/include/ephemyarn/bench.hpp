#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ephemyarn/config.hpp"

namespace ephemyarn {

/// "4", "3,4,6,8" or "3..8" (inclusive range) -> node counts.
std::vector<int> parse_plan(const std::string& text);

/// ceil(ratio * cores): the paper scales task counts with allocated cores.
std::int64_t mappers_for_cores(double ratio, std::int64_t cores);

struct BenchOptions {
  std::string mode;  // overhead | teragen | terasort | full
  std::vector<int> node_counts;
  std::int64_t rows = 1000000;
  std::int64_t mappers = 8;
  std::int64_t reducers = 4;
  double ratio = 0.0;  // when > 0, mappers = ceil(ratio * total cores)
  int repeats = 1;
  std::uint64_t seed = 20140601;
  std::int64_t slots_per_node = 4;
  std::string input;  // terasort mode: existing dataset directory
  std::string out_dir = "bench-out";
  Config cfg;
  std::string bin_dir;  // empty: directory of the current executable
};

struct BenchRow {
  std::string run_id;
  std::string phase;  // provision/teragen/terasort_map/terasort_reduce/teravalidate/teardown
  int nodes = 0;
  std::int64_t cores = 0;
  std::int64_t mappers = 0;
  std::int64_t reducers = 0;
  std::int64_t rows = 0;
  std::int64_t wall_ms = 0;
  bool ok = false;
};

std::string bench_csv_header();
std::string to_csv_line(const BenchRow& row);

/// Runs the plan sequentially: per node count (and repeat), provision a
/// local cluster, run the mode's workload, tear down. Appends rows to
/// <out_dir>/bench.csv as they complete, then writes the min/median/max
/// summary and a gnuplot script. Returns 0 when every row was ok.
int scaling_run(const BenchOptions& opts);

}  // namespace ephemyarn
