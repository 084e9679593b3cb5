#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ephemyarn/errors.hpp"
#include "ephemyarn/tera.hpp"

using namespace ephemyarn;
namespace fs = std::filesystem;

namespace {

/// Inside a container the agent exports EPHEMYARN_STAGING and
/// EPHEMYARN_CONTAINER_ID; task counters go to the per-container file the
/// application master collects after the task succeeds. Standalone runs
/// skip this silently.
void emit_counters(const std::vector<std::pair<std::string, std::int64_t>>& counters) {
  const char* staging = std::getenv("EPHEMYARN_STAGING");
  const char* cid = std::getenv("EPHEMYARN_CONTAINER_ID");
  if (!staging || !cid) return;
  fs::create_directories(std::string(staging) + "/counters");
  std::ofstream out(std::string(staging) + "/counters/" + cid, std::ios::app);
  for (const auto& [k, v] : counters) out << k << "=" << v << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"teragen / terasort / teravalidate toolbox"};
  app.require_subcommand(1);

  std::uint64_t seed = 20140601;
  std::int64_t rows = 0;
  std::int64_t mappers = 1;
  std::int64_t reducers = 1;
  std::int64_t task = 0;
  std::int64_t sample_size = 10000;
  std::int64_t budget_mb = 256;
  std::string input, output, shuffle, splits_path, tmp_dir = ".", prefix = "part-";

  auto* gen = app.add_subcommand("teragen", "generate a whole dataset");
  gen->add_option("--seed", seed);
  gen->add_option("--rows", rows)->required();
  gen->add_option("--mappers", mappers);
  gen->add_option("--output", output)->required();

  auto* shard = app.add_subcommand("genshard", "generate one mapper's shard");
  shard->add_option("--seed", seed);
  shard->add_option("--rows", rows)->required();
  shard->add_option("--mappers", mappers)->required();
  shard->add_option("--task", task)->required();
  shard->add_option("--output", output)->required();

  auto* sample = app.add_subcommand("sample", "sample split points from a dataset");
  sample->add_option("--input", input)->required();
  sample->add_option("--reducers", reducers)->required();
  sample->add_option("--sample-size", sample_size);
  sample->add_option("--output", output)->required();

  auto* smap = app.add_subcommand("sortmap", "scatter one input shard into the shuffle");
  smap->add_option("--input", input)->required();
  smap->add_option("--task", task)->required();
  smap->add_option("--shuffle", shuffle)->required();
  smap->add_option("--splits", splits_path)->required();
  smap->add_option("--reducers", reducers)->required();

  auto* sred = app.add_subcommand("sortreduce", "merge one key range into sorted output");
  sred->add_option("--shuffle", shuffle)->required();
  sred->add_option("--task", task)->required();
  sred->add_option("--mappers", mappers)->required();
  sred->add_option("--output", output)->required();
  sred->add_option("--budget-mb", budget_mb);
  sred->add_option("--tmp", tmp_dir, "spill directory (default: cwd)");

  auto* val = app.add_subcommand("validate", "check order, rows and checksum");
  val->add_option("--input", input)->required();

  auto* sum = app.add_subcommand("checksum", "rows and key checksum of a dataset");
  sum->add_option("--input", input)->required();
  sum->add_option("--prefix", prefix, "part file name prefix");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      tera::teragen(seed, rows, mappers, output);
      auto scan = tera::scan_dir(output, "part-m-");
      std::printf("rows=%lld key_checksum=%llu shards=%lld\n",
                  static_cast<long long>(scan.rows),
                  static_cast<unsigned long long>(scan.key_checksum),
                  static_cast<long long>(mappers));
    } else if (shard->parsed()) {
      fs::create_directories(output);
      tera::write_shard(seed, rows, mappers, task, output);
      auto range = tera::shard_range(rows, mappers, task);
      emit_counters({{"map_output_records", range.end_row - range.begin_row}});
    } else if (sample->parsed()) {
      bool degenerate = false;
      auto splits = tera::sample_split_points(input, reducers, sample_size, &degenerate);
      tera::save_split_points(splits, output);
      if (degenerate) {
        std::fprintf(stderr, "DegeneratePartition: duplicate split points\n");
      }
      std::printf("splits=%zu degenerate=%d\n", splits.size(), degenerate ? 1 : 0);
    } else if (smap->parsed()) {
      auto splits = tera::load_split_points(splits_path);
      auto res = tera::sortmap(input, task, shuffle, splits, reducers);
      std::printf("map_input_records=%lld map_output_records=%lld\n",
                  static_cast<long long>(res.input_records),
                  static_cast<long long>(res.output_records));
      emit_counters({{"map_input_records", res.input_records},
                     {"map_output_records", res.output_records}});
    } else if (sred->parsed()) {
      auto res = tera::sortreduce(shuffle, task, mappers, output, budget_mb, tmp_dir,
                                  &std::cout);
      std::printf("reduce_input_records=%lld reduce_output_records=%lld\n",
                  static_cast<long long>(res.input_records),
                  static_cast<long long>(res.output_records));
      emit_counters({{"reduce_input_records", res.input_records},
                     {"reduce_output_records", res.output_records}});
    } else if (val->parsed()) {
      auto report = tera::teravalidate(input);
      std::printf("sorted=%s rows=%lld key_checksum=%llu\n",
                  report.sorted ? "true" : "false", static_cast<long long>(report.rows),
                  static_cast<unsigned long long>(report.key_checksum));
      if (!report.sorted) {
        std::fprintf(stderr, "%s\n", report.first_error.c_str());
        return 1;
      }
    } else if (sum->parsed()) {
      auto scan = tera::scan_dir(input, prefix);
      std::printf("rows=%lld key_checksum=%llu\n", static_cast<long long>(scan.rows),
                  static_cast<unsigned long long>(scan.key_checksum));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ephemyarn-tera: %s\n", e.what());
    return 1;
  }
  return 0;
}
