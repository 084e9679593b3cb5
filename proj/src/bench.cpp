#include "ephemyarn/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "ephemyarn/cluster.hpp"
#include "ephemyarn/errors.hpp"
#include "ephemyarn/tera.hpp"
#include "ephemyarn/util.hpp"

namespace fs = std::filesystem;

namespace ephemyarn {

std::vector<int> parse_plan(const std::string& text) {
  std::vector<int> counts;
  auto parse_one = [](const std::string& s) {
    std::int64_t v = 0;
    if (!parse_int64(trim(s), v) || v < 1) {
      throw Error(ErrorCode::MalformedEntry, "bad node count '" + s + "' in plan");
    }
    return static_cast<int>(v);
  };
  auto dots = text.find("..");
  if (dots != std::string::npos) {
    int lo = parse_one(text.substr(0, dots));
    int hi = parse_one(text.substr(dots + 2));
    if (hi < lo) throw Error(ErrorCode::MalformedEntry, "descending plan range '" + text + "'");
    for (int n = lo; n <= hi; ++n) counts.push_back(n);
    return counts;
  }
  for (const auto& piece : split(text, ',')) counts.push_back(parse_one(piece));
  if (counts.empty()) throw Error(ErrorCode::MalformedEntry, "empty plan");
  return counts;
}

std::int64_t mappers_for_cores(double ratio, std::int64_t cores) {
  return static_cast<std::int64_t>(std::ceil(ratio * static_cast<double>(cores)));
}

std::string bench_csv_header() {
  return "run_id,phase,nodes,cores,mappers,reducers,rows,wall_ms,ok";
}

std::string to_csv_line(const BenchRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%d,%lld,%lld,%lld,%lld,%lld,%d", r.run_id.c_str(),
                r.phase.c_str(), r.nodes, static_cast<long long>(r.cores),
                static_cast<long long>(r.mappers), static_cast<long long>(r.reducers),
                static_cast<long long>(r.rows), static_cast<long long>(r.wall_ms),
                r.ok ? 1 : 0);
  return buf;
}

namespace {

const char* kPlotScript = R"GP(set datafile separator ","
set key outside
set xlabel "allocated cores"
set ylabel "wall time (ms)"
set term pngcairo size 900,600
set output "bench.png"
phase(p) = (strcol(2) eq p ? $8 : 1/0)
plot "bench.csv" using 4:(phase("provision"))      with linespoints title "provision", \
     "bench.csv" using 4:(phase("teragen"))        with linespoints title "teragen", \
     "bench.csv" using 4:(phase("terasort_map"))   with linespoints title "terasort map", \
     "bench.csv" using 4:(phase("terasort_reduce")) with linespoints title "terasort reduce", \
     "bench.csv" using 4:(phase("teravalidate"))   with linespoints title "teravalidate", \
     "bench.csv" using 4:(phase("teardown"))       with linespoints title "teardown"
)GP";

class RowSink {
 public:
  explicit RowSink(const std::string& csv_path) : path_(csv_path) {
    fs::create_directories(fs::path(csv_path).parent_path());
    bool fresh = !fs::exists(csv_path);
    out_.open(csv_path, std::ios::app);
    if (fresh) out_ << bench_csv_header() << "\n";
  }

  void add(const BenchRow& row) {
    rows_.push_back(row);
    out_ << to_csv_line(row) << "\n";
    out_.flush();
    std::fprintf(stderr, "[bench] %s\n", to_csv_line(row).c_str());
  }

  const std::vector<BenchRow>& rows() const { return rows_; }

 private:
  std::string path_;
  std::ofstream out_;
  std::vector<BenchRow> rows_;
};

void write_summary(const std::vector<BenchRow>& rows, const std::string& path) {
  // min/median/max of wall_ms grouped by (phase, nodes), ok rows only.
  std::map<std::pair<std::string, int>, std::vector<std::int64_t>> groups;
  for (const auto& r : rows) {
    if (r.ok) groups[{r.phase, r.nodes}].push_back(r.wall_ms);
  }
  std::ofstream out(path, std::ios::trunc);
  out << "phase,nodes,runs,min_ms,median_ms,max_ms\n";
  for (auto& [key, walls] : groups) {
    std::sort(walls.begin(), walls.end());
    out << key.first << "," << key.second << "," << walls.size() << "," << walls.front()
        << "," << walls[walls.size() / 2] << "," << walls.back() << "\n";
  }
}

struct EntryContext {
  BenchRow base;  // run_id/nodes/cores/mappers/reducers/rows prefilled
  RowSink* sink = nullptr;

  void row(const std::string& phase, std::int64_t wall_ms, bool ok) const {
    BenchRow r = base;
    r.phase = phase;
    r.wall_ms = wall_ms;
    r.ok = ok;
    sink->add(r);
  }
};

/// teragen as a cluster job writing into `dataset`.
bool run_teragen_job(const EntryContext& ctx, const std::string& state_path,
                     const std::string& bin, std::uint64_t seed, std::int64_t rows,
                     std::int64_t mappers, const std::string& dataset) {
  JobSpec spec;
  spec.name = "teragen";
  spec.output = dataset;
  spec.mappers = mappers;
  spec.reducers = 0;
  spec.map_command = shell_quote(bin + "/ephemyarn-tera") + " genshard --seed " +
                     std::to_string(seed) + " --rows " + std::to_string(rows) +
                     " --mappers {NUM_MAPPERS} --task {TASK_INDEX} --output {OUTPUT}";
  RunResult res = run_job(state_path, spec);
  ctx.row("teragen", res.wall_ms, res.succeeded());
  return res.succeeded();
}

bool run_terasort_job(const EntryContext& ctx, const std::string& state_path,
                      const std::string& bin, const Config& cfg, const std::string& dataset,
                      std::int64_t mappers, std::int64_t reducers, const std::string& sorted) {
  ClusterStateFile state = ClusterStateFile::load(state_path);
  DirectoryPlan plan = state.plan(state.config());

  bool degenerate = false;
  auto splits =
      tera::sample_split_points(dataset, reducers, cfg.split_sample_size, &degenerate);
  if (degenerate) {
    std::fprintf(stderr,
                 "[bench] DegeneratePartition: duplicate split points, some reducers will "
                 "be empty\n");
  }
  std::string splits_path = plan.jobs_dir() + "/splits-" + std::to_string(now_ms()) + ".txt";
  fs::create_directories(plan.jobs_dir());
  tera::save_split_points(splits, splits_path);

  JobSpec spec;
  spec.name = "terasort";
  spec.input = dataset;
  spec.output = sorted;
  spec.mappers = mappers;
  spec.reducers = reducers;
  spec.map_command = shell_quote(bin + "/ephemyarn-tera") +
                     " sortmap --input {INPUT} --task {TASK_INDEX} --shuffle {SHUFFLE}"
                     " --splits " +
                     shell_quote(splits_path) + " --reducers {NUM_REDUCERS}";
  spec.reduce_command = shell_quote(bin + "/ephemyarn-tera") +
                        " sortreduce --shuffle {SHUFFLE} --task {TASK_INDEX}"
                        " --mappers {NUM_MAPPERS} --output {OUTPUT} --budget-mb " +
                        std::to_string(cfg.sort_budget_mb);
  RunResult res = run_job(state_path, spec);
  ctx.row("terasort_map", res.succeeded() ? res.record.map_ms : res.wall_ms, res.succeeded());
  ctx.row("terasort_reduce", res.succeeded() ? res.record.reduce_ms : 0, res.succeeded());
  return res.succeeded();
}

}  // namespace

int scaling_run(const BenchOptions& opts) {
  if (opts.mode != "overhead" && opts.mode != "teragen" && opts.mode != "terasort" &&
      opts.mode != "full") {
    throw Error(ErrorCode::MalformedEntry, "unknown bench mode '" + opts.mode + "'");
  }
  if (opts.mode == "terasort") {
    if (opts.input.empty() || tera::list_part_files(opts.input, "part-").empty()) {
      throw Error(ErrorCode::MissingInput,
                  "terasort mode needs --input pointing at generated data" +
                      (opts.input.empty() ? std::string() : ": " + opts.input));
    }
  }

  const std::string bin = opts.bin_dir.empty() ? self_exe_dir() : opts.bin_dir;
  RowSink sink(opts.out_dir + "/bench.csv");
  bool all_ok = true;

  for (int nodes : opts.node_counts) {
    for (int rep = 0; rep < std::max(1, opts.repeats); ++rep) {
      NodeAllocation alloc = local_allocation(nodes, opts.slots_per_node);
      std::int64_t mappers =
          opts.ratio > 0 ? mappers_for_cores(opts.ratio, alloc.total_cores) : opts.mappers;

      EntryContext ctx;
      ctx.sink = &sink;
      ctx.base.run_id = opts.mode + "-n" + std::to_string(nodes) + "-x" + std::to_string(rep);
      ctx.base.nodes = nodes;
      ctx.base.cores = alloc.total_cores;
      ctx.base.mappers = opts.mode == "overhead" ? 0 : mappers;
      ctx.base.reducers = opts.mode == "overhead" || opts.mode == "teragen" ? 0 : opts.reducers;
      ctx.base.rows = opts.mode == "overhead" ? 0 : opts.rows;

      ProvisionOptions popts;
      popts.cfg = opts.cfg;
      popts.alloc = alloc;
      popts.local = true;
      popts.bin_dir = bin;
      ProvisionResult cluster;
      try {
        cluster = provision(popts);
      } catch (const std::exception& e) {
        std::fprintf(stderr, "[bench] provision failed for %d nodes: %s\n", nodes, e.what());
        ctx.row("provision", 0, false);
        all_ok = false;
        continue;  // aborts this entry, the run carries on
      }
      ctx.row("provision", cluster.wall_ms, true);

      DirectoryPlan plan = cluster.state.plan(cluster.state.config());
      bool entry_ok = true;
      try {
        if (opts.mode == "teragen" || opts.mode == "full") {
          std::string dataset = plan.input + "/tera";
          entry_ok = run_teragen_job(ctx, cluster.state_path, bin, opts.seed, opts.rows,
                                     mappers, dataset);
          if (entry_ok && opts.mode == "full") {
            std::string sorted = plan.output + "/sorted";
            entry_ok = run_terasort_job(ctx, cluster.state_path, bin,
                                        cluster.state.config(), dataset, mappers,
                                        opts.reducers, sorted);
            if (entry_ok) {
              std::int64_t v0 = steady_now_ms();
              auto gen_scan = tera::scan_dir(dataset, "part-m-");
              auto report = tera::teravalidate(sorted);
              bool valid = report.sorted && report.rows == opts.rows &&
                           report.rows == gen_scan.rows &&
                           report.key_checksum == gen_scan.key_checksum;
              ctx.row("teravalidate", steady_now_ms() - v0, valid);
              if (!valid) {
                entry_ok = false;
                std::fprintf(stderr, "[bench] validation failed: %s\n",
                             report.first_error.c_str());
              }
            }
          }
        } else if (opts.mode == "terasort") {
          std::string sorted = plan.output + "/sorted";
          auto in_files = tera::list_part_files(opts.input, "part-");
          entry_ok = run_terasort_job(ctx, cluster.state_path, bin, cluster.state.config(),
                                      opts.input, static_cast<std::int64_t>(in_files.size()),
                                      opts.reducers, sorted);
          if (entry_ok) {
            std::int64_t v0 = steady_now_ms();
            auto report = tera::teravalidate(sorted);
            ctx.row("teravalidate", steady_now_ms() - v0, report.sorted);
            entry_ok = report.sorted;
          }
        }
      } catch (const std::exception& e) {
        std::fprintf(stderr, "[bench] %s entry with %d nodes failed: %s\n", opts.mode.c_str(),
                     nodes, e.what());
        entry_ok = false;
      }

      TeardownReport td = teardown(cluster.state_path);
      ctx.row("teardown", td.wall_ms, td.ok);
      if (!entry_ok || !td.ok) all_ok = false;
    }
  }

  write_summary(sink.rows(), opts.out_dir + "/summary.csv");
  write_file(opts.out_dir + "/plot.gp", kPlotScript);
  return all_ok ? 0 : 1;
}

}  // namespace ephemyarn
