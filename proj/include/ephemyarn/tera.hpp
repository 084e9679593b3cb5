#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace ephemyarn::tera {

// Fixed-width 100-byte records: a 10-byte key drawn from the 95 printable
// ASCII characters, then a 90-byte payload carrying a tagged row id and
// deterministic filler, newline-terminated so datasets stay greppable.
inline constexpr std::int64_t kRecordBytes = 100;
inline constexpr std::int64_t kKeyBytes = 10;

/// Writes row `row`'s 100 bytes into out. Pure in (seed, row): the same
/// pair yields the same bytes regardless of sharding.
void make_record(std::uint64_t seed, std::uint64_t row, unsigned char* out);

/// FNV-1a over the 10 key bytes; the dataset checksum is the wrapping sum
/// of these per-record hashes, so it is order-independent.
std::uint64_t key_hash(const unsigned char* key);

struct ShardRange {
  std::int64_t begin_row = 0;
  std::int64_t end_row = 0;  // half-open
};

/// Shard i covers rows [i*ceil(N/M), min((i+1)*ceil(N/M), N)).
ShardRange shard_range(std::int64_t total_rows, std::int64_t num_mappers, std::int64_t shard);

/// Writes shard `shard` as dir/part-m-<shard> (zero-padded to 5 digits).
/// The directory must already exist.
void write_shard(std::uint64_t seed, std::int64_t total_rows, std::int64_t num_mappers,
                 std::int64_t shard, const std::string& dir);

/// Whole-dataset generation: creates output_dir and all num_mappers shards.
/// Throws Error(OutputExists) when output_dir already exists.
void teragen(std::uint64_t seed, std::int64_t total_rows, std::int64_t num_mappers,
             const std::string& output_dir);

/// Part files under dir whose names start with prefix, sorted by name.
std::vector<std::string> list_part_files(const std::string& dir, const std::string& prefix);

struct ScanResult {
  std::int64_t rows = 0;
  std::uint64_t key_checksum = 0;
};

/// Row count + checksum over every prefix-matching part file in dir.
/// Throws Error(MalformedRecord) on a file whose size is not a multiple of
/// the record size.
ScanResult scan_dir(const std::string& dir, const std::string& prefix);

/// Deterministic fixed-stride sample of the input keys, reduced to
/// num_reducers-1 non-decreasing split points. Sets *degenerate when
/// duplicate split points force empty reducers. Throws Error(MissingInput)
/// when num_reducers > 1 and the input has no rows.
std::vector<std::string> sample_split_points(const std::string& input_dir,
                                             std::int64_t num_reducers,
                                             std::int64_t sample_size,
                                             bool* degenerate = nullptr);

/// Index of the first split point > key; total over the key space.
std::size_t partition_of(const char* key, const std::vector<std::string>& splits);

void save_split_points(const std::vector<std::string>& splits, const std::string& path);
std::vector<std::string> load_split_points(const std::string& path);

struct MapResult {
  std::int64_t input_records = 0;
  std::int64_t output_records = 0;
};

/// Mapper `task_index` of a sort job: reads the task_index-th input part
/// file and scatters its records into shuffle_dir/map_<i>/part_<r> by key
/// range. Every part_<r> file is created, empty or not, so reducers can
/// rely on the full matrix existing.
MapResult sortmap(const std::string& input_dir, std::int64_t task_index,
                  const std::string& shuffle_dir, const std::vector<std::string>& splits,
                  std::int64_t num_reducers);

struct ReduceResult {
  std::int64_t input_records = 0;
  std::int64_t output_records = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> opened;  // (mapper, reducer) reads
};

/// Reducer `task_index`: merges shuffle_dir/map_*/part_<task_index> into
/// the sorted output_dir/part-r-<task_index>. Sorts in memory up to
/// budget_mb, else spills sorted runs into tmp_dir and merges. The merge is
/// stable across equal keys (mapper order, then row order). shuffle_log,
/// when given, receives one SHUFFLE_OPEN line per input file.
ReduceResult sortreduce(const std::string& shuffle_dir, std::int64_t task_index,
                        std::int64_t num_mappers, const std::string& output_dir,
                        std::int64_t budget_mb, const std::string& tmp_dir,
                        std::ostream* shuffle_log = nullptr);

struct ValidationReport {
  bool sorted = false;
  std::int64_t rows = 0;
  std::uint64_t key_checksum = 0;
  std::string first_error;  // empty when sorted
};

/// Checks within-partition order and cross-partition boundaries over the
/// part-r-* files of output_dir, counting rows and the key checksum.
ValidationReport teravalidate(const std::string& output_dir);

}  // namespace ephemyarn::tera
