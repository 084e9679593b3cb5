#include "ephemyarn/tera.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <queue>
#include <string_view>

#include "ephemyarn/errors.hpp"

namespace fs = std::filesystem;

namespace ephemyarn::tera {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string part_name(const char* kind, std::int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "part-%s-%05" PRId64, kind, index);
  return buf;
}

struct Record {
  unsigned char bytes[kRecordBytes];
};

bool key_less(const unsigned char* a, const unsigned char* b) {
  return std::memcmp(a, b, kKeyBytes) < 0;
}

void check_size(const fs::path& file, std::uintmax_t size) {
  if (size % kRecordBytes != 0) {
    throw Error(ErrorCode::MalformedRecord,
                file.string() + ": size " + std::to_string(size) + " is not a multiple of " +
                    std::to_string(kRecordBytes) + " (torn record at offset " +
                    std::to_string(size - size % kRecordBytes) + ")");
  }
}

}  // namespace

void make_record(std::uint64_t seed, std::uint64_t row, unsigned char* out) {
  std::uint64_t state = seed ^ (0xC2B2AE3D27D4EB4FULL * (row + 1));
  std::uint64_t k1 = splitmix64(state);
  std::uint64_t k2 = splitmix64(state);
  for (int i = 0; i < 8; ++i) out[i] = 32 + static_cast<unsigned char>((k1 >> (8 * i)) % 95);
  out[8] = 32 + static_cast<unsigned char>(k2 % 95);
  out[9] = 32 + static_cast<unsigned char>((k2 >> 8) % 95);

  unsigned char* p = out + kKeyBytes;  // 90-byte payload
  p[0] = 'R';
  p[1] = ':';
  char rowid[32];
  std::snprintf(rowid, sizeof(rowid), "%020" PRIu64, row);
  std::memcpy(p + 2, rowid, 20);
  p[22] = ' ';
  for (int i = 0; i < 66; ++i) p[23 + i] = 'A' + static_cast<unsigned char>((row + i) % 26);
  p[89] = '\n';
}

std::uint64_t key_hash(const unsigned char* key) {
  std::uint64_t h = 14695981039346656037ULL;
  for (int i = 0; i < kKeyBytes; ++i) {
    h ^= key[i];
    h *= 1099511628211ULL;
  }
  return h;
}

ShardRange shard_range(std::int64_t total_rows, std::int64_t num_mappers, std::int64_t shard) {
  if (num_mappers < 1) throw Error(ErrorCode::MalformedEntry, "num_mappers must be >= 1");
  if (shard < 0 || shard >= num_mappers) {
    throw Error(ErrorCode::MalformedEntry, "shard index out of range");
  }
  std::int64_t per = (total_rows + num_mappers - 1) / num_mappers;  // ceil(N/M)
  ShardRange r;
  r.begin_row = std::min(shard * per, total_rows);
  r.end_row = std::min((shard + 1) * per, total_rows);
  return r;
}

void write_shard(std::uint64_t seed, std::int64_t total_rows, std::int64_t num_mappers,
                 std::int64_t shard, const std::string& dir) {
  ShardRange range = shard_range(total_rows, num_mappers, shard);
  fs::path path = fs::path(dir) / part_name("m", shard);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Internal, "cannot write " + path.string());
  unsigned char rec[kRecordBytes];
  for (std::int64_t row = range.begin_row; row < range.end_row; ++row) {
    make_record(seed, static_cast<std::uint64_t>(row), rec);
    out.write(reinterpret_cast<const char*>(rec), kRecordBytes);
  }
  out.flush();
  if (!out) throw Error(ErrorCode::Internal, "short write to " + path.string());
}

void teragen(std::uint64_t seed, std::int64_t total_rows, std::int64_t num_mappers,
             const std::string& output_dir) {
  if (total_rows < 0) throw Error(ErrorCode::MalformedEntry, "total_rows must be >= 0");
  if (fs::exists(output_dir)) {
    throw Error(ErrorCode::OutputExists, "output path already exists: " + output_dir);
  }
  fs::create_directories(output_dir);
  for (std::int64_t i = 0; i < num_mappers; ++i) {
    write_shard(seed, total_rows, num_mappers, i, output_dir);
  }
}

std::vector<std::string> list_part_files(const std::string& dir, const std::string& prefix) {
  std::vector<std::string> files;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (!e.is_regular_file()) continue;
    std::string name = e.path().filename().string();
    if (name.rfind(prefix, 0) == 0) files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

ScanResult scan_dir(const std::string& dir, const std::string& prefix) {
  ScanResult res;
  for (const auto& file : list_part_files(dir, prefix)) {
    check_size(file, fs::file_size(file));
    std::ifstream in(file, std::ios::binary);
    unsigned char rec[kRecordBytes];
    while (in.read(reinterpret_cast<char*>(rec), kRecordBytes)) {
      ++res.rows;
      res.key_checksum += key_hash(rec);
    }
  }
  return res;
}

std::vector<std::string> sample_split_points(const std::string& input_dir,
                                             std::int64_t num_reducers,
                                             std::int64_t sample_size, bool* degenerate) {
  if (degenerate) *degenerate = false;
  if (num_reducers < 1) throw Error(ErrorCode::MalformedEntry, "num_reducers must be >= 1");
  if (num_reducers == 1) return {};
  if (sample_size < 1) sample_size = 1;

  auto files = list_part_files(input_dir, "part-");
  std::int64_t total = 0;
  for (const auto& f : files) {
    auto size = fs::file_size(f);
    check_size(f, size);
    total += static_cast<std::int64_t>(size) / kRecordBytes;
  }
  if (total == 0) {
    throw Error(ErrorCode::MissingInput,
                "cannot sample split points from empty input: " + input_dir);
  }

  const std::int64_t stride = std::max<std::int64_t>(1, total / sample_size);
  std::vector<std::string> sample;
  std::int64_t global_row = 0;
  unsigned char rec[kRecordBytes];
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::int64_t rows = static_cast<std::int64_t>(fs::file_size(f)) / kRecordBytes;
    for (std::int64_t i = 0; i < rows; ++i, ++global_row) {
      if (global_row % stride != 0) {
        in.seekg(kRecordBytes, std::ios::cur);
        continue;
      }
      in.read(reinterpret_cast<char*>(rec), kRecordBytes);
      sample.emplace_back(reinterpret_cast<char*>(rec), kKeyBytes);
    }
  }
  std::sort(sample.begin(), sample.end());

  std::vector<std::string> splits;
  for (std::int64_t q = 1; q < num_reducers; ++q) {
    size_t idx = static_cast<size_t>(q * static_cast<std::int64_t>(sample.size()) /
                                     num_reducers);
    if (idx >= sample.size()) idx = sample.size() - 1;
    splits.push_back(sample[idx]);
  }
  for (size_t i = 1; i < splits.size(); ++i) {
    if (splits[i] == splits[i - 1] && degenerate) *degenerate = true;
  }
  return splits;
}

std::size_t partition_of(const char* key, const std::vector<std::string>& splits) {
  std::string_view k(key, kKeyBytes);
  // First split strictly greater than the key.
  auto it = std::upper_bound(splits.begin(), splits.end(), k,
                             [](std::string_view a, const std::string& b) { return a < b; });
  return static_cast<std::size_t>(it - splits.begin());
}

void save_split_points(const std::vector<std::string>& splits, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& s : splits) out << s << "\n";
  out.flush();
  if (!out) throw Error(ErrorCode::Internal, "cannot write " + path);
}

std::vector<std::string> load_split_points(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "split file not found: " + path);
  std::vector<std::string> splits;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() != static_cast<size_t>(kKeyBytes)) {
      throw Error(ErrorCode::MalformedRecord,
                  path + ": split point of length " + std::to_string(line.size()));
    }
    splits.push_back(line);
  }
  return splits;
}

MapResult sortmap(const std::string& input_dir, std::int64_t task_index,
                  const std::string& shuffle_dir, const std::vector<std::string>& splits,
                  std::int64_t num_reducers) {
  auto files = list_part_files(input_dir, "part-");
  if (task_index < 0 || static_cast<size_t>(task_index) >= files.size()) {
    throw Error(ErrorCode::MissingInput,
                "no input shard for map task " + std::to_string(task_index) + " in " +
                    input_dir + " (" + std::to_string(files.size()) + " files)");
  }
  if (static_cast<std::int64_t>(splits.size()) != num_reducers - 1) {
    throw Error(ErrorCode::MalformedEntry, "expected " + std::to_string(num_reducers - 1) +
                                               " split points, got " +
                                               std::to_string(splits.size()));
  }

  fs::path map_dir = fs::path(shuffle_dir) / ("map_" + std::to_string(task_index));
  fs::create_directories(map_dir);
  std::vector<std::ofstream> parts;
  for (std::int64_t r = 0; r < num_reducers; ++r) {
    parts.emplace_back(map_dir / ("part_" + std::to_string(r)),
                       std::ios::binary | std::ios::trunc);
    if (!parts.back()) {
      throw Error(ErrorCode::Internal, "cannot open shuffle partition for writing");
    }
  }

  MapResult res;
  std::ifstream in(files[static_cast<size_t>(task_index)], std::ios::binary);
  check_size(files[static_cast<size_t>(task_index)],
             fs::file_size(files[static_cast<size_t>(task_index)]));
  unsigned char rec[kRecordBytes];
  while (in.read(reinterpret_cast<char*>(rec), kRecordBytes)) {
    ++res.input_records;
    std::size_t r = partition_of(reinterpret_cast<const char*>(rec), splits);
    parts[r].write(reinterpret_cast<const char*>(rec), kRecordBytes);
    ++res.output_records;
  }
  for (auto& p : parts) {
    p.flush();
    if (!p) throw Error(ErrorCode::Internal, "short write to shuffle partition");
  }
  return res;
}

namespace {

struct RunReader {
  std::ifstream in;
  Record current;
  bool done = false;

  explicit RunReader(const std::string& path) : in(path, std::ios::binary) { advance(); }
  void advance() {
    if (!in.read(reinterpret_cast<char*>(current.bytes), kRecordBytes)) done = true;
  }
};

void write_sorted_chunk(std::vector<Record>& chunk, const std::string& path) {
  std::stable_sort(chunk.begin(), chunk.end(), [](const Record& a, const Record& b) {
    return key_less(a.bytes, b.bytes);
  });
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (const auto& r : chunk) {
    out.write(reinterpret_cast<const char*>(r.bytes), kRecordBytes);
  }
  out.flush();
  if (!out) throw Error(ErrorCode::Internal, "cannot write sort run " + path);
}

}  // namespace

ReduceResult sortreduce(const std::string& shuffle_dir, std::int64_t task_index,
                        std::int64_t num_mappers, const std::string& output_dir,
                        std::int64_t budget_mb, const std::string& tmp_dir,
                        std::ostream* shuffle_log) {
  ReduceResult res;
  const std::int64_t budget_records =
      std::max<std::int64_t>(1, budget_mb * 1024 * 1024 / kRecordBytes);

  fs::create_directories(output_dir);
  fs::path out_path = fs::path(output_dir) / part_name("r", task_index);

  std::vector<Record> chunk;
  std::vector<std::string> runs;
  auto spill = [&] {
    if (chunk.empty()) return;
    fs::create_directories(tmp_dir);
    std::string run = (fs::path(tmp_dir) / ("run_" + std::to_string(runs.size()))).string();
    write_sorted_chunk(chunk, run);
    runs.push_back(run);
    chunk.clear();
  };

  for (std::int64_t m = 0; m < num_mappers; ++m) {
    fs::path part = fs::path(shuffle_dir) / ("map_" + std::to_string(m)) /
                    ("part_" + std::to_string(task_index));
    if (!fs::exists(part)) {
      throw Error(ErrorCode::MissingInput, "shuffle partition missing: " + part.string());
    }
    if (shuffle_log) {
      *shuffle_log << "SHUFFLE_OPEN map=" << m << " reduce=" << task_index
                   << " file=" << part.string() << "\n";
    }
    res.opened.emplace_back(m, task_index);
    check_size(part, fs::file_size(part));
    std::ifstream in(part, std::ios::binary);
    Record rec;
    while (in.read(reinterpret_cast<char*>(rec.bytes), kRecordBytes)) {
      ++res.input_records;
      chunk.push_back(rec);
      if (static_cast<std::int64_t>(chunk.size()) >= budget_records) spill();
    }
  }

  if (runs.empty()) {
    write_sorted_chunk(chunk, out_path.string());
    res.output_records = static_cast<std::int64_t>(chunk.size());
    return res;
  }

  spill();
  // K-way merge of the sorted runs; ties resolve to the earliest run so the
  // merge stays stable in (mapper, row) order.
  std::vector<std::unique_ptr<RunReader>> readers;
  for (const auto& run : runs) readers.push_back(std::make_unique<RunReader>(run));
  auto cmp = [&](size_t a, size_t b) {
    int c = std::memcmp(readers[a]->current.bytes, readers[b]->current.bytes, kKeyBytes);
    if (c != 0) return c > 0;  // min-heap on key
    return a > b;
  };
  std::priority_queue<size_t, std::vector<size_t>, decltype(cmp)> heap(cmp);
  for (size_t i = 0; i < readers.size(); ++i) {
    if (!readers[i]->done) heap.push(i);
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  while (!heap.empty()) {
    size_t i = heap.top();
    heap.pop();
    out.write(reinterpret_cast<const char*>(readers[i]->current.bytes), kRecordBytes);
    ++res.output_records;
    readers[i]->advance();
    if (!readers[i]->done) heap.push(i);
  }
  out.flush();
  if (!out) throw Error(ErrorCode::Internal, "cannot write " + out_path.string());
  for (const auto& run : runs) {
    std::error_code ec;
    fs::remove(run, ec);
  }
  return res;
}

ValidationReport teravalidate(const std::string& output_dir) {
  ValidationReport report;
  report.sorted = true;
  if (!fs::is_directory(output_dir)) {
    throw Error(ErrorCode::MissingInput, "output directory not found: " + output_dir);
  }
  auto files = list_part_files(output_dir, "part-r-");
  unsigned char prev[kKeyBytes];
  bool have_prev = false;  // carries across partition boundaries
  unsigned char rec[kRecordBytes];
  for (const auto& file : files) {
    check_size(file, fs::file_size(file));
    std::ifstream in(file, std::ios::binary);
    std::int64_t offset = 0;
    while (in.read(reinterpret_cast<char*>(rec), kRecordBytes)) {
      if (have_prev && key_less(rec, prev) && report.sorted) {
        report.sorted = false;
        report.first_error = "order violation at " + file + " offset " +
                             std::to_string(offset) + ": key precedes its predecessor";
      }
      std::memcpy(prev, rec, kKeyBytes);
      have_prev = true;
      ++report.rows;
      report.key_checksum += key_hash(rec);
      offset += kRecordBytes;
    }
  }
  return report;
}

}  // namespace ephemyarn::tera
