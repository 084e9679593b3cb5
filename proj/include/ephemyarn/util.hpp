#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ephemyarn {

std::int64_t now_ms();          // wall clock, ms since epoch
std::int64_t steady_now_ms();   // monotonic, for interval timing

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);
/// Splits on runs of whitespace, dropping empty tokens.
std::vector<std::string> split_ws(const std::string& s);

bool parse_int64(const std::string& s, std::int64_t& out);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
/// Writes to a temp sibling then renames into place.
void write_file_atomic(const std::string& path, const std::string& content);

/// Timestamp + random suffix, e.g. "j20240115-120301-a4f2".
std::string fresh_job_id();

/// Binds an ephemeral port, records it, and releases it. The caller is
/// expected to claim the port promptly.
int pick_free_port();

std::optional<std::string> getenv_opt(const std::string& name);

/// Directory holding the running executable (via /proc/self/exe), without a
/// trailing slash. Sibling tools are resolved against it.
std::string self_exe_dir();

/// Single-quotes a string for /bin/sh.
std::string shell_quote(const std::string& s);

}  // namespace ephemyarn
