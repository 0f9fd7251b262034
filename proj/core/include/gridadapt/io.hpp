#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace gridadapt {

// FNV-1a over a byte string; used for config hashes and parameter snapshots.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);

// Shortest round-trip decimal representation of a double ("%.17g"). All file
// output goes through this so re-runs produce byte-identical numeric content.
std::string format_double(double v);

// key=value report file, one pair per line.
void write_kv(const std::string& path,
              const std::vector<std::pair<std::string, std::string>>& kv);

std::vector<std::string> split_csv_line(const std::string& line);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Reads a numeric CSV with a header row. Comment lines start with '#'.
// Ragged rows raise FormatError with the offending line number.
CsvTable read_csv(const std::string& path);

}  // namespace gridadapt
