#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mpipn::io {

/// Shortest-safe text form of a double: 17 significant digits, round-trips exactly.
std::string fmt(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position by header name; IoError when absent.
  std::size_t column(std::string_view name) const;
};

/// Comma-separated text with a header line. Blank lines are skipped; quoting is not supported.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::filesystem::path& path);

double to_double(std::string_view field);
long long to_int(std::string_view field);

/// 64-bit FNV-1a; used for checkpoint checksums and dataset fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
/// Writes the whole file, creating parent directories.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace mpipn::io
