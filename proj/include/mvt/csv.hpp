#pragma once

#include <string>
#include <vector>

namespace mvt {

// Shortest round-trip decimal representation (std::to_chars), '.' decimal
// point, locale independent. Reloading the printed value recovers the exact
// double.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// RFC 4180: quoted fields, doubled quotes, CRLF or LF line ends.
CsvTable read_csv(const std::string& path);

void write_csv(const std::string& path, const CsvTable& table);

}  // namespace mvt
