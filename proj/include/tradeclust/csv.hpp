#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tradeclust::csv {

/// Splits one unquoted CSV record; trailing '\r' is dropped.
std::vector<std::string> split(const std::string& line);

/// Reads records (skipping the header) and checks header/arity.
/// Each record carries its 1-based line number.
struct Record {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::vector<Record> read(std::istream& in, const std::vector<std::string>& expected_header);

double to_double(const std::string& field, std::size_t line);
long long to_int(const std::string& field, std::size_t line);

}  // namespace tradeclust::csv
