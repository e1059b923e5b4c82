#include "tradeclust/csv.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <sstream>

#include "tradeclust/common.hpp"

namespace tradeclust::csv {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::vector<Record> read(std::istream& in, const std::vector<std::string>& expected_header) {
  std::vector<Record> records;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      if (split(line) != expected_header) {
        std::ostringstream msg;
        msg << "line " << line_no << ": expected header '";
        for (std::size_t i = 0; i < expected_header.size(); ++i)
          msg << (i ? "," : "") << expected_header[i];
        msg << "'";
        throw DataError(msg.str());
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    Record r{line_no, split(line)};
    if (r.fields.size() != expected_header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(expected_header.size()) + " fields, got " +
                      std::to_string(r.fields.size()));
    }
    records.push_back(std::move(r));
  }
  if (!header_seen) throw DataError("missing header row");
  return records;
}

double to_double(const std::string& field, std::size_t line) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || !std::isfinite(value)) {
    throw DataError("line " + std::to_string(line) + ": cannot parse number '" + field + "'");
  }
  return value;
}

long long to_int(const std::string& field, std::size_t line) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw DataError("line " + std::to_string(line) + ": cannot parse integer '" + field + "'");
  }
  return value;
}

}  // namespace tradeclust::csv
