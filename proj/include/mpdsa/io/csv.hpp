#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mpdsa/errors.hpp"

namespace mpdsa::io {

/// Shortest representation that parses back to the same double; nan/inf spelled out.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

inline std::string quote_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// RFC 4180 table built in memory; fixed column set given up front.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {
    if (columns_.empty()) throw InputError("csv table needs columns");
  }

  class Row {
   public:
    Row& operator<<(double v) { return cell(format_double(v)); }
    Row& operator<<(int v) { return cell(std::to_string(v)); }
    Row& operator<<(long v) { return cell(std::to_string(v)); }
    Row& operator<<(long long v) { return cell(std::to_string(v)); }
    Row& operator<<(unsigned long v) { return cell(std::to_string(v)); }
    Row& operator<<(unsigned long long v) { return cell(std::to_string(v)); }
    Row& operator<<(bool v) { return cell(v ? "1" : "0"); }
    Row& operator<<(const char* v) { return cell(quote_field(v)); }
    Row& operator<<(const std::string& v) { return cell(quote_field(v)); }

   private:
    friend class CsvTable;
    explicit Row(CsvTable& t) : table_(t) {}
    Row& cell(std::string s) {
      table_.cells_.push_back(std::move(s));
      return *this;
    }
    CsvTable& table_;
  };

  Row row() {
    if (cells_.size() % columns_.size() != 0) throw InputError("csv row has the wrong number of cells");
    return Row(*this);
  }

  size_t rows() const { return cells_.size() / columns_.size(); }
  const std::vector<std::string>& columns() const { return columns_; }

  std::string str() const {
    if (cells_.size() % columns_.size() != 0) throw InputError("csv table ends with a partial row");
    std::ostringstream os;
    for (size_t i = 0; i < columns_.size(); ++i) os << (i ? "," : "") << quote_field(columns_[i]);
    os << "\r\n";
    for (size_t i = 0; i < cells_.size(); ++i) {
      os << cells_[i];
      os << ((i + 1) % columns_.size() == 0 ? "\r\n" : ",");
    }
    return os.str();
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::string> cells_;
};

/// Configuration as "a|b" with sites "x:y" for d > 1, e.g. "5|0" or "1:2|0:0".
template <class Config>
std::string format_config(const Config& c) {
  std::string s;
  for (int i = 0; i < c.particles(); ++i) {
    if (i) s += '|';
    auto site = c.site(i);
    for (size_t k = 0; k < site.size(); ++k) {
      if (k) s += ':';
      s += std::to_string(site[k]);
    }
  }
  return s;
}

}  // namespace mpdsa::io
