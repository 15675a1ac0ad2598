#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

namespace cava {

/// Minimal CSV writer: UTF-8, header row, RFC-4180 quoting, LF line ends.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) {
    append_row(header);
  }

  void append_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << quote(fields[i]);
    }
    out_ << '\n';
  }

  std::string str() const { return out_.str(); }

  static std::string quote(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string q = "\"";
    for (const char c : field) {
      if (c == '"') q += "\"\"";
      else q += c;
    }
    q += '"';
    return q;
  }

 private:
  std::ostringstream out_;
};

}  // namespace cava
