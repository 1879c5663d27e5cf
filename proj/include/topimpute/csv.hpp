#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace topimpute::csv {

/// Header row, UTF-8, comma separated, '.' decimal. Fields may be double
/// quoted; embedded quotes are doubled.
class Reader {
 public:
  explicit Reader(std::istream& in);

  const std::vector<std::string>& header() const { return header_; }
  /// Column position, or -1 when absent.
  int column(std::string_view name) const;
  /// Next data row; false at end of input. Blank lines are skipped.
  bool next(std::vector<std::string>& fields);
  std::size_t line_number() const { return line_; }

 private:
  std::istream& in_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
};

std::vector<std::string> split_line(std::string_view line);

/// Shortest text that parses back to exactly the same double.
std::string format_double(double v);

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);
  explicit Writer(std::ostream& out);

  void row(const std::vector<std::string>& fields);
  std::ostream& stream() { return *out_; }

 private:
  std::ofstream file_;
  std::ostream* out_;
};

}  // namespace topimpute::csv
