#include "topimpute/csv.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include "topimpute/config.hpp"

namespace topimpute::csv {

std::vector<std::string> split_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

Reader::Reader(std::istream& in) : in_(in) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (trim(line).empty()) continue;
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
    header_ = split_line(line);
    for (auto& h : header_) h = trim(h);
    return;
  }
  throw ConfigError("CSV input has no header row");
}

int Reader::column(std::string_view name) const {
  for (std::size_t i = 0; i < header_.size(); ++i)
    if (header_[i] == name) return static_cast<int>(i);
  return -1;
}

bool Reader::next(std::vector<std::string>& fields) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (trim(line).empty()) continue;
    fields = split_line(line);
    return true;
  }
  return false;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Writer::Writer(const std::filesystem::path& path) : file_(path, std::ios::binary), out_(&file_) {
  if (!file_) throw std::runtime_error("cannot write " + path.string());
}

Writer::Writer(std::ostream& out) : out_(&out) {}

void Writer::row(const std::vector<std::string>& fields) {
  std::ostream& o = *out_;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) o << ',';
    const std::string& f = fields[i];
    if (f.find_first_of(",\"\n") != std::string::npos) {
      o << '"';
      for (char c : f) {
        if (c == '"') o << '"';
        o << c;
      }
      o << '"';
    } else {
      o << f;
    }
  }
  o << '\n';
}

}  // namespace topimpute::csv
