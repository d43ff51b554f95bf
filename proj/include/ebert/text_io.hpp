#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ebert {

/// Error raised by any of the text-format parsers. Message carries the file
/// path and, where meaningful, the 1-based line number of the offending row.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& path, std::int64_t line, const std::string& what)
      : std::runtime_error(format(path, line, what)), path_(path), line_(line) {}

  const std::string& path() const { return path_; }
  std::int64_t line() const { return line_; }  // -1 when not line-specific

private:
  static std::string format(const std::string& path, std::int64_t line,
                            const std::string& what) {
    std::ostringstream os;
    os << path;
    if (line >= 0) os << ":" << line;
    os << ": " << what;
    return os.str();
  }
  std::string path_;
  std::int64_t line_;
};

namespace detail {

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t tab = line.find_first_of("\t ", pos);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, tab - pos));
    // collapse runs of blanks so space- and tab-separated fixtures both parse
    pos = line.find_first_not_of("\t ", tab);
    if (pos == std::string_view::npos) break;
  }
  while (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

inline bool parse_i64(std::string_view f, std::int64_t& v) {
  auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  return ec == std::errc() && p == f.data() + f.size();
}

inline bool parse_f64(std::string_view f, double& v) {
  // from_chars<double> is missing on some libstdc++ versions; strtod is fine here
  std::string tmp(f);
  char* end = nullptr;
  v = std::strtod(tmp.c_str(), &end);
  return end == tmp.c_str() + tmp.size() && !tmp.empty();
}

}  // namespace detail

/// Read a whole text file into lines (CR stripped). Throws ParseError for a
/// missing file.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, -1, "cannot open file");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(detail::strip_cr(std::move(line)));
  return lines;
}

}  // namespace ebert
