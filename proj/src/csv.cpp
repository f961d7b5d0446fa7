#include "mmsev/csv.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>

#include "mmsev/errors.hpp"

namespace mmsev::csv {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view field, const std::filesystem::path& file, std::size_t line) {
  field = trim(field);
  double v = 0.0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ParseError(fmt::format("{}:{}: expected a number, got '{}'", file.string(), line, field));
  }
  return v;
}

long long parse_int(std::string_view field, const std::filesystem::path& file, std::size_t line) {
  field = trim(field);
  long long v = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw ParseError(fmt::format("{}:{}: expected an integer, got '{}'", file.string(), line, field));
  }
  return v;
}

std::ifstream open_input(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError(fmt::format("cannot open '{}' for reading", file.string()));
  return in;
}

std::ofstream open_output(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw FormatError(fmt::format("cannot open '{}' for writing", file.string()));
  return out;
}

std::string format_exact(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace mmsev::csv
