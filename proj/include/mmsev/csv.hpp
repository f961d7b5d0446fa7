#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace mmsev::csv {

/// Splits on commas and trims surrounding whitespace. No quoting support.
std::vector<std::string> split(std::string_view line, char sep = ',');
std::string_view trim(std::string_view s);

/// Parses a finite double; throws ParseError naming the file and line.
double parse_double(std::string_view field, const std::filesystem::path& file, std::size_t line);
long long parse_int(std::string_view field, const std::filesystem::path& file, std::size_t line);

std::ifstream open_input(const std::filesystem::path& file);
std::ofstream open_output(const std::filesystem::path& file);

/// Shortest decimal text that parses back to exactly the same double.
std::string format_exact(double v);

}  // namespace mmsev::csv
