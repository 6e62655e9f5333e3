#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mktsim::csv {

/// Shortest decimal text that parses back to exactly the same double.
std::string number(double v);
std::string number(long long v);

double parse_double(std::string_view s);
long long parse_int(std::string_view s);

/// Splits one line on commas (no quoting; fields never contain commas).
std::vector<std::string_view> split(std::string_view line);

std::string join(const std::vector<std::string>& fields);

/// Writes text with '\n' line endings, creating parent directories.
void write_file(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

/// Lines of a file with trailing '\r' stripped.
std::vector<std::string> read_lines(const std::filesystem::path& path);

} // namespace mktsim::csv
