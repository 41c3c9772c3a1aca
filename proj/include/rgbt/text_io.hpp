#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rgbt::text {

// 17 significant digits; parsing the result recovers the exact double.
std::string format_double(double value);

// Splits on a single-character delimiter. A space delimiter collapses runs
// of blanks and tabs, matching whitespace-separated logs.
std::vector<std::string_view> split(std::string_view line, char delimiter);

std::string_view trim(std::string_view s);

// Strict parsers: the whole token must be consumed. Return false on failure.
bool parse_double(std::string_view token, double& out);
bool parse_int(std::string_view token, long long& out);

std::string join(const std::vector<double>& values, char delimiter);

// Reads a whole file or throws rgbt::Error.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace rgbt::text
