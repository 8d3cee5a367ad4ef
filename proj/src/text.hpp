#pragma once

// Small parsing helpers shared by the CSV and model-file readers.

#include <string>
#include <string_view>
#include <vector>

namespace onset::text {

std::string_view trim(std::string_view s);

std::vector<std::string_view> split(std::string_view line, char sep);

// Splits into lines, dropping a trailing carriage return from each.
std::vector<std::string_view> lines(std::string_view content);

// Strict parses: the whole field must be consumed. Return false on failure.
bool to_int(std::string_view s, int& out);
bool to_double(std::string_view s, double& out);

// 17 significant digits, which round-trips every double.
std::string real(double value);

}  // namespace onset::text
