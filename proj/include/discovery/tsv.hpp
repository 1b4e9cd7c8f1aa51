#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace discovery::tsv {

// Shortest decimal text that reads back to exactly `value`.
std::string format_double(double value);

// Fixed-point text with `decimals` digits after the point.
std::string format_fixed(double value, int decimals);

std::vector<std::string_view> split(std::string_view line, char delimiter = '\t');

// Replaces tabs and line breaks so a free-text value fits in one TSV cell.
std::string sanitize_cell(std::string_view text);

// Strict numeric parsing; returns false on trailing garbage or overflow.
bool parse_double(std::string_view text, double& out);
bool parse_u64(std::string_view text, unsigned long long& out);

std::string_view strip_cr(std::string_view line);

}  // namespace discovery::tsv
