#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tripleval {

std::string_view trim(std::string_view s);

// Collapses runs of ASCII whitespace to a single space and trims the ends.
std::string collapse_whitespace(std::string_view s);

// ASCII lowercase; bytes >= 0x80 pass through untouched.
std::string ascii_lower(std::string_view s);

bool starts_with_word(std::string_view s, std::string_view word);

std::vector<std::string> split_whitespace(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Replaces every "{{name}}" with its value. Unknown placeholders are left in
// place.
std::string render_placeholders(
    std::string_view tmpl,
    const std::vector<std::pair<std::string, std::string>>& values);

std::string read_file(const std::string& path);

// Quotes a CSV field when it contains a comma, quote or line break.
std::string csv_escape(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);

// RFC 4180 style: quoted fields may contain commas, doubled quotes and line
// breaks. Blank lines are skipped.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

// printf "%.*f"; NaN and infinities are rejected with DataError.
std::string format_fixed(double value, int decimals);

// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::string& path, std::string_view content);

}  // namespace tripleval
