#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace tripleval {

using json = nlohmann::json;

// One compact JSON document per line. Throws DataError naming the line on
// malformed input; blank lines are skipped.
std::vector<json> read_jsonl(const std::string& path);
std::vector<json> parse_jsonl(const std::string& text, const std::string& origin);

std::string to_jsonl(const std::vector<json>& rows);
void write_jsonl(const std::string& path, const std::vector<json>& rows);

template <typename T>
std::vector<json> to_json_rows(const std::vector<T>& items) {
  std::vector<json> rows;
  rows.reserve(items.size());
  for (const auto& item : items) rows.push_back(json(item));
  return rows;
}

template <typename T>
std::vector<T> from_json_rows(const std::vector<json>& rows) {
  std::vector<T> items;
  items.reserve(rows.size());
  for (const auto& row : rows) items.push_back(row.get<T>());
  return items;
}

}  // namespace tripleval
