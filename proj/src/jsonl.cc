#include "tripleval/jsonl.h"

#include "tripleval/errors.h"
#include "tripleval/strings.h"

namespace tripleval {

std::vector<json> parse_jsonl(const std::string& text, const std::string& origin) {
  std::vector<json> rows;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    ++line_no;
    std::string_view line = trim(std::string_view(text).substr(pos, nl - pos));
    if (!line.empty()) {
      try {
        rows.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        throw DataError(origin + ":" + std::to_string(line_no) +
                        ": malformed JSON: " + e.what());
      }
    }
    pos = nl + 1;
  }
  return rows;
}

std::vector<json> read_jsonl(const std::string& path) {
  return parse_jsonl(read_file(path), path);
}

std::string to_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& row : rows) {
    out += row.dump(-1, ' ', false, json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

void write_jsonl(const std::string& path, const std::vector<json>& rows) {
  write_file_atomic(path, to_jsonl(rows));
}

}  // namespace tripleval
