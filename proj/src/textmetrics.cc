#include "tripleval/textmetrics.h"

#include <cmath>
#include <unordered_map>

#include "tripleval/errors.h"
#include "tripleval/strings.h"

namespace tripleval {
namespace {

bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         c >= 0x80;
}

RougeScore make_score(size_t overlap, size_t cand_len, size_t ref_len, RougeVariant variant) {
  RougeScore s;
  s.variant = variant;
  if (cand_len == 0 || ref_len == 0) return s;
  s.precision = static_cast<double>(overlap) / static_cast<double>(cand_len);
  s.recall = static_cast<double>(overlap) / static_cast<double>(ref_len);
  if (overlap > 0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

}  // namespace

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      cur += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

RougeScore rouge1_tokens(const std::vector<std::string>& candidate,
                         const std::vector<std::string>& reference) {
  std::unordered_map<std::string, size_t> ref_counts;
  for (const auto& t : reference) ++ref_counts[t];
  size_t overlap = 0;
  for (const auto& t : candidate) {
    auto it = ref_counts.find(t);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  return make_score(overlap, candidate.size(), reference.size(), RougeVariant::kRouge1);
}

RougeScore rouge1(std::string_view candidate, std::string_view reference) {
  return rouge1_tokens(rouge_tokens(candidate), rouge_tokens(reference));
}

size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rougeL_tokens(const std::vector<std::string>& candidate,
                         const std::vector<std::string>& reference) {
  return make_score(lcs_length(candidate, reference), candidate.size(), reference.size(),
                    RougeVariant::kRougeL);
}

RougeScore rougeL(std::string_view candidate, std::string_view reference) {
  return rougeL_tokens(rouge_tokens(candidate), rouge_tokens(reference));
}

std::vector<ExternalScore> parse_external_scores(std::string_view csv, const std::string& origin) {
  std::vector<ExternalScore> out;
  const auto rows = parse_csv(csv);
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (i == 0 && !row.empty() && trim(row[0]) == "instance_id") continue;
    const std::string where = origin + ": row " + std::to_string(i + 1);
    if (row.size() != 3) throw DataError(where + ": expected 3 fields");
    ExternalScore s{std::string(trim(row[0])), std::string(trim(row[1])), 0.0};
    if (s.instance_id.empty() || s.metric.empty()) throw DataError(where + ": empty key");
    const std::string v(trim(row[2]));
    char* end = nullptr;
    s.value = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || !std::isfinite(s.value)) {
      throw DataError(where + ": bad value '" + v + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ExternalScore> read_external_scores(const std::string& path) {
  return parse_external_scores(read_file(path), path);
}

}  // namespace tripleval
