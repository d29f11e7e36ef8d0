#pragma once

#include <map>
#include <string>
#include <vector>

namespace tripleval {

enum class RougeVariant { kRouge1, kRougeL };

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  RougeVariant variant = RougeVariant::kRouge1;
};

// Lowercased runs of alphanumeric bytes. Bytes >= 0x80 count as word
// characters so UTF-8 letters and symbols such as "µ" stay inside tokens.
std::vector<std::string> rouge_tokens(std::string_view text);

// Clipped unigram overlap.
RougeScore rouge1(std::string_view candidate, std::string_view reference);
RougeScore rouge1_tokens(const std::vector<std::string>& candidate,
                         const std::vector<std::string>& reference);

// Longest common subsequence over tokens.
RougeScore rougeL(std::string_view candidate, std::string_view reference);
RougeScore rougeL_tokens(const std::vector<std::string>& candidate,
                         const std::vector<std::string>& reference);

size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Scores computed elsewhere (BERTScore and the like), keyed by instance id.
struct ExternalScore {
  std::string instance_id;
  std::string metric;
  double value = 0.0;
};

// CSV rows of instance_id,metric_name,value. A header row naming
// instance_id is skipped. Throws DataError on malformed rows.
std::vector<ExternalScore> parse_external_scores(std::string_view csv, const std::string& origin);
std::vector<ExternalScore> read_external_scores(const std::string& path);

}  // namespace tripleval
