#pragma once

#include <map>
#include <string>

#include "tripleval/extractor.h"
#include "tripleval/judge.h"
#include "tripleval/llm_gateway.h"

namespace tripleval {

// All prompt templates of a run, loaded from <dir>/{extraction,grounding,generation}.
struct PromptSet {
  ExtractionPromptBundle extraction;
  GroundingTemplate grounding;
  GenerationTemplate generation;

  // Throws ConfigError when a template is missing or incomplete.
  static PromptSet load(const std::string& dir);

  // {"extraction": ..., "grounding": ..., "generation": ...}
  std::map<std::string, std::string> hashes() const;
};

}  // namespace tripleval
