#include "tripleval/prompts.h"

#include "tripleval/errors.h"

namespace tripleval {

PromptSet PromptSet::load(const std::string& dir) {
  PromptSet p;
  try {
    p.extraction = ExtractionPromptBundle::load(dir + "/extraction");
    p.grounding = GroundingTemplate::load(dir + "/grounding");
    p.generation = GenerationTemplate::load(dir + "/generation");
  } catch (const DataError& e) {
    throw ConfigError(std::string("prompt templates: ") + e.what());
  }
  return p;
}

std::map<std::string, std::string> PromptSet::hashes() const {
  return {{"extraction", extraction.hash()},
          {"grounding", grounding.hash()},
          {"generation", generation.hash()}};
}

}  // namespace tripleval
