#pragma once

// Length appropriateness: how much of a CoT is load-bearing reasoning, plus
// the reflection-trigger ("aha moment") counter used in quality reports.
//
// Lengths are whitespace-delimited word counts throughout.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cotforge/gateway.hpp"
#include "cotforge/prompts.hpp"

namespace cotforge {

std::size_t word_count(std::string_view text) noexcept;

/// The first `max_words` whitespace-delimited words of `text`, with the
/// original spacing between them.
std::string first_words(std::string_view text, std::size_t max_words);

/// len(rationale) / len(cot) in words, clamped to [0, 1]. Throws
/// kInvalidArgument on an empty CoT; a whitespace-only CoT yields 0.
double rationale_ratio(std::string_view cot_text, std::string_view rationale_text);

/// Case-insensitive whole-word count of lexicon entries. Multi-word entries
/// match consecutive words.
std::size_t count_aha(std::string_view cot_text, const std::vector<std::string>& trigger_lexicon);

inline const std::vector<std::string>& default_trigger_lexicon() {
  static const std::vector<std::string> lexicon{"wait"};
  return lexicon;
}

struct ExtractorConfig {
  const Gateway* gateway = nullptr;
  std::string endpoint;
  PromptTemplate prompt = default_templates::extractor();
  RetryPolicy policy;
  int max_output_units = 4096;
};

/// Asks the extractor (temperature 0) for the core reasoning of `cot_text`,
/// truncated to the CoT's word count. Returns nullopt when the extractor is
/// unreachable. Throws kInvalidArgument on an empty CoT.
std::optional<std::string> extract_rationale(std::string_view cot_text, const ExtractorConfig& cfg);

struct RationaleReport {
  std::string rationale_text;
  double ratio = 0.0;
  std::size_t cot_length_units = 0;
  std::size_t rationale_length_units = 0;
  std::size_t aha_count = 0;
  /// The extractor failed; ratio is then 0.
  bool missing = false;
};

RationaleReport analyze_rationale(std::string_view cot_text, const ExtractorConfig& cfg,
                                  const std::vector<std::string>& trigger_lexicon);

}  // namespace cotforge
