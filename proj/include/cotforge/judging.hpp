#pragma once

// Answer-consistency judging: a normalization fast path, then an LLM call.

#include <optional>
#include <string>
#include <string_view>

#include "cotforge/gateway.hpp"
#include "cotforge/prompts.hpp"

namespace cotforge {

struct JudgeVerdict {
  enum class Method { kExactNormalized, kLlm };
  enum class Flag { kNone, kMalformed, kUnavailable };

  bool consistent = false;
  Method method = Method::kExactNormalized;
  /// One-line justification from the LLM judge; never set on the fast path.
  std::optional<std::string> rationale_text;
  Flag flag = Flag::kNone;
};

std::string_view to_string(JudgeVerdict::Method method) noexcept;
std::string_view to_string(JudgeVerdict::Flag flag) noexcept;

/// Trim, ASCII case-fold, collapse whitespace, strip terminal punctuation.
std::string normalize_answer(std::string_view answer);

/// Fast-path equivalence: equal normalized text, or both parse as decimals
/// equal within relative tolerance 1e-9. Percentages and fractions are
/// compared as text. Symmetric in its arguments.
bool exact_normalized(std::string_view a, std::string_view b);

/// How to reach the LLM judge. A null gateway means no fallback is available.
struct LlmJudgeConfig {
  const Gateway* gateway = nullptr;
  std::string endpoint;
  PromptTemplate prompt = default_templates::judge();
  RetryPolicy policy;
  double temperature = 0.0;
  int max_output_units = 256;
};

/// Parses "CONSISTENT"/"INCONSISTENT" on the first non-empty line; anything
/// else is inconsistent with Flag::kMalformed.
JudgeVerdict parse_judge_reply(std::string_view reply);

/// Throws kInvalidArgument when `gold` is empty. An unreachable LLM judge
/// yields consistent=false with Flag::kUnavailable rather than an error.
JudgeVerdict judge(std::string_view predicted, std::string_view gold, const LlmJudgeConfig& llm);

inline int judge_to_unit(const JudgeVerdict& verdict) noexcept { return verdict.consistent ? 1 : 0; }

}  // namespace cotforge
