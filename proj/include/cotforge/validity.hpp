#pragma once

// Reasoning-validity probing: a small non-reasoning "player" model answers
// each query with and without a candidate CoT, and we keep its answer and
// the sequence confidence of that answer.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotforge/core.hpp"
#include "cotforge/gateway.hpp"
#include "cotforge/judging.hpp"
#include "cotforge/prompts.hpp"

namespace cotforge {

/// exp(mean(logprobs)). Errors: kEmptySequence on an empty list;
/// kNonFiniteLogprob on a non-finite entry or one above zero.
double confidence(std::span<const double> token_logprobs);

struct PlayerRun {
  std::string instance_id;
  /// Grid slot whose derived seed drove this run. CoT-free runs use the
  /// same (n, m, k) grid as the CoT-aided ones.
  SampleIndex index;
  std::uint64_t seed = 0;
  bool with_cot = false;
  std::string answer_text;
  /// Absent iff the run failed; failed runs are left out of means.
  std::optional<double> confidence;
  bool judge_ok = false;

  bool failed() const noexcept { return !confidence.has_value(); }
};

struct PlayerConfig {
  const Gateway* gateway = nullptr;
  std::string endpoint;
  PromptTemplate with_cot = default_templates::player_with_cot();
  PromptTemplate without_cot = default_templates::player_without_cot();
  RetryPolicy policy;
  double temperature = 0.0;
  int max_output_units = 256;
};

/// The player's final answer and the log-probabilities of its tokens. When
/// the reply contains `delimiter`, only tokens after its last occurrence
/// count; otherwise the whole reply is the answer.
struct AnswerSpan {
  std::string answer;
  std::vector<double> logprobs;
};

AnswerSpan answer_span(const CompletionResponse& response, std::string_view delimiter);

/// Errors: kInvalidArgument on an empty CoT; kMalformedResponse when the
/// endpoint omits log-probabilities. Other endpoint failures produce a
/// failed run with judge_ok=false.
PlayerRun play_with_cot(const Instance& instance, std::string_view cot_text,
                        const SampleIndex& index, std::uint64_t seed, const PlayerConfig& player,
                        const LlmJudgeConfig& judge_cfg);

PlayerRun play_without_cot(const Instance& instance, const SampleIndex& index, std::uint64_t seed,
                           const PlayerConfig& player, const LlmJudgeConfig& judge_cfg);

}  // namespace cotforge
