#include "cotforge/validity.hpp"

#include <cctype>
#include <cmath>

namespace cotforge {

double confidence(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) {
    throw Error(ErrorCode::kEmptySequence, "confidence of an empty token sequence");
  }
  double sum = 0.0;
  for (double lp : token_logprobs) {
    if (!std::isfinite(lp) || lp > 0.0) {
      throw Error(ErrorCode::kNonFiniteLogprob,
                  "log-probability " + std::to_string(lp) + " is not finite and <= 0");
    }
    sum += lp;
  }
  return std::exp(sum / static_cast<double>(token_logprobs.size()));
}

namespace {

std::string trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace

AnswerSpan answer_span(const CompletionResponse& response, std::string_view delimiter) {
  AnswerSpan span;
  const std::string& text = response.text;
  const auto at = delimiter.empty() ? std::string::npos : text.rfind(delimiter);
  if (at == std::string::npos) {
    span.answer = trimmed(text);
    if (response.token_logprobs) span.logprobs = *response.token_logprobs;
    return span;
  }
  std::size_t start = at + delimiter.size();
  span.answer = trimmed(std::string_view(text).substr(start));
  while (start < text.size() && std::isspace(static_cast<unsigned char>(text[start]))) ++start;

  if (!response.token_logprobs) return span;
  const auto& lps = *response.token_logprobs;
  if (!response.token_texts) {
    span.logprobs = lps;
    return span;
  }
  // Keep tokens that end past the answer start. If the tokens do not
  // reassemble the text we cannot locate the span, so keep them all.
  const auto& toks = *response.token_texts;
  std::size_t offset = 0;
  std::vector<double> tail;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    offset += toks[i].size();
    if (offset > start) tail.push_back(lps[i]);
  }
  span.logprobs = (offset == text.size() && !tail.empty()) ? std::move(tail) : lps;
  return span;
}

namespace {

PlayerRun run_player(const Instance& instance, std::string prompt, const PromptTemplate& tmpl,
                     const SampleIndex& index, std::uint64_t seed, bool with_cot,
                     const PlayerConfig& player, const LlmJudgeConfig& judge_cfg) {
  PlayerRun run;
  run.instance_id = instance.id;
  run.index = index;
  run.seed = seed;
  run.with_cot = with_cot;

  if (player.gateway == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "player gateway is not configured");
  }
  CompletionRequest req;
  req.endpoint_ref = player.endpoint;
  req.prompt_parts.push_back(PromptPart::text(std::move(prompt)));
  if (!instance.image_ref.empty()) req.prompt_parts.push_back(PromptPart::image(instance.image_ref));
  req.seed = seed;
  req.temperature = player.temperature;
  req.max_output_units = player.max_output_units;
  req.want_logprobs = true;

  CompletionResponse resp;
  try {
    resp = player.gateway->complete(req, player.policy);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kExhaustedRetries || e.code() == ErrorCode::kPermanentRejection) {
      return run;
    }
    throw;
  }
  AnswerSpan span = answer_span(resp, tmpl.answer_delimiter);
  run.answer_text = std::move(span.answer);
  if (span.logprobs.empty()) return run;
  run.confidence = confidence(span.logprobs);
  run.judge_ok = judge(run.answer_text, instance.gold_answer, judge_cfg).consistent;
  return run;
}

}  // namespace

PlayerRun play_with_cot(const Instance& instance, std::string_view cot_text,
                        const SampleIndex& index, std::uint64_t seed, const PlayerConfig& player,
                        const LlmJudgeConfig& judge_cfg) {
  if (cot_text.empty()) throw Error(ErrorCode::kInvalidArgument, "player needs a non-empty CoT");
  std::string prompt =
      player.with_cot.render({{"query", instance.query}, {"cot", std::string(cot_text)}});
  return run_player(instance, std::move(prompt), player.with_cot, index, seed, true, player,
                    judge_cfg);
}

PlayerRun play_without_cot(const Instance& instance, const SampleIndex& index, std::uint64_t seed,
                           const PlayerConfig& player, const LlmJudgeConfig& judge_cfg) {
  std::string prompt = player.without_cot.render({{"query", instance.query}});
  return run_player(instance, std::move(prompt), player.without_cot, index, seed, false, player,
                    judge_cfg);
}

}  // namespace cotforge
