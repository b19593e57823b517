#include "cotforge/judging.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace cotforge {

std::string_view to_string(JudgeVerdict::Method method) noexcept {
  return method == JudgeVerdict::Method::kLlm ? "llm" : "exact_normalized";
}

std::string_view to_string(JudgeVerdict::Flag flag) noexcept {
  switch (flag) {
    case JudgeVerdict::Flag::kNone: return "none";
    case JudgeVerdict::Flag::kMalformed: return "malformed";
    case JudgeVerdict::Flag::kUnavailable: return "unavailable";
  }
  return "none";
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_terminal_punct(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_decimal(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value,
                                         std::chars_format::fixed | std::chars_format::scientific);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

}  // namespace

std::string normalize_answer(std::string_view answer) {
  std::string out;
  out.reserve(answer.size());
  bool pending_space = false;
  for (char c : trim(answer)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  while (!out.empty() && (is_terminal_punct(out.back()) || is_space(out.back()))) out.pop_back();
  return out;
}

bool exact_normalized(std::string_view a, std::string_view b) {
  const std::string na = normalize_answer(a);
  const std::string nb = normalize_answer(b);
  if (na == nb) return !na.empty();
  const auto da = parse_decimal(na);
  const auto db = parse_decimal(nb);
  if (!da || !db) return false;
  const double scale = std::max(std::fabs(*da), std::fabs(*db));
  return std::fabs(*da - *db) <= 1e-9 * scale;
}

JudgeVerdict parse_judge_reply(std::string_view reply) {
  JudgeVerdict v;
  v.method = JudgeVerdict::Method::kLlm;

  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    auto end = reply.find('\n', pos);
    if (end == std::string_view::npos) end = reply.size();
    if (auto line = trim(reply.substr(pos, end - pos)); !line.empty()) lines.push_back(line);
    pos = end + 1;
  }
  if (lines.empty()) {
    v.flag = JudgeVerdict::Flag::kMalformed;
    return v;
  }
  std::string head(lines.front());
  while (!head.empty() && is_terminal_punct(head.back())) head.pop_back();
  for (auto& c : head) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (head == "CONSISTENT") {
    v.consistent = true;
  } else if (head != "INCONSISTENT") {
    v.flag = JudgeVerdict::Flag::kMalformed;
  }
  if (lines.size() > 1) v.rationale_text = std::string(lines[1]);
  return v;
}

JudgeVerdict judge(std::string_view predicted, std::string_view gold, const LlmJudgeConfig& llm) {
  if (trim(gold).empty()) throw Error(ErrorCode::kInvalidArgument, "gold answer is empty");

  JudgeVerdict fast;
  if (normalize_answer(predicted).empty()) return fast;
  if (exact_normalized(predicted, gold)) {
    fast.consistent = true;
    return fast;
  }

  JudgeVerdict unavailable;
  unavailable.method = JudgeVerdict::Method::kLlm;
  unavailable.flag = JudgeVerdict::Flag::kUnavailable;
  if (llm.gateway == nullptr) return unavailable;

  CompletionRequest req;
  req.endpoint_ref = llm.endpoint;
  req.prompt_parts = {PromptPart::text(
      llm.prompt.render({{"gold", std::string(gold)}, {"predicted", std::string(predicted)}}))};
  req.temperature = llm.temperature;
  req.max_output_units = llm.max_output_units;
  try {
    return parse_judge_reply(llm.gateway->complete(req, llm.policy).text);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument) throw;
    return unavailable;
  }
}

}  // namespace cotforge
