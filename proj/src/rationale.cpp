#include "cotforge/rationale.hpp"

#include <algorithm>
#include <cctype>

namespace cotforge {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Non-ASCII bytes count as word characters so UTF-8 words stay whole.
bool is_word_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u) != 0 || c == '_' || c == '\'';
}

// UTF-8 lead bytes of the General Punctuation block (U+2000..U+206F): dashes,
// curly quotes, ellipsis.
bool is_punct_sequence(std::string_view text, std::size_t i) {
  return i + 2 < text.size() && static_cast<unsigned char>(text[i]) == 0xE2 &&
         (static_cast<unsigned char>(text[i + 1]) & 0xFE) == 0x80;
}

std::vector<std::string> lower_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (is_punct_sequence(text, i)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
      i += 2;
    } else if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::size_t word_count(std::string_view text) noexcept {
  std::size_t count = 0;
  bool in_word = false;
  for (char c : text) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

std::string first_words(std::string_view text, std::size_t max_words) {
  std::size_t count = 0;
  bool in_word = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (is_space(text[i])) {
      if (in_word && count == max_words) return std::string(text.substr(0, i));
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return std::string(text);
}

double rationale_ratio(std::string_view cot_text, std::string_view rationale_text) {
  if (cot_text.empty()) throw Error(ErrorCode::kInvalidArgument, "rationale ratio of an empty CoT");
  const std::size_t cot_words = word_count(cot_text);
  if (cot_words == 0) return 0.0;
  const double r =
      static_cast<double>(word_count(rationale_text)) / static_cast<double>(cot_words);
  return std::clamp(r, 0.0, 1.0);
}

std::size_t count_aha(std::string_view cot_text, const std::vector<std::string>& trigger_lexicon) {
  const auto words = lower_words(cot_text);
  std::size_t total = 0;
  for (const auto& entry : trigger_lexicon) {
    const auto pattern = lower_words(entry);
    if (pattern.empty() || pattern.size() > words.size()) continue;
    for (std::size_t i = 0; i + pattern.size() <= words.size(); ++i) {
      if (std::equal(pattern.begin(), pattern.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
        ++total;
      }
    }
  }
  return total;
}

std::optional<std::string> extract_rationale(std::string_view cot_text, const ExtractorConfig& cfg) {
  if (cot_text.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot extract from an empty CoT");
  if (cfg.gateway == nullptr) return std::nullopt;

  CompletionRequest req;
  req.endpoint_ref = cfg.endpoint;
  req.prompt_parts = {PromptPart::text(cfg.prompt.render({{"cot", std::string(cot_text)}}))};
  req.temperature = 0.0;
  req.max_output_units = cfg.max_output_units;
  try {
    const auto resp = cfg.gateway->complete(req, cfg.policy);
    return first_words(resp.text, word_count(cot_text));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument) throw;
    return std::nullopt;
  }
}

RationaleReport analyze_rationale(std::string_view cot_text, const ExtractorConfig& cfg,
                                  const std::vector<std::string>& trigger_lexicon) {
  RationaleReport report;
  report.cot_length_units = word_count(cot_text);
  report.aha_count = count_aha(cot_text, trigger_lexicon);
  auto extracted = extract_rationale(cot_text, cfg);
  if (!extracted) {
    report.missing = true;
    return report;
  }
  report.rationale_text = std::move(*extracted);
  report.rationale_length_units = word_count(report.rationale_text);
  report.ratio = rationale_ratio(cot_text, report.rationale_text);
  return report;
}

}  // namespace cotforge
