#include "cotforge/prompts.hpp"

#include <fstream>
#include <sstream>

#include "cotforge/error.hpp"

namespace cotforge {

std::string PromptTemplate::render(const std::map<std::string, std::string>& vars) const {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find('{', pos);
    if (open == std::string::npos) {
      out.append(text, pos, std::string::npos);
      break;
    }
    out.append(text, pos, open - pos);
    const auto close = text.find('}', open + 1);
    if (close == std::string::npos) {
      out.append(text, open, std::string::npos);
      break;
    }
    const auto key = text.substr(open + 1, close - open - 1);
    if (auto it = vars.find(key); it != vars.end()) {
      out += it->second;
    } else {
      out.append(text, open, close - open + 1);
    }
    pos = close + 1;
  }
  return out;
}

namespace default_templates {

PromptTemplate synthesis() {
  return {"synthesis",
          "{query}\n\n"
          "Think through the problem step by step, checking your work as you go. "
          "When you are finished, write the final answer on its own line as \"Answer: <answer>\".",
          "Answer:"};
}

PromptTemplate player_with_cot() {
  return {"player_with_cot",
          "{query}\n\n"
          "Reference reasoning:\n{cot}\n\n"
          "Using the reference reasoning above, reply with only the final answer.",
          "Answer:"};
}

PromptTemplate player_without_cot() {
  return {"player_without_cot", "{query}\n\nReply with only the final answer.", "Answer:"};
}

PromptTemplate judge() {
  return {"judge",
          "Gold answer: {gold}\n"
          "Predicted answer: {predicted}\n\n"
          "Is the predicted answer consistent with the gold answer? Reply with exactly CONSISTENT "
          "or INCONSISTENT on the first line, then one line of justification.",
          ""};
}

PromptTemplate extractor() {
  return {"extractor",
          "Below is a chain of reasoning. Copy out only the steps needed to reach its conclusion, "
          "in their original order and wording. Drop repeated checks, restarts and filler. Do not "
          "add anything.\n\n"
          "Reasoning:\n{cot}",
          ""};
}

}  // namespace default_templates

PromptTemplate load_template(const std::filesystem::path& path, std::string id,
                             std::string answer_delimiter) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigInvalid, "cannot read template " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return {std::move(id), ss.str(), std::move(answer_delimiter)};
}

}  // namespace cotforge
