#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace cotforge {

/// A prompt body with `{name}` placeholders. `answer_delimiter` marks where
/// the final answer starts in a reply to this prompt.
struct PromptTemplate {
  std::string id;
  std::string text;
  std::string answer_delimiter = "Answer:";

  /// Replaces every `{key}` with its value; unknown placeholders are kept.
  std::string render(const std::map<std::string, std::string>& vars) const;
};

/// Built-in templates. These are artifact defaults, not tuned prompts.
namespace default_templates {
PromptTemplate synthesis();
PromptTemplate player_with_cot();
PromptTemplate player_without_cot();
PromptTemplate judge();
PromptTemplate extractor();
}  // namespace default_templates

/// Reads a template body from a text file, keeping the given id and delimiter.
PromptTemplate load_template(const std::filesystem::path& path, std::string id,
                             std::string answer_delimiter = "Answer:");

/// The five prompts a pipeline run uses.
struct PromptSet {
  PromptTemplate synthesis = default_templates::synthesis();
  PromptTemplate player_with_cot = default_templates::player_with_cot();
  PromptTemplate player_without_cot = default_templates::player_without_cot();
  PromptTemplate judge = default_templates::judge();
  PromptTemplate extractor = default_templates::extractor();
};

}  // namespace cotforge
