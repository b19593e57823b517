#pragma once

// Stage I: every instance is sent to each of M agents K times, each time
// with its own derived seed, and every reply becomes one candidate record.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cotforge/core.hpp"
#include "cotforge/dataset_io.hpp"
#include "cotforge/gateway.hpp"
#include "cotforge/prompts.hpp"
#include "cotforge/run_control.hpp"

namespace cotforge {

struct SynthesisPlan {
  std::vector<Instance> instances;
  std::vector<AgentProfile> agents;
  std::size_t k = 6;
  SeedSpec seed_spec;

  GridShape shape() const noexcept { return {instances.size(), agents.size(), k}; }
  /// Throws kInvalidArgument on M = 0, K = 0, or invalid instances/agents.
  void validate() const;
};

struct ParsedAnswer {
  std::string cot_text;
  std::string predicted_answer;
};

/// Splits a reply at the LAST occurrence of the template's answer
/// delimiter. Without a delimiter the whole reply is the CoT and the answer
/// is empty. Both halves are trimmed.
ParsedAnswer parse_answer(std::string_view raw_completion, const PromptTemplate& tmpl);

struct SynthesisOptions {
  /// Templates by id; agents name theirs via prompt_template_id. An agent
  /// with an unknown or empty id uses `default_template`.
  std::map<std::string, PromptTemplate> templates;
  PromptTemplate default_template = default_templates::synthesis();
  RetryPolicy policy;
  double temperature = 1.0;
  int max_output_units = 4096;
  std::size_t workers = 8;
};

/// Runs the full grid, appending each finished record to `checkpoint` and
/// skipping indices already there. Returns all N*M*K records in canonical
/// (n, m, k) order and rewrites the checkpoint in that order.
///
/// Replies that fail after retries, or are refused, become records with
/// generation_failed=true. A permanent rejection from an agent stops the
/// run with kFatalEndpoint once in-flight records are flushed.
std::vector<RawCandidate> synthesize(const SynthesisPlan& plan, const Gateway& gateway,
                                     const std::filesystem::path& checkpoint,
                                     const SynthesisOptions& options,
                                     RunControl* control = nullptr);

}  // namespace cotforge
