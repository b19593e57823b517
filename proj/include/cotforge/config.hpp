#pragma once

// Run configuration. Precedence: command-line flag > config file > the
// defaults below.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cotforge/core.hpp"
#include "cotforge/gateway.hpp"
#include "cotforge/prompts.hpp"

namespace cotforge {

struct EndpointConfig {
  std::string id;
  HttpEndpointConfig http;
  double temperature = 0.0;
  int max_output_units = 1024;
  /// Optional prompt template file, resolved against the config directory.
  std::filesystem::path template_path;
};

struct RunConfig {
  std::filesystem::path corpus_path;
  std::filesystem::path run_dir = "run";
  /// Directory of the config file; relative paths resolve against it.
  std::filesystem::path base_dir = ".";

  std::vector<EndpointConfig> agents;
  EndpointConfig judge{"judge", {}, 0.0, 256, {}};
  EndpointConfig player{"player", {}, 0.0, 256, {}};
  EndpointConfig extractor{"extractor", {}, 0.0, 4096, {}};
  std::filesystem::path player_without_cot_template;

  std::size_t k = 6;
  std::uint64_t base_seed = 0;
  ScoreWeights weights;
  double eta = 0.2;
  std::vector<double> eta_sweep;
  std::size_t concurrency = 8;
  std::vector<std::string> trigger_lexicon{"wait"};
  std::string answer_delimiter = "Answer:";
  RetryPolicy retry;
  bool audit = true;
  bool resume = true;
  /// Route every role to the built-in simulated backends.
  bool mock = false;
  /// Agent count used in mock mode when no agents are configured.
  std::size_t mock_agents = 3;

  std::size_t agent_count() const noexcept {
    return agents.empty() && mock ? mock_agents : agents.size();
  }
  /// Agents with defaults filled in for mock mode.
  std::vector<EndpointConfig> effective_agents() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Parses a TOML config file. Throws kConfigInvalid on syntax or type errors.
RunConfig load_config(const std::filesystem::path& path);

/// Parses TOML text; relative paths resolve against `base_dir`.
RunConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir);

/// Checks invariants (K >= 1, eta in (0, 1], at least one agent, weights
/// valid) and, when `check_paths`, that the corpus and templates exist.
/// Throws kConfigInvalid.
void validate(const RunConfig& config, bool check_paths = true);

/// "0.2,0.4" -> {0.2, 0.4}. Throws kConfigInvalid.
std::vector<double> parse_eta_list(std::string_view text);

/// "1,2,1,1" -> lambda_k, lambda_alpha, lambda_beta, lambda_gamma.
ScoreWeights parse_weights(std::string_view text);

PromptSet load_prompts(const RunConfig& config);

/// Values given on the command line. Each one that is set replaces the
/// corresponding config-file value.
struct ConfigOverrides {
  std::optional<std::filesystem::path> run_dir;
  std::optional<double> eta;
  std::optional<std::vector<double>> eta_sweep;
  std::optional<ScoreWeights> weights;
  std::optional<std::size_t> concurrency;
  std::optional<bool> resume;
  std::optional<bool> mock;
};

void apply_overrides(RunConfig& config, const ConfigOverrides& overrides);

}  // namespace cotforge
