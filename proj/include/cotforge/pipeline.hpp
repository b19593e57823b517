#pragma once

// Stage orchestration over a run directory. Each stage checkpoints per
// record and ends by rewriting its outputs in canonical order. An
// interrupted stage resumes where it stopped; a finished one re-runs to
// identical bytes.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cotforge/batch_selection.hpp"
#include "cotforge/config.hpp"
#include "cotforge/dataset_io.hpp"
#include "cotforge/gateway.hpp"
#include "cotforge/instance_selection.hpp"
#include "cotforge/prompts.hpp"
#include "cotforge/run_control.hpp"

namespace cotforge {

namespace run_files {
inline constexpr const char* kCandidates = "candidates.jsonl";
inline constexpr const char* kScored = "scored.jsonl";
inline constexpr const char* kBaseline = "baseline.jsonl";
inline constexpr const char* kDcot = "dcot.jsonl";
inline constexpr const char* kExclusions = "exclusions.jsonl";
inline constexpr const char* kDcotPrime = "dcot_prime.jsonl";
inline constexpr const char* kScores = "scores.jsonl";
inline constexpr const char* kStatsDcot = "stats_dcot.json";
inline constexpr const char* kStatsDcotPrime = "stats_dcot_prime.json";
inline constexpr const char* kAudit = "audit.jsonl";
}  // namespace run_files

/// "dcot_prime_eta0.4.jsonl" for sweep outputs.
std::string sweep_file_name(double eta);

/// Endpoint ids used for each role.
struct RoleIds {
  std::vector<std::string> agents;
  std::string judge;
  std::string player;
  std::string extractor;
};

RoleIds role_ids(const RunConfig& config);

/// Builds a gateway for `config`: simulated backends in mock mode, HTTP
/// backends otherwise. Enables the audit log under run_dir when configured.
std::unique_ptr<Gateway> make_gateway(const RunConfig& config);

struct PipelineContext {
  RunConfig config;
  const Gateway* gateway = nullptr;
  RunControl* control = nullptr;

  std::filesystem::path path(const char* name) const { return config.resolve(config.run_dir) / name; }
};

/// Combines D_cot rows with the cut: exactly the cut rows, in D_cot order,
/// each with its batch score. Throws kUnknownId when a cut id has no row
/// or no score.
std::vector<DcotPrimeRecord> build_dcot_prime(const std::vector<DcotRecord>& dcot,
                                              const SelectionCut& cut,
                                              const std::vector<BatchScore>& scores);

struct SynthSummary {
  std::size_t records = 0;
  std::size_t failed = 0;
  bool already_complete = false;
};

struct InstanceStageSummary {
  std::size_t dcot_records = 0;
  std::size_t excluded = 0;
  std::size_t fallbacks = 0;
};

struct BatchStageSummary {
  std::vector<BatchScore> scores;
  std::vector<SelectionCut> cuts;  ///< the main eta first, then any sweep values
};

SynthSummary run_synth(const PipelineContext& ctx);
/// Errors: kIncompleteGrid when the candidate file does not cover the grid.
InstanceStageSummary run_select_instance(const PipelineContext& ctx);
/// Errors: kMissingRuns when player runs are absent for a D_cot instance.
BatchStageSummary run_select_batch(const PipelineContext& ctx);
/// Writes stats for D_cot and, when non-empty, D'_cot.
StatsReport run_stats(const PipelineContext& ctx);
/// All four stages in order.
void run_all(const PipelineContext& ctx);

}  // namespace cotforge
