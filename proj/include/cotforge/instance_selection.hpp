#pragma once

// Per-instance selection: pick the most reliable agent by validity count V,
// then correctness count A, then pick that agent's best correct candidate by
// phi + lambda_k * r. Every tie resolves to the lowest ordinal.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotforge/core.hpp"

namespace cotforge {

struct AgentTally {
  std::size_t m = 0;
  int A = 0;  ///< candidates whose answer was judged correct
  int V = 0;  ///< candidates whose CoT-aided player answer was judged correct

  bool operator==(const AgentTally&) const = default;
};

/// Tallies one instance's candidates. Throws kIncompleteGrid unless they
/// cover every (m, k) of an M x K grid exactly once.
std::vector<AgentTally> tally_agents(std::span<const Candidate> candidates, std::size_t agents,
                                     std::size_t samples);

/// argmax by (V, then A, then lowest m). nullopt when the winner has A = 0.
std::optional<std::size_t> select_agent(std::span<const AgentTally> tallies);

struct AgentChoice {
  std::optional<std::size_t> m;
  /// The V/A winner had no correct answer and another agent was used.
  bool fallback_used = false;
};

/// select_agent, re-ranking among agents with A > 0 when the overall winner
/// has none.
AgentChoice select_agent_with_fallback(std::span<const AgentTally> tallies);

/// Among the correct candidates of one agent, the argmax of phi + lambda_k*r
/// (lowest k on ties). nullopt when none is correct.
std::optional<std::size_t> select_cot(std::span<const Candidate> agent_candidates,
                                      const ScoreWeights& weights);

struct ExclusionEntry {
  enum class Status { kExcluded, kFallbackUsed };
  std::string instance_id;
  Status status = Status::kExcluded;
  std::string reason;
  std::vector<int> per_agent_A;
  std::vector<int> per_agent_V;
};

std::string_view to_string(ExclusionEntry::Status status) noexcept;

struct InstanceOutcome {
  std::optional<InstanceSelection> selection;
  std::optional<ExclusionEntry> note;
};

InstanceOutcome select_instance(const Instance& instance, std::span<const Candidate> candidates,
                                std::size_t agents, std::size_t samples,
                                const ScoreWeights& weights);

struct DcotBuild {
  /// In corpus order; one entry per selectable instance.
  std::vector<InstanceSelection> selections;
  std::vector<ExclusionEntry> report;
};

/// Runs select_instance for every corpus entry. `candidates` may arrive in
/// any order; candidate n refers to corpus[n]. Throws kIncompleteGrid when
/// an instance's grid is not full.
DcotBuild build_dcot(std::span<const Instance> corpus, std::span<const Candidate> candidates,
                     std::size_t agents, std::size_t samples, const ScoreWeights& weights);

}  // namespace cotforge
