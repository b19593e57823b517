#include "cotforge/instance_selection.hpp"

#include <algorithm>

namespace cotforge {

std::string_view to_string(ExclusionEntry::Status status) noexcept {
  return status == ExclusionEntry::Status::kFallbackUsed ? "fallback_used" : "excluded";
}

std::vector<AgentTally> tally_agents(std::span<const Candidate> candidates, std::size_t agents,
                                     std::size_t samples) {
  std::vector<AgentTally> tallies(agents);
  for (std::size_t m = 0; m < agents; ++m) tallies[m].m = m;
  std::vector<bool> seen(agents * samples, false);
  std::optional<std::size_t> instance;

  for (const auto& c : candidates) {
    const auto& idx = c.index;
    if (idx.m >= agents || idx.k >= samples) {
      throw Error(ErrorCode::kIncompleteGrid, "candidate index outside the agent x sample grid");
    }
    if (instance && *instance != idx.n) {
      throw Error(ErrorCode::kIncompleteGrid, "candidates from more than one instance");
    }
    instance = idx.n;
    const std::size_t slot = idx.m * samples + idx.k;
    if (seen[slot]) throw Error(ErrorCode::kIncompleteGrid, "duplicate candidate index");
    seen[slot] = true;
    tallies[idx.m].A += c.judge_ok ? 1 : 0;
    tallies[idx.m].V += c.player_judge_ok ? 1 : 0;
  }
  if (candidates.size() != agents * samples) {
    throw Error(ErrorCode::kIncompleteGrid,
                "instance has " + std::to_string(candidates.size()) + " of " +
                    std::to_string(agents * samples) + " candidates");
  }
  return tallies;
}

namespace {

bool ranks_above(const AgentTally& a, const AgentTally& b) {
  if (a.V != b.V) return a.V > b.V;
  if (a.A != b.A) return a.A > b.A;
  return a.m < b.m;
}

const AgentTally* best_of(std::span<const AgentTally> tallies, bool require_correct) {
  const AgentTally* best = nullptr;
  for (const auto& t : tallies) {
    if (require_correct && t.A == 0) continue;
    if (best == nullptr || ranks_above(t, *best)) best = &t;
  }
  return best;
}

}  // namespace

std::optional<std::size_t> select_agent(std::span<const AgentTally> tallies) {
  const AgentTally* best = best_of(tallies, false);
  if (best == nullptr || best->A == 0) return std::nullopt;
  return best->m;
}

AgentChoice select_agent_with_fallback(std::span<const AgentTally> tallies) {
  if (auto m = select_agent(tallies)) return {m, false};
  const AgentTally* best = best_of(tallies, true);
  if (best == nullptr) return {};
  return {best->m, true};
}

std::optional<std::size_t> select_cot(std::span<const Candidate> agent_candidates,
                                      const ScoreWeights& weights) {
  const Candidate* best = nullptr;
  double best_score = 0.0;
  for (const auto& c : agent_candidates) {
    if (!c.judge_ok) continue;
    const double score = c.selection_score(weights.lambda_k);
    if (best == nullptr || score > best_score ||
        (score == best_score && c.index.k < best->index.k)) {
      best = &c;
      best_score = score;
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->index.k;
}

InstanceOutcome select_instance(const Instance& instance, std::span<const Candidate> candidates,
                                std::size_t agents, std::size_t samples,
                                const ScoreWeights& weights) {
  const auto tallies = tally_agents(candidates, agents, samples);
  std::vector<int> per_a, per_v;
  for (const auto& t : tallies) {
    per_a.push_back(t.A);
    per_v.push_back(t.V);
  }

  InstanceOutcome out;
  const AgentChoice choice = select_agent_with_fallback(tallies);
  if (!choice.m) {
    out.note = ExclusionEntry{instance.id, ExclusionEntry::Status::kExcluded,
                              "no agent produced a correct answer", per_a, per_v};
    return out;
  }

  std::vector<Candidate> mine;
  for (const auto& c : candidates) {
    if (c.index.m == *choice.m) mine.push_back(c);
  }
  const auto k = select_cot(mine, weights);
  if (!k) {
    out.note = ExclusionEntry{instance.id, ExclusionEntry::Status::kExcluded,
                              "selected agent has no correct CoT", per_a, per_v};
    return out;
  }
  const Candidate& winner =
      *std::find_if(mine.begin(), mine.end(), [&](const Candidate& c) { return c.index.k == *k; });

  InstanceSelection sel;
  sel.instance_id = instance.id;
  sel.chosen_m = *choice.m;
  sel.chosen_k = *k;
  sel.chosen_cot = winner.cot_text;
  sel.per_agent_A = per_a;
  sel.per_agent_V = per_v;
  sel.chosen_score = winner.selection_score(weights.lambda_k);
  sel.fallback_used = choice.fallback_used;
  out.selection = std::move(sel);
  if (choice.fallback_used) {
    out.note = ExclusionEntry{instance.id, ExclusionEntry::Status::kFallbackUsed,
                              "top-ranked agent had no correct answer; used agent " +
                                  std::to_string(*choice.m),
                              per_a, per_v};
  }
  return out;
}

DcotBuild build_dcot(std::span<const Instance> corpus, std::span<const Candidate> candidates,
                     std::size_t agents, std::size_t samples, const ScoreWeights& weights) {
  std::vector<std::vector<Candidate>> by_instance(corpus.size());
  for (const auto& c : candidates) {
    if (c.index.n >= corpus.size()) {
      throw Error(ErrorCode::kIncompleteGrid, "candidate refers to an instance outside the corpus");
    }
    by_instance[c.index.n].push_back(c);
  }
  DcotBuild out;
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    auto outcome = select_instance(corpus[n], by_instance[n], agents, samples, weights);
    if (outcome.selection) out.selections.push_back(std::move(*outcome.selection));
    if (outcome.note) out.report.push_back(std::move(*outcome.note));
  }
  return out;
}

}  // namespace cotforge
