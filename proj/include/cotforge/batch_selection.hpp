#pragma once

// Dataset-level selection. Each selected instance gets
//   d_alpha = alpha - alpha~      (player correctness with vs. without CoT)
//   d_beta  = beta* - mean(beta~) (confidence gain of the winning CoT)
//   d_gamma = gamma* - mean(gamma~), gamma = 2 * correct - 1
//   S       = l_alpha * d_alpha + l_beta * d_beta + l_gamma * d_gamma
// and the top floor(eta * N) instances by S form the refined subset.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cotforge/core.hpp"
#include "cotforge/validity.hpp"

namespace cotforge {

/// Throws kMissingRuns unless `candidates` (CoT-aided) and `cot_free_runs`
/// each cover the instance's full agents x samples grid and the winning
/// (m, k) is among the candidates.
BatchScore score_instance(const InstanceSelection& selection,
                          std::span<const Candidate> candidates,
                          std::span<const PlayerRun> cot_free_runs, std::size_t agents,
                          std::size_t samples, const ScoreWeights& weights);

/// floor(eta * total). Products within 1e-9 (relative) below an integer
/// round up to it, so decimal ratios such as 0.2 or 0.6 cut exactly.
std::size_t cut_size(double eta, std::size_t total);

/// Strict weak order for ranking: higher S, then higher d_gamma, then higher
/// d_alpha, then lexicographically smaller id.
bool ranks_before(const BatchScore& a, const BatchScore& b);

struct SelectionCut {
  double eta = 1.0;
  std::size_t n_prime = 0;
  std::vector<std::string> ranked_ids;
  std::vector<std::string> cut_ids;
};

/// Errors: kEmptyInput on no scores; kInvalidArgument unless eta in (0, 1].
SelectionCut rank_and_cut(std::span<const BatchScore> scores, double eta);

}  // namespace cotforge
