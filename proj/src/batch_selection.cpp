#include "cotforge/batch_selection.hpp"

#include <algorithm>
#include <cmath>

namespace cotforge {

namespace {

void require_full_grid(std::span<const SampleIndex> indices, std::size_t agents,
                       std::size_t samples, const char* what) {
  std::vector<bool> seen(agents * samples, false);
  for (const auto& idx : indices) {
    if (idx.m >= agents || idx.k >= samples || seen[idx.m * samples + idx.k]) {
      throw Error(ErrorCode::kMissingRuns, std::string(what) + ": index outside grid or repeated");
    }
    seen[idx.m * samples + idx.k] = true;
  }
  if (indices.size() != agents * samples) {
    throw Error(ErrorCode::kMissingRuns, std::string(what) + ": have " +
                                             std::to_string(indices.size()) + " of " +
                                             std::to_string(agents * samples) + " runs");
  }
}

}  // namespace

BatchScore score_instance(const InstanceSelection& selection,
                          std::span<const Candidate> candidates,
                          std::span<const PlayerRun> cot_free_runs, std::size_t agents,
                          std::size_t samples, const ScoreWeights& weights) {
  std::vector<SampleIndex> idx;
  idx.reserve(candidates.size());
  for (const auto& c : candidates) idx.push_back(c.index);
  require_full_grid(idx, agents, samples, "CoT-aided runs");
  idx.clear();
  for (const auto& r : cot_free_runs) idx.push_back(r.index);
  require_full_grid(idx, agents, samples, "CoT-free runs");

  const auto winner = std::find_if(candidates.begin(), candidates.end(), [&](const Candidate& c) {
    return c.index.m == selection.chosen_m && c.index.k == selection.chosen_k;
  });
  if (winner == candidates.end()) {
    throw Error(ErrorCode::kMissingRuns, "winning candidate of '" + selection.instance_id +
                                             "' is not among its runs");
  }

  BatchScore out;
  out.instance_id = selection.instance_id;
  for (const auto& c : candidates) out.alpha += c.player_judge_ok ? 1 : 0;

  double beta_sum = 0.0;
  for (const auto& run : cot_free_runs) {
    out.alpha_tilde += run.judge_ok ? 1 : 0;
    if (run.failed()) {
      ++out.excluded_runs;
      continue;
    }
    beta_sum += *run.confidence;
    out.gamma_tilde_sum += run.judge_ok ? 1 : -1;
    ++out.gamma_tilde_count;
  }
  out.delta_alpha = out.alpha - out.alpha_tilde;

  out.beta_star = winner->phi_or_zero();
  out.gamma_star = winner->player_judge_ok ? 1.0 : -1.0;
  if (out.gamma_tilde_count > 0) {
    const auto count = static_cast<double>(out.gamma_tilde_count);
    out.beta_tilde_mean = beta_sum / count;
    out.gamma_tilde_mean = static_cast<double>(out.gamma_tilde_sum) / count;
  }
  out.delta_beta = out.beta_star - out.beta_tilde_mean;
  out.delta_gamma = out.delta_gamma_exact().to_double();
  out.s = combine_score(weights, static_cast<double>(out.delta_alpha), out.delta_beta,
                        out.delta_gamma);
  return out;
}

std::size_t cut_size(double eta, std::size_t total) {
  const double product = eta * static_cast<double>(total);
  const double below = std::floor(product);
  const double next = below + 1.0;
  if (next - product <= 1e-9 * std::max(1.0, product)) return static_cast<std::size_t>(next);
  return static_cast<std::size_t>(below);
}

bool ranks_before(const BatchScore& a, const BatchScore& b) {
  if (a.s != b.s) return a.s > b.s;
  if (a.delta_gamma != b.delta_gamma) return a.delta_gamma > b.delta_gamma;
  if (a.delta_alpha != b.delta_alpha) return a.delta_alpha > b.delta_alpha;
  return a.instance_id < b.instance_id;
}

SelectionCut rank_and_cut(std::span<const BatchScore> scores, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "eta must lie in (0, 1]");
  }
  if (scores.empty()) throw Error(ErrorCode::kEmptyInput, "nothing to rank");

  std::vector<const BatchScore*> order;
  order.reserve(scores.size());
  for (const auto& s : scores) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(),
                   [](const BatchScore* a, const BatchScore* b) { return ranks_before(*a, *b); });

  SelectionCut cut;
  cut.eta = eta;
  cut.n_prime = cut_size(eta, scores.size());
  for (const auto* s : order) cut.ranked_ids.push_back(s->instance_id);
  cut.cut_ids.assign(cut.ranked_ids.begin(),
                     cut.ranked_ids.begin() + static_cast<std::ptrdiff_t>(cut.n_prime));
  return cut;
}

}  // namespace cotforge
