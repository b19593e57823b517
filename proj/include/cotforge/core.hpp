#pragma once

// Shared value types for every pipeline stage. All ordinals are 0-based.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cotforge/error.hpp"

namespace cotforge {

/// One raw question-answer record. `image_ref` is a relative file path, a
/// data URI, an http(s) URL, or empty for text-only instances.
struct Instance {
  std::string id;
  std::string query;
  std::string image_ref;
  std::string gold_answer;

  bool operator==(const Instance&) const = default;
};

/// Throws kInvalidArgument on an empty or duplicate id, or an empty answer.
void validate_corpus(const std::vector<Instance>& corpus);

/// Shape of the sampling grid: N instances x M agents x K samples.
struct GridShape {
  std::size_t instances = 0;
  std::size_t agents = 0;
  std::size_t samples = 0;

  std::size_t size() const noexcept { return instances * agents * samples; }
  std::size_t per_instance() const noexcept { return agents * samples; }
};

struct SampleIndex {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t k = 0;

  auto operator<=>(const SampleIndex&) const = default;

  bool within(const GridShape& shape) const noexcept {
    return n < shape.instances && m < shape.agents && k < shape.samples;
  }
  /// Row-major position in the grid: n, then m, then k.
  std::size_t flat(const GridShape& shape) const noexcept {
    return (n * shape.agents + m) * shape.samples + k;
  }
  static SampleIndex from_flat(std::size_t flat, const GridShape& shape) noexcept;
};

/// Every index of `shape` in canonical (n, m, k) order.
std::vector<SampleIndex> enumerate_grid(const GridShape& shape);

struct AgentProfile {
  std::string agent_id;
  std::string endpoint_ref;
  std::string prompt_template_id;
  std::size_t m = 0;
};

/// Throws kInvalidArgument unless ids are unique and m runs 0..M-1 in order.
void validate_agents(const std::vector<AgentProfile>& agents);

/// Per-sample seeds are derived from one run-level base seed.
///
/// Bit-exact definition, with mix() the SplitMix64 finalizer
///   z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
///   z ^= z >> 27; z *= 0x94D049BB133111EB;
///   z ^= z >> 31;
/// and G = 0x9E3779B97F4A7C15 (all arithmetic mod 2^64):
///   s = mix(base + G)
///   s = mix(s ^ (n * G + 1))
///   s = mix(s ^ (m * G + 2))
///   s = mix(s ^ (k * G + 3))
struct SeedSpec {
  std::uint64_t base_seed = 0;

  std::uint64_t derived(const SampleIndex& idx) const noexcept;
};

std::uint64_t derive_seed(const SeedSpec& spec, const SampleIndex& idx);
std::uint64_t derive_seed(const SeedSpec& spec, const SampleIndex& idx, const GridShape& bounds);

/// Coefficients of the per-candidate score (lambda_k) and the batch score
/// (lambda_alpha, lambda_beta, lambda_gamma).
struct ScoreWeights {
  double lambda_k = 1.0;
  double lambda_alpha = 2.0;
  double lambda_beta = 1.0;
  double lambda_gamma = 1.0;

  bool operator==(const ScoreWeights&) const = default;
};

/// Throws kInvalidArgument on a negative or non-finite weight.
void validate(const ScoreWeights& weights);

/// A synthesized sample with every per-candidate score attached.
struct Candidate {
  SampleIndex index;
  std::string cot_text;
  std::string predicted_answer;
  bool generation_failed = false;
  bool judge_ok = false;
  std::string player_answer;
  /// Absent when the player never ran or failed; scoring then uses 0.
  std::optional<double> player_confidence;
  bool player_judge_ok = false;
  /// Absent when not computed (incorrect answer) or the extractor failed.
  std::optional<double> rationale_ratio;
  std::size_t aha_count = 0;

  double phi_or_zero() const noexcept { return player_confidence.value_or(0.0); }
  double ratio_or_zero() const noexcept { return rationale_ratio.value_or(0.0); }
  /// phi + lambda_k * r, with missing terms counted as 0.
  double selection_score(double lambda_k) const noexcept {
    return phi_or_zero() + lambda_k * ratio_or_zero();
  }
};

struct InstanceSelection {
  std::string instance_id;
  std::size_t chosen_m = 0;
  std::size_t chosen_k = 0;
  std::string chosen_cot;
  std::vector<int> per_agent_A;
  std::vector<int> per_agent_V;
  double chosen_score = 0.0;
  bool fallback_used = false;
};

/// Exact rational p/q, kept in lowest terms with q > 0.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  static Rational make(std::int64_t num, std::int64_t den);
  double to_double() const noexcept {
    return static_cast<double>(num) / static_cast<double>(den);
  }
  bool operator==(const Rational&) const = default;
};

struct BatchScore {
  std::string instance_id;
  int alpha = 0;
  int alpha_tilde = 0;
  int delta_alpha = 0;
  double beta_star = 0.0;
  double beta_tilde_mean = 0.0;
  double delta_beta = 0.0;
  double gamma_star = 1.0;
  double gamma_tilde_mean = 0.0;
  double delta_gamma = 0.0;
  double s = 0.0;
  /// gamma-tilde sum and the number of runs it covers, for exact arithmetic.
  int gamma_tilde_sum = 0;
  int gamma_tilde_count = 0;
  /// CoT-free runs left out of the beta/gamma means because they failed.
  int excluded_runs = 0;

  /// Exact delta_gamma = gamma* - sum / count.
  Rational delta_gamma_exact() const;
};

/// lambda_alpha * d_alpha + lambda_beta * d_beta + lambda_gamma * d_gamma,
/// evaluated left to right so recomputation is bit-identical.
double combine_score(const ScoreWeights& weights, double delta_alpha, double delta_beta,
                     double delta_gamma) noexcept;

}  // namespace cotforge
