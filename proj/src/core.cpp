#include "cotforge/core.hpp"

#include <cmath>
#include <numeric>
#include <unordered_set>

namespace cotforge {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kExhaustedRetries: return "ExhaustedRetries";
    case ErrorCode::kPermanentRejection: return "PermanentRejection";
    case ErrorCode::kMalformedResponse: return "MalformedResponse";
    case ErrorCode::kFatalEndpoint: return "FatalEndpoint";
    case ErrorCode::kEmptySequence: return "EmptySequence";
    case ErrorCode::kNonFiniteLogprob: return "NonFiniteLogprob";
    case ErrorCode::kIncompleteGrid: return "IncompleteGrid";
    case ErrorCode::kMissingRuns: return "MissingRuns";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kUnknownId: return "UnknownId";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kCorruptLine: return "CorruptLine";
    case ErrorCode::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::kEmptyFile: return "EmptyFile";
    case ErrorCode::kInterrupted: return "Interrupted";
  }
  return "Unknown";
}

void validate_corpus(const std::vector<Instance>& corpus) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& inst = corpus[i];
    if (inst.id.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "instance #" + std::to_string(i) + " has an empty id");
    }
    if (!seen.insert(inst.id).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate instance id '" + inst.id + "'");
    }
    if (inst.gold_answer.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "instance '" + inst.id + "' has an empty answer");
    }
  }
}

SampleIndex SampleIndex::from_flat(std::size_t flat, const GridShape& shape) noexcept {
  SampleIndex idx;
  idx.k = flat % shape.samples;
  flat /= shape.samples;
  idx.m = flat % shape.agents;
  idx.n = flat / shape.agents;
  return idx;
}

std::vector<SampleIndex> enumerate_grid(const GridShape& shape) {
  std::vector<SampleIndex> out;
  out.reserve(shape.size());
  for (std::size_t n = 0; n < shape.instances; ++n) {
    for (std::size_t m = 0; m < shape.agents; ++m) {
      for (std::size_t k = 0; k < shape.samples; ++k) out.push_back({n, m, k});
    }
  }
  return out;
}

void validate_agents(const std::vector<AgentProfile>& agents) {
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    if (agents[i].m != i) {
      throw Error(ErrorCode::kInvalidArgument, "agent ordinals must be contiguous from 0");
    }
    if (agents[i].agent_id.empty() || !ids.insert(agents[i].agent_id).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "agent id '" + agents[i].agent_id + "' is empty or duplicated");
    }
  }
}

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

}  // namespace

std::uint64_t SeedSpec::derived(const SampleIndex& idx) const noexcept {
  std::uint64_t s = mix(base_seed + kGolden);
  s = mix(s ^ (static_cast<std::uint64_t>(idx.n) * kGolden + 1));
  s = mix(s ^ (static_cast<std::uint64_t>(idx.m) * kGolden + 2));
  s = mix(s ^ (static_cast<std::uint64_t>(idx.k) * kGolden + 3));
  return s;
}

std::uint64_t derive_seed(const SeedSpec& spec, const SampleIndex& idx) {
  return spec.derived(idx);
}

std::uint64_t derive_seed(const SeedSpec& spec, const SampleIndex& idx, const GridShape& bounds) {
  if (!idx.within(bounds)) {
    throw Error(ErrorCode::kInvalidArgument, "sample index outside the configured grid");
  }
  return spec.derived(idx);
}

void validate(const ScoreWeights& w) {
  for (double v : {w.lambda_k, w.lambda_alpha, w.lambda_beta, w.lambda_gamma}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorCode::kInvalidArgument, "score weights must be finite and >= 0");
    }
  }
}

Rational Rational::make(std::int64_t num, std::int64_t den) {
  if (den == 0) throw Error(ErrorCode::kInvalidArgument, "zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return {num, den};
}

Rational BatchScore::delta_gamma_exact() const {
  if (gamma_tilde_count == 0) {
    return Rational::make(static_cast<std::int64_t>(gamma_star), 1);
  }
  const auto count = static_cast<std::int64_t>(gamma_tilde_count);
  return Rational::make(static_cast<std::int64_t>(gamma_star) * count - gamma_tilde_sum, count);
}

double combine_score(const ScoreWeights& w, double delta_alpha, double delta_beta,
                     double delta_gamma) noexcept {
  double s = w.lambda_alpha * delta_alpha;
  s += w.lambda_beta * delta_beta;
  s += w.lambda_gamma * delta_gamma;
  return s;
}

}  // namespace cotforge
