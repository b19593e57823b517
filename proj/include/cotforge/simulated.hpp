#pragma once

// A deterministic stand-in for every model role, used by `--mock` runs and
// the end-to-end tests. Replies are pure functions of (prompt, seed,
// attempt) and assume the built-in prompt templates.

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cotforge/core.hpp"
#include "cotforge/gateway.hpp"

namespace cotforge {

/// FNV-1a, stable across platforms.
std::uint64_t stable_hash(std::string_view text, std::uint64_t salt = 0) noexcept;

/// Uniform in [0, 1) from a 64-bit hash.
double unit_interval(std::uint64_t h) noexcept;

struct SimulatedWorldOptions {
  std::uint64_t world_seed = 7;
  /// Per-agent probability of a correct answer on an easy instance. Agents
  /// beyond the list reuse its last entry.
  std::vector<double> agent_skill{0.8, 0.6, 0.45};
  /// Chance that a first attempt fails transiently (a retry then succeeds).
  double transient_failure_rate = 0.02;
  std::chrono::microseconds latency{0};
};

class SimulatedWorld {
 public:
  SimulatedWorld(std::vector<Instance> corpus, SimulatedWorldOptions options = {});

  /// Registers agents under `agent_ids` (ordinal = position) and the three
  /// evaluator roles under the given ids.
  void register_all(Gateway& gateway, const std::vector<std::string>& agent_ids,
                    const std::string& judge_id, const std::string& player_id,
                    const std::string& extractor_id, int max_in_flight = 0) const;

  MockScript agent_script(std::size_t m) const;
  MockScript judge_script() const;
  MockScript player_script() const;
  MockScript extractor_script() const;

  /// Instance whose query opens `prompt`, or nullptr.
  const Instance* find_instance(std::string_view prompt) const;
  double difficulty(const Instance& inst) const;

 private:
  struct Data;
  std::shared_ptr<const Data> data_;
};

/// Small arithmetic corpus with ids q0000, q0001, ... for demos and tests.
std::vector<Instance> make_synthetic_corpus(std::size_t count, std::uint64_t seed);

}  // namespace cotforge
