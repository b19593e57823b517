#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cotforge/config.hpp"
#include "cotforge/core.hpp"
#include "cotforge/dataset_io.hpp"
#include "cotforge/simulated.hpp"

namespace cotforge::testing {

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("cotforge-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// A candidate at (0, m, k) with the given judge/player outcomes.
inline Candidate make_candidate(std::size_t m, std::size_t k, bool judge_ok, bool player_ok,
                                double phi = 0.5, double ratio = 0.5) {
  Candidate c;
  c.index = {0, m, k};
  c.cot_text = "cot m" + std::to_string(m) + " k" + std::to_string(k);
  c.predicted_answer = judge_ok ? "gold" : "wrong";
  c.judge_ok = judge_ok;
  c.player_judge_ok = player_ok;
  c.player_confidence = phi;
  c.rationale_ratio = ratio;
  return c;
}

inline std::vector<Instance> small_corpus(std::size_t n) {
  std::vector<Instance> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"i" + std::to_string(i), "Question " + std::to_string(i) + "?",
                   "img/" + std::to_string(i) + ".png", std::to_string(10 + i)});
  }
  return out;
}

inline void write_corpus(const std::filesystem::path& p, const std::vector<Instance>& corpus) {
  std::ofstream out(p, std::ios::binary);
  for (const auto& inst : corpus) out << to_json(inst).dump() << '\n';
}

/// A mock-mode config rooted at `dir` over a synthetic corpus of `n`
/// instances, with fast retries.
inline RunConfig mock_run_config(const std::filesystem::path& dir, std::size_t n,
                                 std::size_t agents = 3, std::size_t k = 6) {
  write_corpus(dir / "corpus.jsonl", make_synthetic_corpus(n, 2024));
  RunConfig c;
  c.base_dir = dir;
  c.corpus_path = "corpus.jsonl";
  c.run_dir = "run";
  c.mock = true;
  c.mock_agents = agents;
  c.k = k;
  c.base_seed = 42;
  c.retry.base_backoff = std::chrono::milliseconds(0);
  return c;
}

}  // namespace cotforge::testing
