#pragma once

// Line-delimited JSON record files. Every file the pipeline writes starts
// with a header line {"schema": <kind>, "schema_version": "1"}; field names
// are listed in docs/schemas.md.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotforge/batch_selection.hpp"
#include "cotforge/core.hpp"
#include "cotforge/instance_selection.hpp"
#include "cotforge/judging.hpp"
#include "cotforge/validity.hpp"

namespace cotforge {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kSchemaVersion = "1";

namespace schema {
inline constexpr std::string_view kRawCandidate = "cotforge/raw-candidate";
inline constexpr std::string_view kCandidate = "cotforge/candidate";
inline constexpr std::string_view kBaselineRun = "cotforge/baseline-run";
inline constexpr std::string_view kDcot = "cotforge/dcot";
inline constexpr std::string_view kDcotPrime = "cotforge/dcot-prime";
inline constexpr std::string_view kExclusion = "cotforge/exclusion";
inline constexpr std::string_view kBatchScore = "cotforge/batch-score";
inline constexpr std::string_view kCorpus = "cotforge/corpus";
}  // namespace schema

// ---------------------------------------------------------------------------
// Records

/// Stage I output: one synthesized (CoT, answer) pair.
struct RawCandidate {
  std::string instance_id;
  SampleIndex index;
  std::string agent_id;
  std::uint64_t seed = 0;
  std::string cot_text;
  std::string predicted_answer;
  bool generation_failed = false;

  bool operator==(const RawCandidate&) const = default;
};

/// Stage II per-candidate output: the candidate with every score attached.
struct ScoredCandidate {
  std::string instance_id;
  std::string agent_id;
  std::uint64_t seed = 0;
  Candidate candidate;
  JudgeVerdict::Method judge_method = JudgeVerdict::Method::kExactNormalized;
  JudgeVerdict::Flag judge_flag = JudgeVerdict::Flag::kNone;
  bool extractor_missing = false;
};

/// One D_cot row.
struct DcotRecord {
  std::string id;
  std::string query;
  std::string image;
  std::string answer;
  std::string cot;
  std::string agent_id;
  std::size_t k = 0;
  double phi = 0.0;
  double ratio = 0.0;
  std::size_t m = 0;
  bool player_ok = false;
};

/// One D'_cot row: a D_cot row plus its batch score.
struct DcotPrimeRecord {
  DcotRecord base;
  BatchScore score;
};

Json to_json(const Instance& v);
Json to_json(const RawCandidate& v);
Json to_json(const ScoredCandidate& v);
Json to_json(const PlayerRun& v);
Json to_json(const DcotRecord& v);
Json to_json(const DcotPrimeRecord& v);
Json to_json(const ExclusionEntry& v);
Json to_json(const BatchScore& v);

/// Parsers throw kCorruptLine on missing or mistyped fields.
Instance instance_from_json(const Json& j);
RawCandidate raw_candidate_from_json(const Json& j);
ScoredCandidate scored_candidate_from_json(const Json& j);
PlayerRun player_run_from_json(const Json& j);
DcotRecord dcot_from_json(const Json& j);
DcotPrimeRecord dcot_prime_from_json(const Json& j);
ExclusionEntry exclusion_from_json(const Json& j);
BatchScore batch_score_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Files

Json make_header(std::string_view kind);

/// Append-only writer. Each record is written as one line and flushed before
/// write() returns. Safe for concurrent writers.
class RecordWriter {
 public:
  /// Creates the file with a header, or appends to an existing file after
  /// checking its header.
  RecordWriter(const std::filesystem::path& path, std::string_view kind);
  ~RecordWriter();
  RecordWriter(const RecordWriter&) = delete;
  RecordWriter& operator=(const RecordWriter&) = delete;

  void write(const Json& record);
  std::size_t written() const noexcept { return written_; }

 private:
  std::mutex mutex_;
  std::FILE* file_ = nullptr;
  std::size_t written_ = 0;
};

struct CorruptLineReport {
  std::size_t line = 0;  ///< 1-based, counting the header
  std::string message;
};

struct ReadResult {
  std::vector<Json> records;
  std::vector<CorruptLineReport> skipped;
};

/// Reads every record after the header. Errors: kSchemaMismatch on a
/// missing header, a different kind, or another schema_version;
/// kCorruptLine on an unparsable line unless `tolerant`, in which case the
/// line is skipped and reported.
ReadResult read_records(const std::filesystem::path& path, std::string_view kind,
                        bool tolerant = false);

/// Writes header + records to a temporary file and renames it over `path`.
void write_records_atomic(const std::filesystem::path& path, std::string_view kind,
                          const std::vector<Json>& records);

/// Reads a raw corpus ({id, query, image, answer} per line). A header line
/// is optional. Errors: kCorruptLine, kInvalidArgument on invalid content.
std::vector<Instance> read_corpus(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Checkpoints

/// Loads the records already flushed to a checkpoint file. A torn final line
/// (no newline, unparsable) is dropped and truncated away; any other bad
/// line is kCorruptCheckpoint. A missing file yields no records.
std::vector<Json> load_checkpoint(const std::filesystem::path& path, std::string_view kind);

/// (n, m, k) of every record in a checkpoint, read from "n", "m", "k".
std::set<SampleIndex> completed_indices(const std::vector<Json>& records);

/// Indices whose synthesis records are fully flushed in `run_dir`.
std::set<SampleIndex> checkpoint_resume(const std::filesystem::path& run_dir);

// ---------------------------------------------------------------------------
// Statistics

struct StatsReport {
  std::size_t total_records = 0;
  double mean_cot_length_units = 0.0;
  double stddev_cot_length_units = 0.0;  ///< population standard deviation
  std::map<std::string, std::size_t> per_agent_counts;
  double mean_aha = 0.0;
  double mean_rationale_ratio = 0.0;
  double cot_validity = 0.0;
};

/// Throws kEmptyFile on no records.
StatsReport compute_stats(const std::vector<DcotRecord>& records,
                          const std::vector<std::string>& trigger_lexicon);

/// Reads a D_cot or D'_cot file and computes its statistics.
StatsReport stats(const std::filesystem::path& path,
                  const std::vector<std::string>& trigger_lexicon);

Json to_json(const StatsReport& report);
std::string format_table(const StatsReport& report);

}  // namespace cotforge
