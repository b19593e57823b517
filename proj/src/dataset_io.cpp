#include "cotforge/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cotforge/rationale.hpp"

namespace cotforge {

namespace fs = std::filesystem;

namespace {

template <class T>
T field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::kCorruptLine, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::kCorruptLine, std::string("field '") + key + "' has the wrong type");
  }
}

std::optional<double> optional_number(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) {
    throw Error(ErrorCode::kCorruptLine, std::string("field '") + key + "' is not a number");
  }
  return it->get<double>();
}

Json number_or_null(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

void put_index(Json& j, const SampleIndex& idx) {
  j["n"] = idx.n;
  j["m"] = idx.m;
  j["k"] = idx.k;
}

SampleIndex get_index(const Json& j) {
  return {field<std::size_t>(j, "n"), field<std::size_t>(j, "m"), field<std::size_t>(j, "k")};
}

JudgeVerdict::Method parse_method(const std::string& s) {
  if (s == "llm") return JudgeVerdict::Method::kLlm;
  if (s == "exact_normalized") return JudgeVerdict::Method::kExactNormalized;
  throw Error(ErrorCode::kCorruptLine, "unknown judge_method '" + s + "'");
}

JudgeVerdict::Flag parse_flag(const std::string& s) {
  if (s == "none") return JudgeVerdict::Flag::kNone;
  if (s == "malformed") return JudgeVerdict::Flag::kMalformed;
  if (s == "unavailable") return JudgeVerdict::Flag::kUnavailable;
  throw Error(ErrorCode::kCorruptLine, "unknown judge_flag '" + s + "'");
}

}  // namespace

// ---------------------------------------------------------------------------

Json to_json(const Instance& v) {
  Json j;
  j["id"] = v.id;
  j["query"] = v.query;
  j["image"] = v.image_ref;
  j["answer"] = v.gold_answer;
  return j;
}

Instance instance_from_json(const Json& j) {
  Instance v;
  v.id = field<std::string>(j, "id");
  v.query = field<std::string>(j, "query");
  v.image_ref = j.contains("image") && !j["image"].is_null() ? field<std::string>(j, "image") : "";
  v.gold_answer = field<std::string>(j, "answer");
  return v;
}

Json to_json(const RawCandidate& v) {
  Json j;
  j["id"] = v.instance_id;
  put_index(j, v.index);
  j["agent_id"] = v.agent_id;
  j["seed"] = v.seed;
  j["cot"] = v.cot_text;
  j["predicted_answer"] = v.predicted_answer;
  j["generation_failed"] = v.generation_failed;
  return j;
}

RawCandidate raw_candidate_from_json(const Json& j) {
  RawCandidate v;
  v.instance_id = field<std::string>(j, "id");
  v.index = get_index(j);
  v.agent_id = field<std::string>(j, "agent_id");
  v.seed = field<std::uint64_t>(j, "seed");
  v.cot_text = field<std::string>(j, "cot");
  v.predicted_answer = field<std::string>(j, "predicted_answer");
  v.generation_failed = field<bool>(j, "generation_failed");
  return v;
}

Json to_json(const ScoredCandidate& v) {
  const Candidate& c = v.candidate;
  Json j;
  j["id"] = v.instance_id;
  put_index(j, c.index);
  j["agent_id"] = v.agent_id;
  j["seed"] = v.seed;
  j["cot"] = c.cot_text;
  j["predicted_answer"] = c.predicted_answer;
  j["generation_failed"] = c.generation_failed;
  j["judge_ok"] = c.judge_ok;
  j["judge_method"] = to_string(v.judge_method);
  j["judge_flag"] = to_string(v.judge_flag);
  j["player_answer"] = c.player_answer;
  j["player_confidence"] = number_or_null(c.player_confidence);
  j["player_judge_ok"] = c.player_judge_ok;
  j["rationale_ratio"] = number_or_null(c.rationale_ratio);
  j["extractor_missing"] = v.extractor_missing;
  j["aha_count"] = c.aha_count;
  return j;
}

ScoredCandidate scored_candidate_from_json(const Json& j) {
  ScoredCandidate v;
  Candidate& c = v.candidate;
  v.instance_id = field<std::string>(j, "id");
  c.index = get_index(j);
  v.agent_id = field<std::string>(j, "agent_id");
  v.seed = field<std::uint64_t>(j, "seed");
  c.cot_text = field<std::string>(j, "cot");
  c.predicted_answer = field<std::string>(j, "predicted_answer");
  c.generation_failed = field<bool>(j, "generation_failed");
  c.judge_ok = field<bool>(j, "judge_ok");
  v.judge_method = parse_method(field<std::string>(j, "judge_method"));
  v.judge_flag = parse_flag(field<std::string>(j, "judge_flag"));
  c.player_answer = field<std::string>(j, "player_answer");
  c.player_confidence = optional_number(j, "player_confidence");
  c.player_judge_ok = field<bool>(j, "player_judge_ok");
  c.rationale_ratio = optional_number(j, "rationale_ratio");
  v.extractor_missing = field<bool>(j, "extractor_missing");
  c.aha_count = field<std::size_t>(j, "aha_count");
  return v;
}

Json to_json(const PlayerRun& v) {
  Json j;
  j["id"] = v.instance_id;
  put_index(j, v.index);
  j["seed"] = v.seed;
  j["with_cot"] = v.with_cot;
  j["answer"] = v.answer_text;
  j["confidence"] = number_or_null(v.confidence);
  j["judge_ok"] = v.judge_ok;
  return j;
}

PlayerRun player_run_from_json(const Json& j) {
  PlayerRun v;
  v.instance_id = field<std::string>(j, "id");
  v.index = get_index(j);
  v.seed = field<std::uint64_t>(j, "seed");
  v.with_cot = field<bool>(j, "with_cot");
  v.answer_text = field<std::string>(j, "answer");
  v.confidence = optional_number(j, "confidence");
  v.judge_ok = field<bool>(j, "judge_ok");
  return v;
}

Json to_json(const DcotRecord& v) {
  Json j;
  j["id"] = v.id;
  j["query"] = v.query;
  j["image"] = v.image;
  j["answer"] = v.answer;
  j["cot"] = v.cot;
  j["agent_id"] = v.agent_id;
  j["k"] = v.k;
  j["phi"] = v.phi;
  j["ratio"] = v.ratio;
  j["m"] = v.m;
  j["player_ok"] = v.player_ok;
  return j;
}

DcotRecord dcot_from_json(const Json& j) {
  DcotRecord v;
  v.id = field<std::string>(j, "id");
  v.query = field<std::string>(j, "query");
  v.image = field<std::string>(j, "image");
  v.answer = field<std::string>(j, "answer");
  v.cot = field<std::string>(j, "cot");
  v.agent_id = field<std::string>(j, "agent_id");
  v.k = field<std::size_t>(j, "k");
  v.phi = field<double>(j, "phi");
  v.ratio = field<double>(j, "ratio");
  v.m = field<std::size_t>(j, "m");
  v.player_ok = field<bool>(j, "player_ok");
  return v;
}

namespace {

void put_score_fields(Json& j, const BatchScore& s) {
  j["alpha"] = s.alpha;
  j["alpha_tilde"] = s.alpha_tilde;
  j["delta_alpha"] = s.delta_alpha;
  j["beta_star"] = s.beta_star;
  j["beta_tilde_mean"] = s.beta_tilde_mean;
  j["delta_beta"] = s.delta_beta;
  j["gamma_star"] = s.gamma_star;
  j["gamma_tilde_mean"] = s.gamma_tilde_mean;
  j["delta_gamma"] = s.delta_gamma;
  j["s"] = s.s;
  j["gamma_tilde_sum"] = s.gamma_tilde_sum;
  j["gamma_tilde_count"] = s.gamma_tilde_count;
  j["excluded_runs"] = s.excluded_runs;
}

void get_score_fields(const Json& j, BatchScore& s) {
  s.alpha = field<int>(j, "alpha");
  s.alpha_tilde = field<int>(j, "alpha_tilde");
  s.delta_alpha = field<int>(j, "delta_alpha");
  s.beta_star = field<double>(j, "beta_star");
  s.beta_tilde_mean = field<double>(j, "beta_tilde_mean");
  s.delta_beta = field<double>(j, "delta_beta");
  s.gamma_star = field<double>(j, "gamma_star");
  s.gamma_tilde_mean = field<double>(j, "gamma_tilde_mean");
  s.delta_gamma = field<double>(j, "delta_gamma");
  s.s = field<double>(j, "s");
  s.gamma_tilde_sum = field<int>(j, "gamma_tilde_sum");
  s.gamma_tilde_count = field<int>(j, "gamma_tilde_count");
  s.excluded_runs = field<int>(j, "excluded_runs");
}

}  // namespace

Json to_json(const DcotPrimeRecord& v) {
  Json j = to_json(v.base);
  put_score_fields(j, v.score);
  return j;
}

DcotPrimeRecord dcot_prime_from_json(const Json& j) {
  DcotPrimeRecord v;
  v.base = dcot_from_json(j);
  v.score.instance_id = v.base.id;
  get_score_fields(j, v.score);
  return v;
}

Json to_json(const BatchScore& v) {
  Json j;
  j["id"] = v.instance_id;
  put_score_fields(j, v);
  return j;
}

BatchScore batch_score_from_json(const Json& j) {
  BatchScore v;
  v.instance_id = field<std::string>(j, "id");
  get_score_fields(j, v);
  return v;
}

Json to_json(const ExclusionEntry& v) {
  Json j;
  j["id"] = v.instance_id;
  j["status"] = to_string(v.status);
  j["reason"] = v.reason;
  j["per_agent_A"] = v.per_agent_A;
  j["per_agent_V"] = v.per_agent_V;
  return j;
}

ExclusionEntry exclusion_from_json(const Json& j) {
  ExclusionEntry v;
  v.instance_id = field<std::string>(j, "id");
  const auto status = field<std::string>(j, "status");
  if (status == "excluded") {
    v.status = ExclusionEntry::Status::kExcluded;
  } else if (status == "fallback_used") {
    v.status = ExclusionEntry::Status::kFallbackUsed;
  } else {
    throw Error(ErrorCode::kCorruptLine, "unknown exclusion status '" + status + "'");
  }
  v.reason = field<std::string>(j, "reason");
  v.per_agent_A = field<std::vector<int>>(j, "per_agent_A");
  v.per_agent_V = field<std::vector<int>>(j, "per_agent_V");
  return v;
}

// ---------------------------------------------------------------------------

Json make_header(std::string_view kind) {
  Json h;
  h["schema"] = kind;
  h["schema_version"] = kSchemaVersion;
  return h;
}

namespace {

void check_header(const Json& header, std::string_view kind, const fs::path& path) {
  if (!header.is_object() || !header.contains("schema") || !header.contains("schema_version")) {
    throw Error(ErrorCode::kSchemaMismatch, path.string() + ": missing header line");
  }
  if (header["schema"] != kind) {
    throw Error(ErrorCode::kSchemaMismatch, path.string() + ": expected schema '" +
                                                std::string(kind) + "', found " +
                                                header["schema"].dump());
  }
  if (header["schema_version"] != kSchemaVersion) {
    throw Error(ErrorCode::kSchemaMismatch, path.string() + ": schema_version " +
                                                header["schema_version"].dump() +
                                                " is not supported (reader is version " +
                                                std::string(kSchemaVersion) + ")");
  }
}

struct Lines {
  std::vector<std::string> lines;
  bool last_terminated = true;
};

Lines split_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kInvalidArgument, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  Lines out;
  std::size_t pos = 0;
  while (pos < data.size()) {
    const auto nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      out.lines.push_back(data.substr(pos));
      out.last_terminated = false;
      break;
    }
    out.lines.push_back(data.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

}  // namespace

RecordWriter::RecordWriter(const fs::path& path, std::string_view kind) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  if (!fresh) {
    const Lines existing = split_lines(path);
    Json header;
    try {
      header = Json::parse(existing.lines.front());
    } catch (const Json::parse_error&) {
      throw Error(ErrorCode::kSchemaMismatch, path.string() + ": unreadable header line");
    }
    check_header(header, kind, path);
  }
  file_ = std::fopen(path.c_str(), "ab");
  if (file_ == nullptr) throw Error(ErrorCode::kInvalidArgument, "cannot open " + path.string());
  if (fresh) {
    const std::string line = make_header(kind).dump() + "\n";
    std::fwrite(line.data(), 1, line.size(), file_);
    std::fflush(file_);
  }
}

RecordWriter::~RecordWriter() {
  if (file_ != nullptr) std::fclose(file_);
}

void RecordWriter::write(const Json& record) {
  const std::string line = record.dump() + "\n";
  std::lock_guard lock(mutex_);
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0) {
    throw Error(ErrorCode::kInvalidArgument, "short write to record file");
  }
  ++written_;
}

ReadResult read_records(const fs::path& path, std::string_view kind, bool tolerant) {
  const Lines lines = split_lines(path);
  if (lines.lines.empty()) throw Error(ErrorCode::kSchemaMismatch, path.string() + ": empty file");
  Json header;
  try {
    header = Json::parse(lines.lines.front());
  } catch (const Json::parse_error&) {
    throw Error(ErrorCode::kSchemaMismatch, path.string() + ": unreadable header line");
  }
  check_header(header, kind, path);

  ReadResult out;
  for (std::size_t i = 1; i < lines.lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const bool torn = i + 1 == lines.lines.size() && !lines.last_terminated;
    try {
      if (torn) throw Error(ErrorCode::kCorruptLine, "line is not newline-terminated");
      Json rec = Json::parse(lines.lines[i]);
      if (!rec.is_object()) throw Error(ErrorCode::kCorruptLine, "line is not a JSON object");
      out.records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      if (!tolerant) {
        throw Error(ErrorCode::kCorruptLine,
                    path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
      out.skipped.push_back({line_no, e.what()});
    }
  }
  return out;
}

void write_records_atomic(const fs::path& path, std::string_view kind,
                          const std::vector<Json>& records) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + tmp.string());
    out << make_header(kind).dump() << '\n';
    for (const auto& r : records) out << r.dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::kInvalidArgument, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::vector<Instance> read_corpus(const fs::path& path) {
  const Lines lines = split_lines(path);
  std::vector<Instance> out;
  for (std::size_t i = 0; i < lines.lines.size(); ++i) {
    const auto& text = lines.lines[i];
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const Json rec = Json::parse(text);
      if (i == 0 && rec.contains("schema")) {
        check_header(rec, schema::kCorpus, path);
        continue;
      }
      out.push_back(instance_from_json(rec));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kSchemaMismatch) throw;
      throw Error(ErrorCode::kCorruptLine,
                  path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kCorruptLine,
                  path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  validate_corpus(out);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Json> load_checkpoint(const fs::path& path, std::string_view kind) {
  if (!fs::exists(path) || fs::file_size(path) == 0) return {};
  Lines lines = split_lines(path);
  if (!lines.last_terminated) {
    // A crash mid-write leaves at most one unterminated line; drop it so
    // appends start on a fresh line.
    std::uintmax_t keep = 0;
    for (std::size_t i = 0; i + 1 < lines.lines.size(); ++i) keep += lines.lines[i].size() + 1;
    fs::resize_file(path, keep);
    lines.lines.pop_back();
    if (lines.lines.empty()) return {};
  }
  Json header;
  try {
    header = Json::parse(lines.lines.front());
  } catch (const Json::parse_error&) {
    throw Error(ErrorCode::kCorruptCheckpoint, path.string() + ": unreadable header line");
  }
  check_header(header, kind, path);
  std::vector<Json> out;
  for (std::size_t i = 1; i < lines.lines.size(); ++i) {
    try {
      Json rec = Json::parse(lines.lines[i]);
      if (!rec.is_object()) throw std::runtime_error("not an object");
      out.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kCorruptCheckpoint,
                  path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

std::set<SampleIndex> completed_indices(const std::vector<Json>& records) {
  std::set<SampleIndex> out;
  for (const auto& r : records) {
    try {
      out.insert(get_index(r));
    } catch (const Error& e) {
      throw Error(ErrorCode::kCorruptCheckpoint, e.what());
    }
  }
  return out;
}

std::set<SampleIndex> checkpoint_resume(const fs::path& run_dir) {
  return completed_indices(load_checkpoint(run_dir / "candidates.jsonl", schema::kRawCandidate));
}

// ---------------------------------------------------------------------------

StatsReport compute_stats(const std::vector<DcotRecord>& records,
                          const std::vector<std::string>& trigger_lexicon) {
  if (records.empty()) throw Error(ErrorCode::kEmptyFile, "no records to summarize");
  StatsReport r;
  r.total_records = records.size();
  const auto total = static_cast<double>(records.size());

  double len_sum = 0.0, aha_sum = 0.0, ratio_sum = 0.0, valid = 0.0;
  std::vector<double> lengths;
  lengths.reserve(records.size());
  for (const auto& rec : records) {
    const auto len = static_cast<double>(word_count(rec.cot));
    lengths.push_back(len);
    len_sum += len;
    aha_sum += static_cast<double>(count_aha(rec.cot, trigger_lexicon));
    ratio_sum += rec.ratio;
    valid += rec.player_ok ? 1.0 : 0.0;
    ++r.per_agent_counts[rec.agent_id];
  }
  r.mean_cot_length_units = len_sum / total;
  double sq = 0.0;
  for (double len : lengths) sq += (len - r.mean_cot_length_units) * (len - r.mean_cot_length_units);
  r.stddev_cot_length_units = std::sqrt(sq / total);
  r.mean_aha = aha_sum / total;
  r.mean_rationale_ratio = ratio_sum / total;
  r.cot_validity = valid / total;
  return r;
}

StatsReport stats(const fs::path& path, const std::vector<std::string>& trigger_lexicon) {
  const Lines probe = split_lines(path);
  if (probe.lines.empty()) throw Error(ErrorCode::kEmptyFile, path.string() + " is empty");
  Json header;
  try {
    header = Json::parse(probe.lines.front());
  } catch (const Json::parse_error&) {
    throw Error(ErrorCode::kSchemaMismatch, path.string() + ": unreadable header line");
  }
  const bool prime = header.value("schema", std::string{}) == schema::kDcotPrime;
  const auto read = read_records(path, prime ? schema::kDcotPrime : schema::kDcot);
  std::vector<DcotRecord> records;
  records.reserve(read.records.size());
  for (const auto& j : read.records) records.push_back(dcot_from_json(j));
  if (records.empty()) throw Error(ErrorCode::kEmptyFile, path.string() + " has no records");
  return compute_stats(records, trigger_lexicon);
}

Json to_json(const StatsReport& r) {
  Json j;
  j["total_records"] = r.total_records;
  j["mean_cot_length_units"] = r.mean_cot_length_units;
  j["stddev_cot_length_units"] = r.stddev_cot_length_units;
  Json agents = Json::object();
  for (const auto& [id, count] : r.per_agent_counts) agents[id] = count;
  j["per_agent_counts"] = std::move(agents);
  j["mean_aha"] = r.mean_aha;
  j["mean_rationale_ratio"] = r.mean_rationale_ratio;
  j["cot_validity"] = r.cot_validity;
  return j;
}

std::string format_table(const StatsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  auto row = [&os](const std::string& label, const auto& value) {
    os << std::left << std::setw(28) << label << value << '\n';
  };
  row("records", r.total_records);
  row("mean CoT length (words)", r.mean_cot_length_units);
  row("stddev CoT length (words)", r.stddev_cot_length_units);
  row("mean aha moments", r.mean_aha);
  row("mean rationale ratio", r.mean_rationale_ratio);
  row("CoT validity", r.cot_validity);
  for (const auto& [id, count] : r.per_agent_counts) {
    std::ostringstream share;
    share << count << " (" << std::setprecision(1) << std::fixed
          << 100.0 * static_cast<double>(count) / static_cast<double>(r.total_records) << "%)";
    row("  agent " + id, share.str());
  }
  return os.str();
}

}  // namespace cotforge
