#include "cotforge/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "cotforge/judging.hpp"
#include "cotforge/rationale.hpp"
#include "cotforge/simulated.hpp"
#include "cotforge/synthesis.hpp"
#include "cotforge/validity.hpp"

namespace cotforge {

namespace fs = std::filesystem;

std::string sweep_file_name(double eta) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "dcot_prime_eta%g.jsonl", eta);
  return buf;
}

RoleIds role_ids(const RunConfig& config) {
  RoleIds ids;
  for (const auto& a : config.effective_agents()) ids.agents.push_back(a.id);
  ids.judge = config.judge.id;
  ids.player = config.player.id;
  ids.extractor = config.extractor.id;
  return ids;
}

std::unique_ptr<Gateway> make_gateway(const RunConfig& config) {
  auto gateway = std::make_unique<Gateway>();
  const int cap = static_cast<int>(config.concurrency);
  if (config.mock) {
    SimulatedWorld world(read_corpus(config.resolve(config.corpus_path)));
    const RoleIds ids = role_ids(config);
    world.register_all(*gateway, ids.agents, ids.judge, ids.player, ids.extractor, cap);
  } else {
    const fs::path image_root = config.resolve(config.corpus_path).parent_path();
    auto add = [&](const EndpointConfig& e) {
      gateway->register_backend(e.id, std::make_unique<HttpBackend>(e.http, image_root),
                                e.http.max_in_flight);
    };
    for (const auto& a : config.agents) add(a);
    add(config.judge);
    add(config.player);
    add(config.extractor);
  }
  if (config.audit) {
    const fs::path dir = config.resolve(config.run_dir);
    fs::create_directories(dir);
    gateway->enable_audit(dir / run_files::kAudit);
  }
  return gateway;
}

namespace {

struct Roles {
  LlmJudgeConfig judge;
  PlayerConfig player;
  ExtractorConfig extractor;
};

Roles make_roles(const PipelineContext& ctx) {
  const RunConfig& c = ctx.config;
  const PromptSet prompts = load_prompts(c);
  Roles r;
  r.judge.gateway = ctx.gateway;
  r.judge.endpoint = c.judge.id;
  r.judge.prompt = prompts.judge;
  r.judge.policy = c.retry;
  r.judge.temperature = c.judge.temperature;
  r.judge.max_output_units = c.judge.max_output_units;

  r.player.gateway = ctx.gateway;
  r.player.endpoint = c.player.id;
  r.player.with_cot = prompts.player_with_cot;
  r.player.without_cot = prompts.player_without_cot;
  r.player.policy = c.retry;
  r.player.temperature = c.player.temperature;
  r.player.max_output_units = c.player.max_output_units;

  r.extractor.gateway = ctx.gateway;
  r.extractor.endpoint = c.extractor.id;
  r.extractor.prompt = prompts.extractor;
  r.extractor.policy = c.retry;
  r.extractor.max_output_units = c.extractor.max_output_units;
  return r;
}

std::vector<Instance> load_corpus(const RunConfig& c) { return read_corpus(c.resolve(c.corpus_path)); }

std::vector<AgentProfile> agent_profiles(const RunConfig& c) {
  std::vector<AgentProfile> out;
  const auto agents = c.effective_agents();
  for (std::size_t m = 0; m < agents.size(); ++m) {
    out.push_back({agents[m].id, agents[m].id,
                   agents[m].template_path.empty() ? std::string() : agents[m].id, m});
  }
  return out;
}

GridShape grid_of(const RunConfig& c, std::size_t instances) {
  return {instances, c.agent_count(), c.k};
}

void before_record(RunControl* control) {
  if (control != nullptr) control->before_record();
}

/// Generic checkpointed loop over grid slots: loads what is done, runs the
/// rest in parallel, and returns every record keyed by slot.
template <class Record, class Parse, class Produce, class Encode>
std::map<SampleIndex, Record> run_checkpointed(const fs::path& path, std::string_view kind,
                                               const std::vector<SampleIndex>& wanted,
                                               const std::function<bool(const Record&)>& belongs,
                                               Parse parse, Produce produce, Encode encode,
                                               const PipelineContext& ctx) {
  std::map<SampleIndex, Record> done;
  for (const auto& j : load_checkpoint(path, kind)) {
    Record rec;
    try {
      rec = parse(j);
    } catch (const Error& e) {
      throw Error(ErrorCode::kCorruptCheckpoint, path.string() + ": " + e.what());
    }
    if (!belongs(rec)) {
      throw Error(ErrorCode::kCorruptCheckpoint, path.string() + " was written for a different run");
    }
    done.emplace(rec.index_key(), std::move(rec));
  }

  std::vector<SampleIndex> pending;
  for (const auto& idx : wanted) {
    if (!done.contains(idx)) pending.push_back(idx);
  }
  if (!pending.empty()) {
    RecordWriter writer(path, kind);
    std::mutex done_mutex;
    parallel_for(
        pending.size(), ctx.config.concurrency,
        [&](std::size_t i) {
          Record rec = produce(pending[i]);
          before_record(ctx.control);
          writer.write(encode(rec));
          std::lock_guard lock(done_mutex);
          done.emplace(pending[i], std::move(rec));
        },
        ctx.control);
  }

  std::vector<Json> canonical;
  canonical.reserve(done.size());
  for (const auto& [idx, rec] : done) canonical.push_back(encode(rec));
  write_records_atomic(path, kind, canonical);
  return done;
}

struct ScoredSlot {
  ScoredCandidate value;
  SampleIndex index_key() const { return value.candidate.index; }
};

struct BaselineSlot {
  PlayerRun value;
  SampleIndex index_key() const { return value.index; }
};

ScoredCandidate score_candidate(const RawCandidate& raw, const Instance& inst, const Roles& roles,
                                const std::vector<std::string>& lexicon) {
  ScoredCandidate out;
  out.instance_id = raw.instance_id;
  out.agent_id = raw.agent_id;
  out.seed = raw.seed;
  Candidate& c = out.candidate;
  c.index = raw.index;
  c.cot_text = raw.cot_text;
  c.predicted_answer = raw.predicted_answer;
  c.generation_failed = raw.generation_failed;
  if (raw.generation_failed) {
    out.judge_flag = JudgeVerdict::Flag::kNone;
    return out;
  }

  const JudgeVerdict verdict = judge(raw.predicted_answer, inst.gold_answer, roles.judge);
  c.judge_ok = verdict.consistent;
  out.judge_method = verdict.method;
  out.judge_flag = verdict.flag;

  if (!raw.cot_text.empty()) {
    const PlayerRun run = play_with_cot(inst, raw.cot_text, raw.index, raw.seed, roles.player,
                                        roles.judge);
    c.player_answer = run.answer_text;
    c.player_confidence = run.confidence;
    c.player_judge_ok = run.judge_ok;
    c.aha_count = count_aha(raw.cot_text, lexicon);
    if (c.judge_ok) {
      const RationaleReport report = analyze_rationale(raw.cot_text, roles.extractor, lexicon);
      out.extractor_missing = report.missing;
      if (!report.missing) c.rationale_ratio = report.ratio;
    }
  }
  return out;
}

DcotRecord make_dcot_record(const Instance& inst, const InstanceSelection& sel,
                            const ScoredCandidate& winner) {
  DcotRecord r;
  r.id = inst.id;
  r.query = inst.query;
  r.image = inst.image_ref;
  r.answer = inst.gold_answer;
  r.cot = sel.chosen_cot;
  r.agent_id = winner.agent_id;
  r.k = sel.chosen_k;
  r.m = sel.chosen_m;
  r.phi = winner.candidate.phi_or_zero();
  r.ratio = winner.candidate.ratio_or_zero();
  r.player_ok = winner.candidate.player_judge_ok;
  return r;
}

template <class T, class F>
std::vector<T> read_all(const fs::path& path, std::string_view kind, F parse) {
  std::vector<T> out;
  for (const auto& j : read_records(path, kind).records) out.push_back(parse(j));
  return out;
}

template <class T>
std::vector<Json> encode_all(const std::vector<T>& items) {
  std::vector<Json> out;
  out.reserve(items.size());
  for (const auto& i : items) out.push_back(to_json(i));
  return out;
}

}  // namespace

std::vector<DcotPrimeRecord> build_dcot_prime(const std::vector<DcotRecord>& dcot,
                                              const SelectionCut& cut,
                                              const std::vector<BatchScore>& scores) {
  std::unordered_map<std::string, const BatchScore*> score_by_id;
  for (const auto& s : scores) score_by_id[s.instance_id] = &s;
  std::unordered_map<std::string, const DcotRecord*> row_by_id;
  for (const auto& r : dcot) row_by_id[r.id] = &r;
  std::set<std::string> keep;
  for (const auto& id : cut.cut_ids) {
    if (!row_by_id.contains(id)) throw Error(ErrorCode::kUnknownId, "cut id '" + id + "' is not in D_cot");
    if (!score_by_id.contains(id)) throw Error(ErrorCode::kUnknownId, "cut id '" + id + "' has no score");
    keep.insert(id);
  }
  if (keep.empty()) spdlog::warn("selection cut at eta={} is empty", cut.eta);
  std::vector<DcotPrimeRecord> out;
  for (const auto& r : dcot) {
    if (keep.contains(r.id)) out.push_back({r, *score_by_id.at(r.id)});
  }
  return out;
}

SynthSummary run_synth(const PipelineContext& ctx) {
  const RunConfig& c = ctx.config;
  fs::create_directories(c.resolve(c.run_dir));
  SynthesisPlan plan;
  plan.instances = load_corpus(c);
  plan.agents = agent_profiles(c);
  plan.k = c.k;
  plan.seed_spec.base_seed = c.base_seed;

  SynthesisOptions opts;
  opts.policy = c.retry;
  opts.workers = c.concurrency;
  opts.default_template.answer_delimiter = c.answer_delimiter;
  const auto agents = c.effective_agents();
  if (!agents.empty()) {
    opts.temperature = agents.front().temperature;
    opts.max_output_units = agents.front().max_output_units;
  }
  for (const auto& a : agents) {
    if (!a.template_path.empty()) {
      opts.templates[a.id] = load_template(c.resolve(a.template_path), a.id, c.answer_delimiter);
    }
  }

  const fs::path path = ctx.path(run_files::kCandidates);
  const std::size_t before = completed_indices(load_checkpoint(path, schema::kRawCandidate)).size();
  spdlog::info("synth: grid {}x{}x{} = {} samples, {} already done", plan.instances.size(),
               plan.agents.size(), plan.k, plan.shape().size(), before);
  const auto records = synthesize(plan, *ctx.gateway, path, opts, ctx.control);

  SynthSummary s;
  s.records = records.size();
  s.already_complete = before == records.size();
  for (const auto& r : records) s.failed += r.generation_failed ? 1 : 0;
  spdlog::info("synth: {} records, {} generation failures", s.records, s.failed);
  return s;
}

InstanceStageSummary run_select_instance(const PipelineContext& ctx) {
  const RunConfig& c = ctx.config;
  const auto corpus = load_corpus(c);
  const GridShape shape = grid_of(c, corpus.size());
  const Roles roles = make_roles(ctx);

  const fs::path cand_path = ctx.path(run_files::kCandidates);
  if (!fs::exists(cand_path)) {
    throw Error(ErrorCode::kIncompleteGrid, cand_path.string() + " does not exist; run synth first");
  }
  std::vector<std::optional<RawCandidate>> raw(shape.size());
  for (const auto& j : read_records(cand_path, schema::kRawCandidate).records) {
    RawCandidate r = raw_candidate_from_json(j);
    if (!r.index.within(shape) || corpus[r.index.n].id != r.instance_id) {
      throw Error(ErrorCode::kIncompleteGrid, "candidate " + r.instance_id + " is outside the grid");
    }
    raw[r.index.flat(shape)] = std::move(r);
  }
  const auto have = static_cast<std::size_t>(std::count_if(raw.begin(), raw.end(), [](const auto& r) {
    return r.has_value();
  }));
  if (have != shape.size()) {
    throw Error(ErrorCode::kIncompleteGrid, "candidates cover " + std::to_string(have) + " of " +
                                                std::to_string(shape.size()) + " grid slots");
  }

  // Score every candidate.
  std::vector<SampleIndex> all = enumerate_grid(shape);
  spdlog::info("select-instance: scoring {} candidates", all.size());
  const auto scored = run_checkpointed<ScoredSlot>(
      ctx.path(run_files::kScored), schema::kCandidate, all,
      [&](const ScoredSlot& s) {
        const auto& idx = s.value.candidate.index;
        return idx.within(shape) && corpus[idx.n].id == s.value.instance_id;
      },
      [](const Json& j) { return ScoredSlot{scored_candidate_from_json(j)}; },
      [&](const SampleIndex& idx) {
        return ScoredSlot{score_candidate(*raw[idx.flat(shape)], corpus[idx.n], roles,
                                          c.trigger_lexicon)};
      },
      [](const ScoredSlot& s) { return to_json(s.value); }, ctx);

  std::vector<Candidate> candidates;
  candidates.reserve(scored.size());
  for (const auto& [idx, s] : scored) candidates.push_back(s.value.candidate);
  const DcotBuild build = build_dcot(corpus, candidates, shape.agents, shape.samples, c.weights);

  // CoT-free runs for the instances that made it into D_cot.
  std::unordered_map<std::string, std::size_t> n_of;
  for (std::size_t n = 0; n < corpus.size(); ++n) n_of[corpus[n].id] = n;
  std::vector<SampleIndex> baseline_slots;
  std::set<std::size_t> selected_n;
  for (const auto& sel : build.selections) {
    const std::size_t n = n_of.at(sel.instance_id);
    selected_n.insert(n);
    for (std::size_t m = 0; m < shape.agents; ++m) {
      for (std::size_t k = 0; k < shape.samples; ++k) baseline_slots.push_back({n, m, k});
    }
  }
  const SeedSpec seeds{c.base_seed};
  spdlog::info("select-instance: {} selected, running {} CoT-free player runs",
               build.selections.size(), baseline_slots.size());
  run_checkpointed<BaselineSlot>(
      ctx.path(run_files::kBaseline), schema::kBaselineRun, baseline_slots,
      [&](const BaselineSlot& b) {
        return b.value.index.within(shape) && selected_n.contains(b.value.index.n) &&
               corpus[b.value.index.n].id == b.value.instance_id &&
               seeds.derived(b.value.index) == b.value.seed;
      },
      [](const Json& j) { return BaselineSlot{player_run_from_json(j)}; },
      [&](const SampleIndex& idx) {
        return BaselineSlot{
            play_without_cot(corpus[idx.n], idx, seeds.derived(idx), roles.player, roles.judge)};
      },
      [](const BaselineSlot& b) { return to_json(b.value); }, ctx);

  std::vector<DcotRecord> dcot;
  for (const auto& sel : build.selections) {
    const std::size_t n = n_of.at(sel.instance_id);
    const auto& winner = scored.at(SampleIndex{n, sel.chosen_m, sel.chosen_k}).value;
    dcot.push_back(make_dcot_record(corpus[n], sel, winner));
  }
  write_records_atomic(ctx.path(run_files::kDcot), schema::kDcot, encode_all(dcot));
  write_records_atomic(ctx.path(run_files::kExclusions), schema::kExclusion,
                       encode_all(build.report));

  InstanceStageSummary s;
  s.dcot_records = dcot.size();
  for (const auto& e : build.report) {
    (e.status == ExclusionEntry::Status::kExcluded ? s.excluded : s.fallbacks) += 1;
  }
  spdlog::info("select-instance: D_cot has {} records, {} excluded, {} fallbacks", s.dcot_records,
               s.excluded, s.fallbacks);
  return s;
}

BatchStageSummary run_select_batch(const PipelineContext& ctx) {
  const RunConfig& c = ctx.config;
  const auto dcot = read_all<DcotRecord>(ctx.path(run_files::kDcot), schema::kDcot, dcot_from_json);

  std::unordered_map<std::string, std::vector<Candidate>> cands;
  for (const auto& j : read_records(ctx.path(run_files::kScored), schema::kCandidate).records) {
    auto s = scored_candidate_from_json(j);
    cands[s.instance_id].push_back(std::move(s.candidate));
  }
  std::unordered_map<std::string, std::vector<PlayerRun>> runs;
  const fs::path baseline_path = ctx.path(run_files::kBaseline);
  if (fs::exists(baseline_path)) {
    for (const auto& j : read_records(baseline_path, schema::kBaselineRun).records) {
      auto r = player_run_from_json(j);
      runs[r.instance_id].push_back(std::move(r));
    }
  }

  const std::size_t agents = c.agent_count();
  BatchStageSummary out;
  for (const auto& row : dcot) {
    InstanceSelection sel;
    sel.instance_id = row.id;
    sel.chosen_m = row.m;
    sel.chosen_k = row.k;
    sel.chosen_cot = row.cot;
    out.scores.push_back(score_instance(sel, cands[row.id], runs[row.id], agents, c.k, c.weights));
  }
  write_records_atomic(ctx.path(run_files::kScores), schema::kBatchScore, encode_all(out.scores));

  std::vector<double> etas{c.eta};
  for (double e : c.eta_sweep) {
    if (std::find(etas.begin(), etas.end(), e) == etas.end()) etas.push_back(e);
  }
  for (std::size_t i = 0; i < etas.size(); ++i) {
    const fs::path path = ctx.path(i == 0 ? std::string(run_files::kDcotPrime).c_str()
                                          : sweep_file_name(etas[i]).c_str());
    std::vector<DcotPrimeRecord> prime;
    if (out.scores.empty()) {
      spdlog::warn("select-batch: D_cot is empty, writing an empty D'_cot for eta={}", etas[i]);
      out.cuts.push_back({etas[i], 0, {}, {}});
    } else {
      out.cuts.push_back(rank_and_cut(out.scores, etas[i]));
      prime = build_dcot_prime(dcot, out.cuts.back(), out.scores);
    }
    write_records_atomic(path, schema::kDcotPrime, encode_all(prime));
    spdlog::info("select-batch: eta={} keeps {} of {} instances", etas[i], prime.size(),
                 out.scores.size());
  }
  return out;
}

StatsReport run_stats(const PipelineContext& ctx) {
  const RunConfig& c = ctx.config;
  auto write_json = [](const fs::path& path, const Json& j) {
    const fs::path tmp = path.string() + ".tmp";
    {
      std::FILE* f = std::fopen(tmp.c_str(), "wb");
      if (f == nullptr) throw Error(ErrorCode::kInvalidArgument, "cannot write " + tmp.string());
      const std::string text = j.dump(2) + "\n";
      std::fwrite(text.data(), 1, text.size(), f);
      std::fclose(f);
    }
    fs::rename(tmp, path);
  };
  const StatsReport dcot = stats(ctx.path(run_files::kDcot), c.trigger_lexicon);
  write_json(ctx.path(run_files::kStatsDcot), to_json(dcot));
  const fs::path prime = ctx.path(run_files::kDcotPrime);
  if (fs::exists(prime) && !read_records(prime, schema::kDcotPrime).records.empty()) {
    write_json(ctx.path(run_files::kStatsDcotPrime), to_json(stats(prime, c.trigger_lexicon)));
  }
  return dcot;
}

void run_all(const PipelineContext& ctx) {
  run_synth(ctx);
  run_select_instance(ctx);
  run_select_batch(ctx);
  const fs::path dcot = ctx.path(run_files::kDcot);
  if (read_records(dcot, schema::kDcot).records.empty()) {
    spdlog::warn("D_cot is empty; skipping stats");
    return;
  }
  run_stats(ctx);
}

}  // namespace cotforge
