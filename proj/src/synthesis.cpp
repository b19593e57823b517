#include "cotforge/synthesis.hpp"

#include <algorithm>
#include <cctype>

namespace cotforge {

void SynthesisPlan::validate() const {
  if (agents.empty()) throw Error(ErrorCode::kInvalidArgument, "plan needs at least one agent");
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "plan needs K >= 1");
  validate_corpus(instances);
  validate_agents(agents);
}

namespace {

std::string trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace

ParsedAnswer parse_answer(std::string_view raw, const PromptTemplate& tmpl) {
  const auto& delim = tmpl.answer_delimiter;
  const auto at = delim.empty() ? std::string_view::npos : raw.rfind(delim);
  if (at == std::string_view::npos) return {trimmed(raw), ""};
  return {trimmed(raw.substr(0, at)), trimmed(raw.substr(at + delim.size()))};
}

std::vector<RawCandidate> synthesize(const SynthesisPlan& plan, const Gateway& gateway,
                                     const std::filesystem::path& checkpoint,
                                     const SynthesisOptions& options, RunControl* control) {
  plan.validate();
  const GridShape shape = plan.shape();

  std::vector<std::optional<RawCandidate>> slots(shape.size());
  for (const auto& j : load_checkpoint(checkpoint, schema::kRawCandidate)) {
    RawCandidate rec;
    try {
      rec = raw_candidate_from_json(j);
    } catch (const Error& e) {
      throw Error(ErrorCode::kCorruptCheckpoint, checkpoint.string() + ": " + e.what());
    }
    if (!rec.index.within(shape) || plan.instances[rec.index.n].id != rec.instance_id ||
        plan.seed_spec.derived(rec.index) != rec.seed) {
      throw Error(ErrorCode::kCorruptCheckpoint,
                  checkpoint.string() + " was written for a different plan");
    }
    slots[rec.index.flat(shape)] = std::move(rec);
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!slots[i]) pending.push_back(i);
  }

  auto template_for = [&](const AgentProfile& agent) -> const PromptTemplate& {
    auto it = options.templates.find(agent.prompt_template_id);
    return it == options.templates.end() ? options.default_template : it->second;
  };

  std::atomic<bool> fatal{false};
  std::string fatal_message;
  std::mutex fatal_mutex;

  if (!pending.empty()) {
    RecordWriter writer(checkpoint, schema::kRawCandidate);
    parallel_for(
        pending.size(), options.workers,
        [&](std::size_t task) {
          if (fatal.load()) return;
          const SampleIndex idx = SampleIndex::from_flat(pending[task], shape);
          const Instance& inst = plan.instances[idx.n];
          const AgentProfile& agent = plan.agents[idx.m];
          const PromptTemplate& tmpl = template_for(agent);

          RawCandidate rec;
          rec.instance_id = inst.id;
          rec.index = idx;
          rec.agent_id = agent.agent_id;
          rec.seed = plan.seed_spec.derived(idx);

          CompletionRequest req;
          req.endpoint_ref = agent.endpoint_ref.empty() ? agent.agent_id : agent.endpoint_ref;
          req.prompt_parts.push_back(PromptPart::text(tmpl.render({{"query", inst.query}})));
          if (!inst.image_ref.empty()) req.prompt_parts.push_back(PromptPart::image(inst.image_ref));
          req.seed = rec.seed;
          req.temperature = options.temperature;
          req.max_output_units = options.max_output_units;

          try {
            const auto resp = gateway.complete(req, options.policy);
            if (resp.finish_reason == FinishReason::kRefused) {
              rec.generation_failed = true;
            } else {
              auto parsed = parse_answer(resp.text, tmpl);
              rec.cot_text = std::move(parsed.cot_text);
              rec.predicted_answer = std::move(parsed.predicted_answer);
              rec.generation_failed = rec.cot_text.empty() && rec.predicted_answer.empty();
            }
          } catch (const Error& e) {
            if (e.code() == ErrorCode::kPermanentRejection) {
              std::lock_guard lock(fatal_mutex);
              if (!fatal.exchange(true)) fatal_message = e.what();
              return;
            }
            if (e.code() != ErrorCode::kExhaustedRetries &&
                e.code() != ErrorCode::kMalformedResponse) {
              throw;
            }
            rec.generation_failed = true;
          }
          if (rec.generation_failed) {
            rec.cot_text.clear();
            rec.predicted_answer.clear();
          }
          if (control != nullptr) control->before_record();
          writer.write(to_json(rec));
          slots[pending[task]] = std::move(rec);
        },
        control);
  }
  if (fatal) throw Error(ErrorCode::kFatalEndpoint, fatal_message);

  std::vector<RawCandidate> out;
  std::vector<Json> canonical;
  out.reserve(slots.size());
  canonical.reserve(slots.size());
  for (auto& slot : slots) {
    canonical.push_back(to_json(*slot));
    out.push_back(std::move(*slot));
  }
  write_records_atomic(checkpoint, schema::kRawCandidate, canonical);
  return out;
}

}  // namespace cotforge
