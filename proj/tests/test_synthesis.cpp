#include <gtest/gtest.h>

#include <set>

#include "cotforge/synthesis.hpp"
#include "support.hpp"

using namespace cotforge;
using cotforge::testing::TempDir;
using cotforge::testing::slurp;

namespace {

SynthesisPlan plan_of(std::size_t n, std::size_t m, std::size_t k, std::uint64_t base = 1) {
  SynthesisPlan plan;
  plan.instances = cotforge::testing::small_corpus(n);
  for (std::size_t i = 0; i < m; ++i) plan.agents.push_back({"agent" + std::to_string(i), "", "", i});
  plan.k = k;
  plan.seed_spec.base_seed = base;
  return plan;
}

void register_agents(Gateway& gw, std::size_t m, MockScript script) {
  for (std::size_t i = 0; i < m; ++i) gw.register_mock("agent" + std::to_string(i), script);
}

MockReply seeded_reply(const MockCall& call) {
  return MockReply::ok("<think>seed " + std::to_string(call.request.seed % 1000) +
                       "</think> Answer: " + std::to_string(call.request.seed % 7));
}

SynthesisOptions fast_options(std::size_t workers = 4) {
  SynthesisOptions o;
  o.policy.base_backoff = std::chrono::milliseconds(1);
  o.workers = workers;
  return o;
}

}  // namespace

TEST(ParseAnswer, SplitsAtDelimiter) {
  const auto t = default_templates::synthesis();
  const auto p = parse_answer("<think>steps</think> Answer: 42", t);
  EXPECT_EQ(p.cot_text, "<think>steps</think>");
  EXPECT_EQ(p.predicted_answer, "42");
}

TEST(ParseAnswer, MissingDelimiterKeepsWholeTextAsCot) {
  const auto p = parse_answer("no delimiter here", default_templates::synthesis());
  EXPECT_EQ(p.cot_text, "no delimiter here");
  EXPECT_EQ(p.predicted_answer, "");
}

TEST(ParseAnswer, UsesLastDelimiterOccurrence) {
  const auto p = parse_answer("Answer: 1 ... Answer: 2", default_templates::synthesis());
  EXPECT_EQ(p.predicted_answer, "2");
  EXPECT_EQ(p.cot_text, "Answer: 1 ...");
}

TEST(Synthesize, SmallGridEmitsOneRecordPerIndex) {
  TempDir dir;
  Gateway gw;
  register_agents(gw, 2, seeded_reply);
  const auto plan = plan_of(2, 2, 3);
  const auto recs = synthesize(plan, gw, dir / "c.jsonl", fast_options());
  ASSERT_EQ(recs.size(), 12U);
  std::set<SampleIndex> idx;
  for (const auto& r : recs) {
    idx.insert(r.index);
    EXPECT_EQ(r.seed, plan.seed_spec.derived(r.index));
    EXPECT_EQ(r.instance_id, plan.instances[r.index.n].id);
    EXPECT_EQ(r.agent_id, plan.agents[r.index.m].agent_id);
    EXPECT_FALSE(r.generation_failed);
  }
  EXPECT_EQ(idx.size(), 12U);
  EXPECT_TRUE(std::is_sorted(recs.begin(), recs.end(),
                             [](const auto& a, const auto& b) { return a.index < b.index; }));
}

TEST(Synthesize, DegenerateGridEmitsOneRecord) {
  TempDir dir;
  Gateway gw;
  register_agents(gw, 1, seeded_reply);
  EXPECT_EQ(synthesize(plan_of(1, 1, 1), gw, dir / "c.jsonl", fast_options()).size(), 1U);
}

TEST(Synthesize, ExhaustedRetriesBecomeFailureRecords) {
  TempDir dir;
  Gateway gw;
  register_agents(gw, 2, [](const MockCall& call) {
    return call.request.endpoint_ref == "agent1" ? MockReply::transient_failure()
                                                 : MockReply::ok("x Answer: 1");
  });
  const auto recs = synthesize(plan_of(2, 2, 2), gw, dir / "c.jsonl", fast_options());
  ASSERT_EQ(recs.size(), 8U);
  for (const auto& r : recs) {
    EXPECT_EQ(r.generation_failed, r.index.m == 1);
    if (r.generation_failed) {
      EXPECT_TRUE(r.cot_text.empty());
      EXPECT_TRUE(r.predicted_answer.empty());
    }
  }
}

TEST(Synthesize, RefusalIsAFailureRecord) {
  TempDir dir;
  Gateway gw;
  register_agents(gw, 1, [](const MockCall&) {
    MockReply r = MockReply::ok("I cannot help. Answer: no");
    r.finish_reason = FinishReason::kRefused;
    return r;
  });
  const auto recs = synthesize(plan_of(1, 1, 2), gw, dir / "c.jsonl", fast_options());
  for (const auto& r : recs) EXPECT_TRUE(r.generation_failed);
}

TEST(Synthesize, PermanentRejectionIsFatalAfterFlushing) {
  TempDir dir;
  Gateway gw;
  gw.register_mock("agent0", seeded_reply);
  gw.register_mock("agent1", [](const MockCall&) { return MockReply::permanent_failure(); });
  try {
    synthesize(plan_of(2, 2, 2), gw, dir / "c.jsonl", fast_options(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFatalEndpoint);
  }
  // Whatever completed before the abort is on disk and reloadable.
  EXPECT_GE(load_checkpoint(dir / "c.jsonl", schema::kRawCandidate).size(), 2U);
}

TEST(Synthesize, RerunIsByteIdenticalAndMakesNoCalls) {
  TempDir a, b;
  Gateway gw1, gw2;
  register_agents(gw1, 2, seeded_reply);
  register_agents(gw2, 2, seeded_reply);
  const auto plan = plan_of(3, 2, 2);
  synthesize(plan, gw1, a / "c.jsonl", fast_options(8));
  synthesize(plan, gw2, b / "c.jsonl", fast_options(1));
  EXPECT_EQ(slurp(a / "c.jsonl"), slurp(b / "c.jsonl"));
  const auto calls = gw1.total_attempts();
  synthesize(plan, gw1, a / "c.jsonl", fast_options(8));
  EXPECT_EQ(gw1.total_attempts(), calls);
  EXPECT_EQ(slurp(a / "c.jsonl"), slurp(b / "c.jsonl"));
}

TEST(Synthesize, KillAfterSevenOfTwelveThenResume) {
  TempDir crashed, clean;
  const auto plan = plan_of(2, 2, 3);
  {
    Gateway gw;
    register_agents(gw, 2, seeded_reply);
    RunControl budget(7);
    EXPECT_THROW(synthesize(plan, gw, crashed / "candidates.jsonl", fast_options(3), &budget), Error);
  }
  EXPECT_EQ(checkpoint_resume(crashed.path()).size(), 7U);
  EXPECT_TRUE(checkpoint_resume(clean.path()).empty());

  Gateway resumed_gw;
  register_agents(resumed_gw, 2, seeded_reply);
  synthesize(plan, resumed_gw, crashed / "candidates.jsonl", fast_options(3));
  EXPECT_EQ(resumed_gw.total_attempts(), 5U);

  Gateway clean_gw;
  register_agents(clean_gw, 2, seeded_reply);
  synthesize(plan, clean_gw, clean / "candidates.jsonl", fast_options(3));
  EXPECT_EQ(slurp(crashed / "candidates.jsonl"), slurp(clean / "candidates.jsonl"));
  EXPECT_EQ(checkpoint_resume(crashed.path()).size(), 12U);
}

TEST(Synthesize, CheckpointFromAnotherPlanIsRejected) {
  TempDir dir;
  Gateway gw;
  register_agents(gw, 1, seeded_reply);
  synthesize(plan_of(1, 1, 2, 1), gw, dir / "c.jsonl", fast_options());
  try {
    synthesize(plan_of(1, 1, 2, 2), gw, dir / "c.jsonl", fast_options());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorruptCheckpoint);
  }
}

TEST(Synthesize, InvalidPlanIsRejected) {
  TempDir dir;
  Gateway gw;
  EXPECT_THROW(synthesize(plan_of(1, 0, 2), gw, dir / "c.jsonl", fast_options()), Error);
  EXPECT_THROW(synthesize(plan_of(1, 1, 0), gw, dir / "c.jsonl", fast_options()), Error);
}

TEST(Synthesize, AgentTemplatesAndImagesReachTheEndpoint) {
  TempDir dir;
  Gateway gw;
  gw.register_mock("agent0", [](const MockCall& call) {
    EXPECT_EQ(call.request.prompt_parts.size(), 2U);
    EXPECT_EQ(call.request.prompt_parts[1].content, "img/0.png");
    EXPECT_EQ(call.request.joined_text().rfind("CUSTOM ", 0), 0U);
    EXPECT_EQ(call.request.temperature, 1.0);
    return MockReply::ok("because FINAL=> 10");
  });
  auto plan = plan_of(1, 1, 1);
  plan.agents[0].prompt_template_id = "custom";
  auto opts = fast_options();
  opts.templates["custom"] = PromptTemplate{"custom", "CUSTOM {query}", "FINAL=>"};
  const auto recs = synthesize(plan, gw, dir / "c.jsonl", opts);
  EXPECT_EQ(recs[0].predicted_answer, "10");
  EXPECT_EQ(recs[0].cot_text, "because");
}
