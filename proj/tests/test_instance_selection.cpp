#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cotforge/instance_selection.hpp"
#include "support.hpp"

using namespace cotforge;
using cotforge::testing::make_candidate;

namespace {

std::vector<Candidate> grid(const std::vector<std::vector<std::pair<bool, bool>>>& per_agent) {
  std::vector<Candidate> out;
  for (std::size_t m = 0; m < per_agent.size(); ++m) {
    for (std::size_t k = 0; k < per_agent[m].size(); ++k) {
      out.push_back(make_candidate(m, k, per_agent[m][k].first, per_agent[m][k].second));
    }
  }
  return out;
}

}  // namespace

TEST(TallyAgents, HandCountedExample) {
  const auto cands = grid({{{true, true}, {true, false}, {false, false}},
                           {{true, true}, {true, true}, {true, false}}});
  const auto t = tally_agents(cands, 2, 3);
  ASSERT_EQ(t.size(), 2U);
  EXPECT_EQ(t[0], (AgentTally{0, 2, 1}));
  EXPECT_EQ(t[1], (AgentTally{1, 3, 2}));
}

TEST(TallyAgents, AllFailedGivesZeros) {
  std::vector<Candidate> cands;
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t k = 0; k < 2; ++k) {
      Candidate c;
      c.index = {0, m, k};
      c.generation_failed = true;
      cands.push_back(c);
    }
  }
  for (const auto& t : tally_agents(cands, 2, 2)) {
    EXPECT_EQ(t.A, 0);
    EXPECT_EQ(t.V, 0);
  }
}

TEST(TallyAgents, SingleValidCandidate) {
  const auto t = tally_agents(grid({{{true, true}}}), 1, 1);
  EXPECT_EQ(t[0], (AgentTally{0, 1, 1}));
}

TEST(TallyAgents, IncompleteOrDuplicateGridIsRejected) {
  auto cands = grid({{{true, true}, {true, false}}});
  EXPECT_THROW(tally_agents(cands, 1, 3), Error);
  cands[1].index.k = 0;
  try {
    tally_agents(cands, 1, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIncompleteGrid);
  }
}

TEST(SelectAgent, SpecExamples) {
  std::vector<AgentTally> a{{0, 3, 2}, {1, 5, 2}};
  EXPECT_EQ(select_agent(a), 1U);
  std::vector<AgentTally> b{{0, 6, 1}, {1, 1, 3}};
  EXPECT_EQ(select_agent(b), 1U);
  std::vector<AgentTally> c{{0, 2, 2}, {1, 2, 2}};
  EXPECT_EQ(select_agent(c), 0U);
}

TEST(SelectAgent, WinnerWithoutCorrectAnswerIsNoEligibleAgent) {
  std::vector<AgentTally> t{{0, 0, 3}, {1, 2, 1}};
  EXPECT_FALSE(select_agent(t).has_value());
  const auto choice = select_agent_with_fallback(t);
  EXPECT_EQ(choice.m, 1U);
  EXPECT_TRUE(choice.fallback_used);
  std::vector<AgentTally> none{{0, 0, 3}, {1, 0, 1}};
  EXPECT_FALSE(select_agent_with_fallback(none).m.has_value());
}

TEST(SelectCot, ArithmeticExample) {
  std::vector<Candidate> c{make_candidate(0, 0, true, true, 0.9, 0.2),
                           make_candidate(0, 1, true, true, 0.7, 0.5)};
  EXPECT_EQ(select_cot(c, ScoreWeights{}), 1U);
}

TEST(SelectCot, IncorrectCandidatesAreDiscardedFirst) {
  std::vector<Candidate> c{make_candidate(0, 0, false, true, 1.0, 1.0),
                           make_candidate(0, 1, true, false, 0.1, 0.0)};
  EXPECT_EQ(select_cot(c, ScoreWeights{}), 1U);
  c[1].judge_ok = false;
  EXPECT_FALSE(select_cot(c, ScoreWeights{}).has_value());
}

TEST(SelectCot, ZeroLambdaReducesToArgmaxPhi) {
  std::vector<Candidate> c{make_candidate(0, 0, true, true, 0.6, 1.0),
                           make_candidate(0, 1, true, true, 0.8, 0.0)};
  ScoreWeights w;
  w.lambda_k = 0.0;
  EXPECT_EQ(select_cot(c, w), 1U);
}

TEST(SelectCot, TiesGoToLowestK) {
  std::vector<Candidate> c{make_candidate(0, 2, true, true, 0.5, 0.5),
                           make_candidate(0, 1, true, true, 0.5, 0.5)};
  EXPECT_EQ(select_cot(c, ScoreWeights{}), 1U);
}

TEST(SelectInstance, PermutationInvariant) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 50; ++t) {
    std::vector<Candidate> cands;
    for (std::size_t m = 0; m < 3; ++m) {
      for (std::size_t k = 0; k < 4; ++k) cands.push_back(make_candidate(m, k, coin(rng), coin(rng), u(rng), u(rng)));
    }
    const Instance inst{"x", "q", "", "gold"};
    const auto base = select_instance(inst, cands, 3, 4, ScoreWeights{});
    std::shuffle(cands.begin(), cands.end(), rng);
    const auto shuffled = select_instance(inst, cands, 3, 4, ScoreWeights{});
    ASSERT_EQ(base.selection.has_value(), shuffled.selection.has_value());
    if (base.selection) {
      EXPECT_EQ(base.selection->chosen_m, shuffled.selection->chosen_m);
      EXPECT_EQ(base.selection->chosen_k, shuffled.selection->chosen_k);
    }
  }
}

TEST(SelectInstance, RaisingPhiOfRunnerUpPastWinnerSwitchesSelection) {
  std::vector<Candidate> c{make_candidate(0, 0, true, true, 0.9, 0.2),
                           make_candidate(0, 1, true, true, 0.5, 0.5)};
  const Instance inst{"x", "q", "", "gold"};
  EXPECT_EQ(select_instance(inst, c, 1, 2, ScoreWeights{}).selection->chosen_k, 0U);
  c[0].player_confidence = 1.0;  // raising the winner changes nothing
  EXPECT_EQ(select_instance(inst, c, 1, 2, ScoreWeights{}).selection->chosen_k, 0U);
  c[1].player_confidence = 0.75;  // 0.75 + 0.5 > 1.0 + 0.2
  EXPECT_EQ(select_instance(inst, c, 1, 2, ScoreWeights{}).selection->chosen_k, 1U);
}

TEST(BuildDcot, UnsolvableInstancesAreExcludedWithReasons) {
  std::vector<Instance> corpus = cotforge::testing::small_corpus(10);
  std::vector<Candidate> cands;
  for (std::size_t n = 0; n < 10; ++n) {
    const bool solvable = n != 3 && n != 7;
    for (std::size_t m = 0; m < 2; ++m) {
      for (std::size_t k = 0; k < 2; ++k) {
        auto c = make_candidate(m, k, solvable && k == 1, solvable);
        c.index.n = n;
        cands.push_back(c);
      }
    }
  }
  const auto build = build_dcot(corpus, cands, 2, 2, ScoreWeights{});
  EXPECT_EQ(build.selections.size(), 8U);
  ASSERT_EQ(build.report.size(), 2U);
  EXPECT_EQ(build.report[0].instance_id, "i3");
  EXPECT_EQ(build.report[1].instance_id, "i7");
  for (const auto& e : build.report) {
    EXPECT_EQ(e.status, ExclusionEntry::Status::kExcluded);
    EXPECT_FALSE(e.reason.empty());
    EXPECT_EQ(e.per_agent_A, (std::vector<int>{0, 0}));
  }
  for (const auto& s : build.selections) EXPECT_EQ(s.chosen_k, 1U);
}

TEST(BuildDcot, EmptyCorpusGivesEmptyOutputs) {
  const auto build = build_dcot({}, {}, 3, 6, ScoreWeights{});
  EXPECT_TRUE(build.selections.empty());
  EXPECT_TRUE(build.report.empty());
}

TEST(BuildDcot, FallbackIsReported) {
  std::vector<Instance> corpus = cotforge::testing::small_corpus(1);
  std::vector<Candidate> cands{make_candidate(0, 0, false, true), make_candidate(1, 0, true, false)};
  const auto build = build_dcot(corpus, cands, 2, 1, ScoreWeights{});
  ASSERT_EQ(build.selections.size(), 1U);
  EXPECT_EQ(build.selections[0].chosen_m, 1U);
  EXPECT_TRUE(build.selections[0].fallback_used);
  ASSERT_EQ(build.report.size(), 1U);
  EXPECT_EQ(build.report[0].status, ExclusionEntry::Status::kFallbackUsed);
}
