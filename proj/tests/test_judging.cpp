#include <gtest/gtest.h>

#include "cotforge/judging.hpp"

using namespace cotforge;

namespace {

struct ScriptedJudge {
  Gateway gateway;
  MockBackend* mock = nullptr;
  LlmJudgeConfig config;

  explicit ScriptedJudge(MockScript script) {
    mock = &gateway.register_mock("judge", std::move(script));
    config.gateway = &gateway;
    config.endpoint = "judge";
    config.policy.base_backoff = std::chrono::milliseconds(1);
  }
};

}  // namespace

TEST(NormalizeAnswer, TrimsFoldsCollapsesAndStripsTerminalPunctuation) {
  EXPECT_EQ(normalize_answer("  The   ANSWER is B.  "), "the answer is b");
  EXPECT_EQ(normalize_answer("42!?"), "42");
  EXPECT_EQ(normalize_answer("\tx\ny"), "x y");
  EXPECT_EQ(normalize_answer(""), "");
}

TEST(ExactNormalized, NumericCanonicalization) {
  EXPECT_TRUE(exact_normalized("7.0", "7"));
  EXPECT_TRUE(exact_normalized("0.50", "0.5"));
  EXPECT_TRUE(exact_normalized("+3", "3"));
  EXPECT_FALSE(exact_normalized("50%", "0.5"));
  EXPECT_FALSE(exact_normalized("1/2", "0.5"));
  EXPECT_FALSE(exact_normalized("7.0001", "7"));
}

TEST(ExactNormalized, IsSymmetric) {
  const std::vector<std::string> values{"7", "7.0", "B", "b.", " 0.5 ", "50%", "1e3", "1000", ""};
  for (const auto& a : values) {
    for (const auto& b : values) EXPECT_EQ(exact_normalized(a, b), exact_normalized(b, a)) << a << "|" << b;
  }
}

TEST(Judge, FastPathNeedsNoEndpoint) {
  const auto v = judge("7.0", "7", LlmJudgeConfig{});
  EXPECT_TRUE(v.consistent);
  EXPECT_EQ(v.method, JudgeVerdict::Method::kExactNormalized);
  EXPECT_FALSE(v.rationale_text.has_value());
}

TEST(Judge, EmptyPredictionIsInconsistentWithoutACall) {
  ScriptedJudge j([](const MockCall&) { return MockReply::ok("CONSISTENT"); });
  const auto v = judge("", "7", j.config);
  EXPECT_FALSE(v.consistent);
  EXPECT_EQ(j.mock->calls(), 0U);
}

TEST(Judge, EmptyGoldIsRejected) {
  try {
    judge("7", "  ", LlmJudgeConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(Judge, LlmFallbackDecidesSemanticMatches) {
  ScriptedJudge j([](const MockCall& call) {
    const auto prompt = call.request.joined_text();
    EXPECT_NE(prompt.find("Gold answer: B"), std::string::npos);
    EXPECT_NE(prompt.find("Predicted answer: the answer is B"), std::string::npos);
    return MockReply::ok("CONSISTENT\nThe prediction names option B.");
  });
  const auto v = judge("the answer is B", "B", j.config);
  EXPECT_TRUE(v.consistent);
  EXPECT_EQ(v.method, JudgeVerdict::Method::kLlm);
  EXPECT_EQ(v.rationale_text, "The prediction names option B.");
  EXPECT_EQ(v.flag, JudgeVerdict::Flag::kNone);
  EXPECT_EQ(j.mock->seen_seeds().size(), 1U);
}

TEST(Judge, UnparsableReplyIsInconsistentAndFlagged) {
  ScriptedJudge j([](const MockCall&) { return MockReply::ok("Probably yes?"); });
  const auto v = judge("maybe B", "B", j.config);
  EXPECT_FALSE(v.consistent);
  EXPECT_EQ(v.flag, JudgeVerdict::Flag::kMalformed);
}

TEST(Judge, UnavailableJudgeScoresZeroWithFlag) {
  ScriptedJudge j([](const MockCall&) { return MockReply::transient_failure(); });
  const auto v = judge("maybe B", "B", j.config);
  EXPECT_FALSE(v.consistent);
  EXPECT_EQ(v.flag, JudgeVerdict::Flag::kUnavailable);
  EXPECT_EQ(j.mock->calls(), 3U);
}

TEST(Judge, IdempotentAgainstDeterministicJudge) {
  ScriptedJudge j([](const MockCall& call) {
    return MockReply::ok(call.request.joined_text().size() % 2 ? "CONSISTENT" : "INCONSISTENT");
  });
  for (const auto* p : {"x", "yy", "a longer answer"}) {
    EXPECT_EQ(judge(p, "B", j.config).consistent, judge(p, "B", j.config).consistent);
  }
}

TEST(ParseJudgeReply, AcceptsCaseAndPunctuationVariants) {
  EXPECT_TRUE(parse_judge_reply("consistent.").consistent);
  EXPECT_TRUE(parse_judge_reply("\n\n  CONSISTENT  \nok").consistent);
  const auto no = parse_judge_reply("INCONSISTENT\nwrong number");
  EXPECT_FALSE(no.consistent);
  EXPECT_EQ(no.flag, JudgeVerdict::Flag::kNone);
  EXPECT_EQ(parse_judge_reply("").flag, JudgeVerdict::Flag::kMalformed);
}

TEST(JudgeToUnit, SumsToCorrectCount) {
  std::vector<JudgeVerdict> verdicts(6);
  for (std::size_t i = 0; i < 3; ++i) verdicts[i].consistent = true;
  int total = 0;
  for (const auto& v : verdicts) total += judge_to_unit(v);
  EXPECT_EQ(total, 3);
}
