#include <functional>
#include <set>

#include <gtest/gtest.h>

#include "cotforge/config.hpp"
#include "support.hpp"

using namespace cotforge;
using cotforge::testing::TempDir;
using cotforge::testing::spit;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kInvalidArgument;
}

}  // namespace

TEST(Config, UnconfiguredRunUsesDefaults) {
  const RunConfig c = parse_config("", ".");
  EXPECT_EQ(c.k, 6U);
  EXPECT_EQ(c.weights.lambda_k, 1.0);
  EXPECT_EQ(c.weights.lambda_alpha, 2.0);
  EXPECT_EQ(c.weights.lambda_beta, 1.0);
  EXPECT_EQ(c.weights.lambda_gamma, 1.0);
  EXPECT_EQ(c.eta, 0.2);
  EXPECT_EQ(c.trigger_lexicon, (std::vector<std::string>{"wait"}));
  EXPECT_EQ(c.answer_delimiter, "Answer:");
  EXPECT_EQ(c.retry.max_attempts, 3);
  EXPECT_TRUE(c.resume);
  EXPECT_EQ(c.judge.temperature, 0.0);
  EXPECT_EQ(c.player.temperature, 0.0);
  EXPECT_EQ(c.extractor.temperature, 0.0);
}

TEST(Config, MockModeSuppliesThreeAgentsAtTemperatureOne) {
  const RunConfig c = parse_config("mock = true", ".");
  const auto agents = c.effective_agents();
  ASSERT_EQ(agents.size(), 3U);
  EXPECT_EQ(agents[0].id, "mock-agent-0");
  EXPECT_EQ(agents[2].temperature, 1.0);
}

TEST(Config, ParsesEveryField) {
  const RunConfig c = parse_config(R"(
corpus = "data/c.jsonl"
run_dir = "out"
k = 4
base_seed = 99
eta = 0.5
eta_sweep = [0.2, 0.4]
concurrency = 3
trigger_lexicon = ["wait", "hmm"]
answer_delimiter = "Final:"
audit = false

[weights]
lambda_k = 0.5
lambda_alpha = 3
lambda_beta = 0
lambda_gamma = 2.5

[retry]
max_attempts = 5
base_backoff_ms = 10
backoff_multiplier = 1.5
retryable_statuses = [503]

[[agents]]
id = "a"
url = "http://h/v1/chat/completions"
model = "ma"
api_key_env = "KEY_A"
max_in_flight = 2
temperature = 0.7

[[agents]]
url = "http://h2/v1/chat/completions"

[judge]
url = "http://j/v1/chat/completions"
[player]
url = "http://p/v1/chat/completions"
template_without_cot = "p0.txt"
[extractor]
url = "http://e/v1/chat/completions"
max_output_tokens = 77
)",
                                    "/base");
  EXPECT_EQ(c.resolve(c.corpus_path), "/base/data/c.jsonl");
  EXPECT_EQ(c.resolve(c.run_dir), "/base/out");
  EXPECT_EQ(c.k, 4U);
  EXPECT_EQ(c.base_seed, 99U);
  EXPECT_EQ(c.eta, 0.5);
  EXPECT_EQ(c.eta_sweep, (std::vector<double>{0.2, 0.4}));
  EXPECT_EQ(c.concurrency, 3U);
  EXPECT_EQ(c.trigger_lexicon, (std::vector<std::string>{"wait", "hmm"}));
  EXPECT_EQ(c.answer_delimiter, "Final:");
  EXPECT_FALSE(c.audit);
  EXPECT_EQ(c.weights, (ScoreWeights{0.5, 3, 0, 2.5}));
  EXPECT_EQ(c.retry.max_attempts, 5);
  EXPECT_EQ(c.retry.base_backoff.count(), 10);
  EXPECT_EQ(c.retry.backoff_multiplier, 1.5);
  EXPECT_EQ(c.retry.retryable_statuses, (std::set<int>{503}));
  ASSERT_EQ(c.agents.size(), 2U);
  EXPECT_EQ(c.agents[0].id, "a");
  EXPECT_EQ(c.agents[0].http.model, "ma");
  EXPECT_EQ(c.agents[0].http.api_key_env, "KEY_A");
  EXPECT_EQ(c.agents[0].http.max_in_flight, 2);
  EXPECT_EQ(c.agents[0].temperature, 0.7);
  EXPECT_EQ(c.agents[1].id, "agent-1");
  EXPECT_EQ(c.agents[1].temperature, 1.0);
  EXPECT_EQ(c.player_without_cot_template, "p0.txt");
  EXPECT_EQ(c.extractor.max_output_units, 77);
  EXPECT_NO_THROW(validate(c, false));
}

TEST(Config, SyntaxAndTypeErrorsAreConfigInvalid) {
  EXPECT_EQ(code_of([] { parse_config("k = ", "."); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(code_of([] { parse_config("k = \"six\"", "."); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(code_of([] { parse_config("k = -1", "."); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(code_of([] { parse_config("weights = 3", "."); }), ErrorCode::kConfigInvalid);
}

TEST(Config, ValidationEnforcesInvariants) {
  auto ok = parse_config("mock = true", ".");
  EXPECT_NO_THROW(validate(ok, false));
  for (const char* bad : {"mock = true\nk = 0", "mock = true\neta = 0.0", "mock = true\neta = 1.5",
                          "mock = true\nmock_agents = 0", "mock = true\neta_sweep = [0.2, 2.0]",
                          "mock = true\n[weights]\nlambda_beta = -1",
                          "[[agents]]\nid = \"a\"\nurl = \"http://x/\"",  // no judge/player urls
                          "mock = true\n[[agents]]\nid = \"a\"\n[[agents]]\nid = \"a\""}) {
    const auto c = parse_config(bad, ".");
    EXPECT_EQ(code_of([&] { validate(c, false); }), ErrorCode::kConfigInvalid) << bad;
  }
}

TEST(Config, PathChecksRequireExistingCorpusAndTemplates) {
  TempDir dir;
  auto c = parse_config("mock = true\ncorpus = \"missing.jsonl\"", dir.path());
  EXPECT_EQ(code_of([&] { validate(c, true); }), ErrorCode::kConfigInvalid);
  spit(dir / "c.jsonl", "");
  c.corpus_path = "c.jsonl";
  EXPECT_NO_THROW(validate(c, true));
  c.judge.template_path = "nope.txt";
  EXPECT_EQ(code_of([&] { validate(c, true); }), ErrorCode::kConfigInvalid);
}

TEST(Config, LoadResolvesAgainstConfigDirectory) {
  TempDir dir;
  std::filesystem::create_directories(dir / "cfg");
  spit(dir / "cfg/run.toml", "corpus = \"../c.jsonl\"\nmock = true\n");
  const auto c = load_config(dir / "cfg/run.toml");
  EXPECT_EQ(std::filesystem::weakly_canonical(c.resolve(c.corpus_path)),
            std::filesystem::weakly_canonical(dir / "c.jsonl"));
  EXPECT_EQ(code_of([&] { load_config(dir / "absent.toml"); }), ErrorCode::kConfigInvalid);
}

TEST(Config, CommandLineOverridesFilePerField) {
  const RunConfig file = parse_config(R"(
run_dir = "from-file"
eta = 0.5
eta_sweep = [0.3]
concurrency = 2
[weights]
lambda_alpha = 5
)",
                                      ".");
  {
    RunConfig c = file;
    apply_overrides(c, {});
    EXPECT_EQ(c.run_dir, "from-file");
    EXPECT_EQ(c.eta, 0.5);
    EXPECT_EQ(c.eta_sweep, (std::vector<double>{0.3}));
    EXPECT_EQ(c.concurrency, 2U);
    EXPECT_EQ(c.weights.lambda_alpha, 5.0);
    EXPECT_EQ(c.weights.lambda_k, 1.0);  // default where the file is silent
    EXPECT_TRUE(c.resume);
    EXPECT_FALSE(c.mock);
  }
  ConfigOverrides o;
  o.run_dir = "flag-dir";
  o.eta = 0.1;
  o.eta_sweep = std::vector<double>{0.6, 0.7};
  o.weights = parse_weights("1,2,3,4");
  o.concurrency = 16;
  o.resume = false;
  o.mock = true;
  RunConfig c = file;
  apply_overrides(c, o);
  EXPECT_EQ(c.run_dir, "flag-dir");
  EXPECT_EQ(c.eta, 0.1);
  EXPECT_EQ(c.eta_sweep, (std::vector<double>{0.6, 0.7}));
  EXPECT_EQ(c.weights, (ScoreWeights{1, 2, 3, 4}));
  EXPECT_EQ(c.concurrency, 16U);
  EXPECT_FALSE(c.resume);
  EXPECT_TRUE(c.mock);
}

TEST(Config, FlagParsers) {
  EXPECT_EQ(parse_eta_list("0.2, 0.4,0.6"), (std::vector<double>{0.2, 0.4, 0.6}));
  EXPECT_EQ(code_of([] { parse_eta_list("0.2,,0.4"); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(code_of([] { parse_weights("1,2,3"); }), ErrorCode::kConfigInvalid);
  EXPECT_EQ(code_of([] { parse_weights("1,-2,3,4"); }), ErrorCode::kConfigInvalid);
}

TEST(Config, PromptTemplatesLoadFromFiles) {
  TempDir dir;
  spit(dir / "judge.txt", "G={gold} P={predicted}");
  auto c = parse_config("[judge]\ntemplate = \"judge.txt\"", dir.path());
  const auto prompts = load_prompts(c);
  EXPECT_EQ(prompts.judge.render({{"gold", "1"}, {"predicted", "2"}}), "G=1 P=2");
  EXPECT_EQ(prompts.player_with_cot.text, default_templates::player_with_cot().text);
}
