#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "cotforge/pipeline.hpp"
#include "support.hpp"

using namespace cotforge;
using namespace cotforge::testing;
namespace fs = std::filesystem;

namespace {

struct Harness {
  TempDir dir;
  PipelineContext ctx;
  std::unique_ptr<Gateway> gateway;
  RunControl control;

  explicit Harness(std::size_t n, std::size_t agents = 3, std::size_t k = 6) {
    ctx.config = mock_run_config(dir.path(), n, agents, k);
    ctx.config.concurrency = 4;
    gateway = make_gateway(ctx.config);
    ctx.gateway = gateway.get();
    ctx.control = &control;
  }

  std::vector<Json> records(const char* name, std::string_view kind) const {
    return read_records(ctx.path(name), kind).records;
  }
};

std::vector<std::string> ids_of(const std::vector<Json>& records) {
  std::vector<std::string> out;
  for (const auto& r : records) out.push_back(r.at("id").get<std::string>());
  return out;
}

}  // namespace

TEST(Pipeline, EndToEndProducesEveryArtifact) {
  Harness h(10, 2, 3);
  run_all(h.ctx);
  for (const char* f : {run_files::kCandidates, run_files::kScored, run_files::kBaseline,
                        run_files::kDcot, run_files::kExclusions, run_files::kScores,
                        run_files::kDcotPrime, run_files::kStatsDcot, run_files::kAudit}) {
    EXPECT_TRUE(fs::exists(h.ctx.path(f))) << f;
  }
  EXPECT_EQ(h.records(run_files::kCandidates, schema::kRawCandidate).size(), 10U * 2 * 3);
  EXPECT_EQ(h.records(run_files::kScored, schema::kCandidate).size(), 10U * 2 * 3);

  const auto dcot = h.records(run_files::kDcot, schema::kDcot);
  const auto excl = h.records(run_files::kExclusions, schema::kExclusion);
  std::size_t excluded = 0;
  for (const auto& e : excl) excluded += e.at("status") == "excluded" ? 1 : 0;
  EXPECT_EQ(dcot.size() + excluded, 10U);
  // Baseline runs cover M x K slots for each D_cot instance.
  EXPECT_EQ(h.records(run_files::kBaseline, schema::kBaselineRun).size(), dcot.size() * 2 * 3);
  EXPECT_EQ(h.records(run_files::kScores, schema::kBatchScore).size(), dcot.size());
  EXPECT_EQ(h.records(run_files::kDcotPrime, schema::kDcotPrime).size(), cut_size(0.2, dcot.size()));
}

TEST(Pipeline, FinishedRunReRunsToIdenticalBytes) {
  Harness h(8, 2, 2);
  run_all(h.ctx);
  std::map<std::string, std::string> before;
  for (const auto& e : fs::directory_iterator(h.ctx.config.resolve(h.ctx.config.run_dir))) {
    if (e.path().filename() != run_files::kAudit) before[e.path().filename()] = slurp(e.path());
  }
  run_all(h.ctx);
  for (const auto& [name, bytes] : before) EXPECT_EQ(slurp(h.ctx.path(name.c_str())), bytes) << name;
}

TEST(Pipeline, CutSizesFollowEta) {
  Harness h(10, 3, 6);
  run_all(h.ctx);
  const auto dcot = ids_of(h.records(run_files::kDcot, schema::kDcot));
  ASSERT_EQ(dcot.size(), 10U) << "mock corpus expected to be fully selectable";
  EXPECT_EQ(h.records(run_files::kDcotPrime, schema::kDcotPrime).size(), 2U);

  h.ctx.config.eta = 1.0;
  run_select_batch(h.ctx);
  auto all = ids_of(h.records(run_files::kDcotPrime, schema::kDcotPrime));
  EXPECT_EQ(all, dcot);  // D_cot order preserved
}

TEST(Pipeline, SweepWritesOneFilePerEta) {
  Harness h(10, 2, 2);
  h.ctx.config.eta_sweep = {0.4, 0.6, 0.2};
  run_all(h.ctx);
  const auto n = h.records(run_files::kDcot, schema::kDcot).size();
  for (double eta : {0.4, 0.6}) {
    const auto file = sweep_file_name(eta);
    EXPECT_EQ(read_records(h.ctx.path(file.c_str()), schema::kDcotPrime).records.size(),
              cut_size(eta, n));
  }
  EXPECT_EQ(sweep_file_name(0.4), "dcot_prime_eta0.4.jsonl");
  EXPECT_FALSE(fs::exists(h.ctx.path(sweep_file_name(0.2).c_str())));
}

TEST(Pipeline, DcotPrimeIsASupersetOfDcotRows) {
  Harness h(10, 2, 3);
  h.ctx.config.eta = 0.5;
  run_all(h.ctx);
  std::map<std::string, Json> dcot;
  for (const auto& r : h.records(run_files::kDcot, schema::kDcot)) dcot[r.at("id")] = r;
  for (const auto& p : h.records(run_files::kDcotPrime, schema::kDcotPrime)) {
    const Json& base = dcot.at(p.at("id").get<std::string>());
    Json restricted;
    for (const auto& [key, value] : base.items()) restricted[key] = p.at(key);
    EXPECT_EQ(restricted, base);
    for (const char* key : {"delta_alpha", "delta_beta", "delta_gamma", "s"}) {
      EXPECT_TRUE(p.contains(key)) << key;
    }
  }
}

TEST(Pipeline, SelectInstanceRequiresACompleteGrid) {
  Harness h(4, 2, 2);
  EXPECT_THROW(
      {
        try {
          run_select_instance(h.ctx);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::kIncompleteGrid);
          throw;
        }
      },
      Error);

  run_synth(h.ctx);
  // Drop the last record to leave one slot of the grid uncovered.
  auto recs = h.records(run_files::kCandidates, schema::kRawCandidate);
  recs.pop_back();
  write_records_atomic(h.ctx.path(run_files::kCandidates), schema::kRawCandidate, recs);
  try {
    run_select_instance(h.ctx);
    FAIL() << "expected kIncompleteGrid";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIncompleteGrid);
  }
}

TEST(Pipeline, WeightOverrideChangesRanking) {
  Harness h(30, 3, 4);
  h.ctx.config.eta = 0.3;
  run_all(h.ctx);
  const auto default_cut = ids_of(h.records(run_files::kDcotPrime, schema::kDcotPrime));

  ConfigOverrides o;
  o.weights = ScoreWeights{1.0, 0.0, 1.0, 0.0};  // rank by confidence gain only
  apply_overrides(h.ctx.config, o);
  const auto summary = run_select_batch(h.ctx);
  const auto beta_cut = ids_of(h.records(run_files::kDcotPrime, schema::kDcotPrime));

  // Independent oracle: top ids by delta_beta, ties by id.
  auto scores = summary.scores;
  std::sort(scores.begin(), scores.end(), [](const BatchScore& a, const BatchScore& b) {
    if (a.delta_beta != b.delta_beta) return a.delta_beta > b.delta_beta;
    if (a.delta_gamma != b.delta_gamma) return a.delta_gamma > b.delta_gamma;
    if (a.delta_alpha != b.delta_alpha) return a.delta_alpha > b.delta_alpha;
    return a.instance_id < b.instance_id;
  });
  std::set<std::string> expected;
  for (std::size_t i = 0; i < cut_size(0.3, scores.size()); ++i) expected.insert(scores[i].instance_id);
  EXPECT_EQ(std::set<std::string>(beta_cut.begin(), beta_cut.end()), expected);
  EXPECT_NE(beta_cut, default_cut);
}

TEST(Pipeline, BuildDcotPrimeValidatesIds) {
  DcotRecord a;
  a.id = "a";
  DcotRecord b;
  b.id = "b";
  BatchScore sa;
  sa.instance_id = "a";
  BatchScore sb;
  sb.instance_id = "b";
  sb.s = 3.0;

  SelectionCut cut{0.5, 1, {"b", "a"}, {"b"}};
  const auto prime = build_dcot_prime({a, b}, cut, {sa, sb});
  ASSERT_EQ(prime.size(), 1U);
  EXPECT_EQ(prime[0].base.id, "b");
  EXPECT_EQ(prime[0].score.s, 3.0);

  EXPECT_TRUE(build_dcot_prime({a, b}, SelectionCut{0.1, 0, {"a", "b"}, {}}, {sa, sb}).empty());

  SelectionCut unknown{0.5, 1, {"z"}, {"z"}};
  try {
    build_dcot_prime({a, b}, unknown, {sa, sb});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownId);
  }
  try {
    build_dcot_prime({a, b}, cut, {sa});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownId);
  }
}

TEST(Pipeline, InterruptedRunResumesToSameOutputs) {
  Harness clean(12, 2, 3);
  run_all(clean.ctx);

  Harness h(12, 2, 3);
  for (int attempt = 0; attempt < 20; ++attempt) {
    RunControl budget(25);
    PipelineContext ctx = h.ctx;
    ctx.control = &budget;
    try {
      run_all(ctx);
      break;
    } catch (const Error& e) {
      ASSERT_EQ(e.code(), ErrorCode::kInterrupted);
    }
  }
  for (const char* f : {run_files::kCandidates, run_files::kScored, run_files::kBaseline,
                        run_files::kDcot, run_files::kDcotPrime, run_files::kStatsDcot}) {
    EXPECT_EQ(slurp(h.ctx.path(f)), slurp(clean.ctx.path(f))) << f;
  }
}
