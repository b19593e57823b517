#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cotforge/config.hpp"
#include "cotforge/dataset_io.hpp"
#include "cotforge/error.hpp"
#include "cotforge/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cotforge;

namespace {

// Exit codes, also listed in README.md.
constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitEndpoint = 3;
constexpr int kExitIncomplete = 4;
constexpr int kExitData = 5;
constexpr int kExitInterrupted = 6;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigInvalid:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kDuplicateId:
      return kExitConfig;
    case ErrorCode::kFatalEndpoint:
    case ErrorCode::kPermanentRejection:
    case ErrorCode::kExhaustedRetries:
    case ErrorCode::kMalformedResponse:
      return kExitEndpoint;
    case ErrorCode::kIncompleteGrid:
    case ErrorCode::kMissingRuns:
      return kExitIncomplete;
    case ErrorCode::kSchemaMismatch:
    case ErrorCode::kCorruptLine:
    case ErrorCode::kCorruptCheckpoint:
    case ErrorCode::kEmptyFile:
    case ErrorCode::kEmptyInput:
    case ErrorCode::kUnknownId:
    case ErrorCode::kEmptySequence:
    case ErrorCode::kNonFiniteLogprob:
      return kExitData;
    case ErrorCode::kInterrupted:
      return kExitInterrupted;
  }
  return kExitOther;
}

struct Flags {
  std::string config;
  std::optional<std::string> run_dir;
  std::optional<double> eta;
  std::optional<std::string> eta_sweep;
  std::optional<std::string> weights;
  std::optional<std::size_t> concurrency;
  bool resume = true;
  bool dry_run = false;
  bool mock = false;
  std::string stats_path;
};

RunConfig build_config(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) c = load_config(f.config);
  ConfigOverrides o;
  if (f.run_dir) o.run_dir = fs::absolute(*f.run_dir);
  o.eta = f.eta;
  if (f.eta_sweep) o.eta_sweep = parse_eta_list(*f.eta_sweep);
  if (f.weights) o.weights = parse_weights(*f.weights);
  o.concurrency = f.concurrency;
  o.resume = f.resume;
  if (f.mock) o.mock = true;
  apply_overrides(c, o);
  return c;
}

// Files owned by each stage; removed before the stage when --resume=false.
std::vector<const char*> stage_files(const std::string& stage) {
  if (stage == "synth") return {run_files::kCandidates};
  if (stage == "select-instance") {
    return {run_files::kScored, run_files::kBaseline, run_files::kDcot, run_files::kExclusions};
  }
  if (stage == "select-batch") return {run_files::kScores, run_files::kDcotPrime};
  return {};
}

void clear_stage(const PipelineContext& ctx, const std::string& stage) {
  std::vector<std::string> stages{stage};
  if (stage == "run") stages = {"synth", "select-instance", "select-batch"};
  for (const auto& s : stages) {
    for (const char* name : stage_files(s)) fs::remove(ctx.path(name));
  }
}

int run_stage(const std::string& stage, const Flags& flags) {
  RunConfig config = build_config(flags);
  validate(config, true);

  const auto corpus = read_corpus(config.resolve(config.corpus_path));
  const GridShape shape{corpus.size(), config.agent_count(), config.k};
  if (flags.dry_run) {
    std::cout << "grid " << shape.instances << " x " << shape.agents << " x " << shape.samples
              << " = " << shape.size() << " samples\n";
    return kExitOk;
  }

  RunControl control;
  control.watch(&g_stop);
  PipelineContext ctx;
  ctx.config = config;
  ctx.control = &control;
  if (!config.resume) clear_stage(ctx, stage);
  auto gateway = make_gateway(config);
  ctx.gateway = gateway.get();

  if (stage == "synth") {
    run_synth(ctx);
  } else if (stage == "select-instance") {
    run_select_instance(ctx);
  } else if (stage == "select-batch") {
    run_select_batch(ctx);
  } else {
    run_all(ctx);
  }
  return kExitOk;
}

int run_stats_cmd(const Flags& flags) {
  std::vector<std::string> lexicon{"wait"};
  fs::path path = flags.stats_path;
  if (!flags.config.empty() || path.empty()) {
    const RunConfig config = build_config(flags);
    lexicon = config.trigger_lexicon;
    if (path.empty()) path = config.resolve(config.run_dir) / run_files::kDcot;
  }
  const StatsReport report = stats(path, lexicon);
  std::cout << to_json(report).dump(2) << "\n\n" << format_table(report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("cotforge");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

  CLI::App app{"cotforge: build a refined chain-of-thought dataset from a question-answer corpus"};
  app.require_subcommand(1);
  Flags flags;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "TOML config file");
    sub->add_option("--run-dir", flags.run_dir, "Directory for checkpoints and outputs");
    sub->add_option("--eta", flags.eta, "Selection ratio in (0, 1]");
    sub->add_option("--eta-sweep", flags.eta_sweep, "Extra eta values, comma separated");
    sub->add_option("--weights", flags.weights, "lambda_k,lambda_alpha,lambda_beta,lambda_gamma");
    sub->add_option("--concurrency", flags.concurrency, "Worker threads and per-endpoint cap");
    sub->add_option("--resume", flags.resume, "Resume from checkpoints (default true)")
        ->default_val(true);
    sub->add_flag("--dry-run", flags.dry_run, "Validate config and print the grid size");
    sub->add_flag("--mock", flags.mock, "Route every role to the simulated backends");
  };

  std::string chosen;
  for (const char* name : {"synth", "select-instance", "select-batch", "run"}) {
    auto* sub = app.add_subcommand(name, std::string("Run stage: ") + name);
    add_common(sub);
    sub->callback([&chosen, name] { chosen = name; });
  }
  auto* stats_cmd = app.add_subcommand("stats", "Print statistics for a D_cot or D'_cot file");
  stats_cmd->add_option("path", flags.stats_path, "Record file (default: <run_dir>/dcot.jsonl)");
  stats_cmd->add_option("--config", flags.config, "TOML config file");
  stats_cmd->add_option("--run-dir", flags.run_dir, "Run directory");
  stats_cmd->callback([&chosen] { chosen = "stats"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  std::signal(SIGTERM, on_signal);
  std::signal(SIGINT, on_signal);
  try {
    if (chosen == "stats") return run_stats_cmd(flags);
    return run_stage(chosen, flags);
  } catch (const Error& e) {
    spdlog::error("{}: {}", to_string(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitOther;
  }
}
