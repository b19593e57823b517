#include "cotforge/simulated.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "cotforge/judging.hpp"

namespace cotforge {

std::uint64_t stable_hash(std::string_view text, std::uint64_t salt) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL ^ (salt * 0x9E3779B97F4A7C15ULL);
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  // Final avalanche so nearby salts land far apart.
  h ^= h >> 33;
  h *= 0xFF51AFD7ED558CCDULL;
  h ^= h >> 33;
  return h;
}

double unit_interval(std::uint64_t h) noexcept {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct SimulatedWorld::Data {
  std::vector<Instance> corpus;
  std::unordered_map<std::string, std::size_t> by_query;
  SimulatedWorldOptions options;

  const Instance* find(std::string_view prompt) const {
    std::size_t pos = 0;
    while (true) {
      const auto brk = prompt.find("\n\n", pos);
      const auto prefix = prompt.substr(0, brk);
      if (auto it = by_query.find(std::string(prefix)); it != by_query.end()) {
        return &corpus[it->second];
      }
      if (brk == std::string_view::npos) return nullptr;
      pos = brk + 2;
    }
  }

  double difficulty(const Instance& inst) const {
    return unit_interval(stable_hash(inst.id, options.world_seed ^ 0xD1FFULL));
  }

  double skill(std::size_t m) const {
    const auto& s = options.agent_skill;
    if (s.empty()) return 0.5;
    return s[std::min(m, s.size() - 1)];
  }
};

namespace {

// Independent uniforms for one call, indexed by `lane`.
struct Dice {
  std::uint64_t base;
  double operator()(std::uint64_t lane) const {
    return unit_interval(stable_hash(std::to_string(lane), base));
  }
};

Dice dice_for(const MockCall& call, std::uint64_t salt) {
  return {stable_hash(call.request.joined_text(), call.request.seed ^ salt)};
}

std::string wrong_answer(const std::string& gold, std::uint64_t pick) {
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(gold.data(), gold.data() + gold.size(), value);
  if (ec == std::errc{} && ptr == gold.data() + gold.size()) {
    return std::to_string(value + 1 + static_cast<long long>(pick % 5));
  }
  return gold + " or something else";
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_filler(std::string_view line) {
  const auto l = lower(line);
  return l.find("wait") != std::string::npos || l.find("double-check") != std::string::npos;
}

std::string after_last(std::string_view text, std::string_view delim) {
  const auto at = text.rfind(delim);
  if (at == std::string_view::npos) return {};
  auto rest = text.substr(at + delim.size());
  while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.front()))) rest.remove_prefix(1);
  const auto nl = rest.find('\n');
  rest = rest.substr(0, nl);
  while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.back()))) rest.remove_suffix(1);
  return std::string(rest);
}

MockReply with_tokens(std::string answer, const std::vector<double>& probs) {
  MockReply r = MockReply::ok(answer);
  std::vector<std::string> tokens;
  std::istringstream words(answer);
  std::string w;
  bool first = true;
  while (words >> w) {
    tokens.push_back(first ? w : " " + w);
    first = false;
  }
  if (tokens.empty()) tokens.push_back(answer);
  std::vector<double> lps;
  for (std::size_t i = 0; i < tokens.size(); ++i) lps.push_back(std::log(probs[i % probs.size()]));
  // Keep the reassembled text identical to the reply.
  std::string joined;
  for (const auto& t : tokens) joined += t;
  r.text = joined;
  r.tokens = std::move(tokens);
  r.logprobs = std::move(lps);
  return r;
}

}  // namespace

SimulatedWorld::SimulatedWorld(std::vector<Instance> corpus, SimulatedWorldOptions options) {
  auto data = std::make_shared<Data>();
  data->corpus = std::move(corpus);
  data->options = std::move(options);
  for (std::size_t i = 0; i < data->corpus.size(); ++i) data->by_query[data->corpus[i].query] = i;
  data_ = std::move(data);
}

const Instance* SimulatedWorld::find_instance(std::string_view prompt) const {
  return data_->find(prompt);
}

double SimulatedWorld::difficulty(const Instance& inst) const { return data_->difficulty(inst); }

MockScript SimulatedWorld::agent_script(std::size_t m) const {
  return [data = data_, m](const MockCall& call) -> MockReply {
    const Dice dice = dice_for(call, 0xA6E47ULL + m);
    if (call.attempt == 1 && dice(0) < data->options.transient_failure_rate) {
      return MockReply::transient_failure();
    }
    const std::string prompt = call.request.joined_text();
    const Instance* inst = data->find(prompt);
    if (inst == nullptr) return MockReply::ok("I cannot find the problem statement.");

    const double d = data->difficulty(*inst);
    const bool correct = dice(1) < data->skill(m) * (1.0 - 0.6 * d);
    const auto steps = 2 + static_cast<int>(dice(2) * 4.0);
    const auto fillers = static_cast<int>(dice(3) * 3.0);

    std::ostringstream cot;
    cot << "<think>\nLet me restate the problem: " << inst->query << "\n";
    for (int s = 1; s <= steps; ++s) {
      cot << "Step " << s << ": work through part " << s << " of the calculation carefully.\n";
      if (s <= fillers) cot << "Wait, let me double-check that step before moving on.\n";
    }
    if (dice(4) < 0.03) {
      return MockReply::ok(cot.str() + "</think>\nI am not sure how to finish.");
    }
    const std::string answer =
        correct ? inst->gold_answer
                : wrong_answer(inst->gold_answer, static_cast<std::uint64_t>(dice(5) * 1e6));
    cot << "So the result is " << answer << "\n</think>\n";
    return MockReply::ok(cot.str() + "Answer: " + answer);
  };
}

MockScript SimulatedWorld::player_script() const {
  return [data = data_](const MockCall& call) -> MockReply {
    const Dice dice = dice_for(call, 0x91A7E2ULL);
    if (call.attempt == 1 && dice(0) < data->options.transient_failure_rate) {
      return MockReply::transient_failure();
    }
    const std::string prompt = call.request.joined_text();
    const Instance* inst = data->find(prompt);
    if (inst == nullptr) return with_tokens("unknown", {0.3});

    const double d = data->difficulty(*inst);
    const double self_skill = 0.55 * (1.0 - d);
    const auto ref = prompt.find("Reference reasoning:\n");
    if (ref == std::string::npos) {
      const bool right = dice(1) < self_skill;
      const std::string ans = right ? inst->gold_answer
                                    : wrong_answer(inst->gold_answer,
                                                   static_cast<std::uint64_t>(dice(2) * 1e6));
      return with_tokens(ans, {0.35 + 0.5 * dice(3), 0.4 + 0.5 * dice(4)});
    }

    const auto end = prompt.find("\n\nUsing the reference reasoning", ref);
    const std::string_view cot =
        std::string_view(prompt).substr(ref, end == std::string::npos ? std::string::npos : end - ref);
    const std::string cot_answer = after_last(cot, "the result is");
    std::size_t lines = 0, noisy = 0;
    std::istringstream in{std::string(cot)};
    for (std::string line; std::getline(in, line);) {
      ++lines;
      noisy += is_filler(line) ? 1 : 0;
    }
    const double quality = lines == 0 ? 0.0 : 1.0 - static_cast<double>(noisy) / static_cast<double>(lines);
    const double follow = 0.6 + 0.35 * quality;

    std::string ans;
    double p = 0.0;
    if (!cot_answer.empty() && dice(1) < follow) {
      ans = cot_answer;
      p = 0.6 + 0.39 * quality * dice(2);
    } else {
      const bool right = dice(3) < self_skill;
      ans = right ? inst->gold_answer
                  : wrong_answer(inst->gold_answer, static_cast<std::uint64_t>(dice(4) * 1e6));
      p = 0.3 + 0.4 * dice(5);
    }
    return with_tokens(ans, {p, std::min(0.999, p + 0.05)});
  };
}

MockScript SimulatedWorld::judge_script() const {
  return [](const MockCall& call) -> MockReply {
    const std::string prompt = call.request.joined_text();
    const std::string gold = after_last(prompt, "Gold answer:");
    const std::string predicted = after_last(prompt, "Predicted answer:");
    if (gold.empty()) return MockReply::ok("I need a gold answer to compare against.");
    const std::string g = normalize_answer(gold);
    std::istringstream words(normalize_answer(predicted));
    bool found = false;
    for (std::string w; words >> w;) {
      while (!w.empty() && std::ispunct(static_cast<unsigned char>(w.back()))) w.pop_back();
      found = found || w == g;
    }
    return MockReply::ok(found ? "CONSISTENT\nThe prediction states the gold answer."
                               : "INCONSISTENT\nThe prediction does not state the gold answer.");
  };
}

MockScript SimulatedWorld::extractor_script() const {
  return [](const MockCall& call) -> MockReply {
    const std::string prompt = call.request.joined_text();
    const auto at = prompt.find("Reasoning:\n");
    const std::string cot = at == std::string::npos ? prompt : prompt.substr(at + 11);
    std::istringstream in(cot);
    std::string kept;
    for (std::string line; std::getline(in, line);) {
      if (is_filler(line) || line.find("<think>") != std::string::npos ||
          line.find("</think>") != std::string::npos) {
        continue;
      }
      if (!kept.empty()) kept += '\n';
      kept += line;
    }
    return MockReply::ok(kept);
  };
}

void SimulatedWorld::register_all(Gateway& gateway, const std::vector<std::string>& agent_ids,
                                  const std::string& judge_id, const std::string& player_id,
                                  const std::string& extractor_id, int max_in_flight) const {
  MockOptions opts;
  opts.latency = data_->options.latency;
  for (std::size_t m = 0; m < agent_ids.size(); ++m) {
    gateway.register_mock(agent_ids[m], agent_script(m), opts, max_in_flight);
  }
  gateway.register_mock(judge_id, judge_script(), opts, max_in_flight);
  gateway.register_mock(player_id, player_script(), opts, max_in_flight);
  gateway.register_mock(extractor_id, extractor_script(), opts, max_in_flight);
}

std::vector<Instance> make_synthetic_corpus(std::size_t count, std::uint64_t seed) {
  std::vector<Instance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "q%04zu", i);
    const auto h = stable_hash(id, seed);
    const auto a = static_cast<long long>(h % 90 + 10);
    const auto b = static_cast<long long>((h >> 16) % 90 + 10);
    const bool product = ((h >> 32) & 1U) != 0;
    Instance inst;
    inst.id = id;
    inst.query = "Problem " + inst.id + ": the figure shows two labelled bars, " +
                 std::to_string(a) + " and " + std::to_string(b) + ". What is their " +
                 (product ? "product" : "sum") + "?";
    inst.image_ref = "images/" + inst.id + ".png";
    inst.gold_answer = std::to_string(product ? a * b : a + b);
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace cotforge
