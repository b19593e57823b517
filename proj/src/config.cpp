#include "cotforge/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

namespace cotforge {

namespace fs = std::filesystem;

std::vector<EndpointConfig> RunConfig::effective_agents() const {
  if (!agents.empty() || !mock) return agents;
  std::vector<EndpointConfig> out;
  for (std::size_t m = 0; m < mock_agents; ++m) {
    EndpointConfig e;
    e.id = "mock-agent-" + std::to_string(m);
    e.temperature = 1.0;
    e.max_output_units = 4096;
    out.push_back(std::move(e));
  }
  return out;
}

fs::path RunConfig::resolve(const fs::path& p) const {
  if (p.empty() || p.is_absolute()) return p;
  return base_dir / p;
}

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::kConfigInvalid, what); }

template <class T>
std::optional<T> get(const toml::table& tbl, std::string_view key, std::string_view where) {
  const toml::node* node = tbl.get(key);
  if (node == nullptr) return std::nullopt;
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = node->value<double>()) return *v;  // accepts integers too
  } else if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node->as_boolean()) return v->get();
  } else if constexpr (std::is_integral_v<T>) {
    if (auto v = node->as_integer()) {
      if (v->get() < 0 && std::is_unsigned_v<T>) {
        invalid(std::string(where) + std::string(key) + " must be non-negative");
      }
      return static_cast<T>(v->get());
    }
  } else {
    if (auto v = node->as_string()) return T(v->get());
  }
  invalid(std::string(where) + std::string(key) + " has the wrong type");
}

template <class T>
void assign(T& target, const toml::table& tbl, std::string_view key, std::string_view where = "") {
  if (auto v = get<T>(tbl, key, where)) target = *v;
}

template <class T>
std::vector<T> get_array(const toml::table& tbl, std::string_view key, std::string_view where) {
  std::vector<T> out;
  const toml::node* node = tbl.get(key);
  if (node == nullptr) return out;
  const toml::array* arr = node->as_array();
  if (arr == nullptr) invalid(std::string(where) + std::string(key) + " must be an array");
  for (const auto& el : *arr) {
    if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = el.value<std::string>()) {
        out.push_back(*v);
        continue;
      }
    } else {
      if (auto v = el.value<T>()) {
        out.push_back(*v);
        continue;
      }
    }
    invalid(std::string(where) + std::string(key) + " has an element of the wrong type");
  }
  return out;
}

void read_endpoint(const toml::table& tbl, EndpointConfig& e, const std::string& where) {
  assign(e.id, tbl, "id", where);
  assign(e.http.url, tbl, "url", where);
  assign(e.http.model, tbl, "model", where);
  assign(e.http.api_key_env, tbl, "api_key_env", where);
  assign(e.http.max_in_flight, tbl, "max_in_flight", where);
  assign(e.http.timeout_seconds, tbl, "timeout_seconds", where);
  assign(e.http.image_mode, tbl, "image_mode", where);
  assign(e.temperature, tbl, "temperature", where);
  assign(e.max_output_units, tbl, "max_output_tokens", where);
  if (auto t = get<std::string>(tbl, "template", where)) e.template_path = *t;
}

const toml::table* subtable(const toml::table& root, std::string_view key) {
  const toml::node* node = root.get(key);
  if (node == nullptr) return nullptr;
  if (const auto* t = node->as_table()) return t;
  invalid(std::string(key) + " must be a table");
}

}  // namespace

RunConfig parse_config(std::string_view toml_text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config parse error at line " << e.source().begin.line << ": " << e.description();
    invalid(os.str());
  }

  RunConfig c;
  c.base_dir = base_dir;
  if (auto v = get<std::string>(root, "corpus", "")) c.corpus_path = *v;
  if (auto v = get<std::string>(root, "run_dir", "")) c.run_dir = *v;
  assign(c.k, root, "k");
  assign(c.base_seed, root, "base_seed");
  assign(c.eta, root, "eta");
  assign(c.concurrency, root, "concurrency");
  assign(c.answer_delimiter, root, "answer_delimiter");
  assign(c.audit, root, "audit");
  assign(c.mock, root, "mock");
  assign(c.mock_agents, root, "mock_agents");
  if (root.contains("eta_sweep")) c.eta_sweep = get_array<double>(root, "eta_sweep", "");
  if (root.contains("trigger_lexicon")) {
    c.trigger_lexicon = get_array<std::string>(root, "trigger_lexicon", "");
  }

  if (const auto* w = subtable(root, "weights")) {
    assign(c.weights.lambda_k, *w, "lambda_k", "weights.");
    assign(c.weights.lambda_alpha, *w, "lambda_alpha", "weights.");
    assign(c.weights.lambda_beta, *w, "lambda_beta", "weights.");
    assign(c.weights.lambda_gamma, *w, "lambda_gamma", "weights.");
  }
  if (const auto* r = subtable(root, "retry")) {
    assign(c.retry.max_attempts, *r, "max_attempts", "retry.");
    if (auto ms = get<std::int64_t>(*r, "base_backoff_ms", "retry.")) {
      c.retry.base_backoff = std::chrono::milliseconds(*ms);
    }
    assign(c.retry.backoff_multiplier, *r, "backoff_multiplier", "retry.");
    if (r->contains("retryable_statuses")) {
      const auto statuses = get_array<std::int64_t>(*r, "retryable_statuses", "retry.");
      c.retry.retryable_statuses.clear();
      for (auto s : statuses) c.retry.retryable_statuses.insert(static_cast<int>(s));
    }
  }

  if (const toml::node* node = root.get("agents")) {
    const toml::array* arr = node->as_array();
    if (arr == nullptr) invalid("agents must be an array of tables");
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto* t = (*arr)[i].as_table();
      if (t == nullptr) invalid("agents must be an array of tables");
      EndpointConfig e;
      e.temperature = 1.0;
      e.max_output_units = 4096;
      read_endpoint(*t, e, "agents[" + std::to_string(i) + "].");
      if (e.id.empty()) e.id = "agent-" + std::to_string(i);
      c.agents.push_back(std::move(e));
    }
  }
  if (const auto* t = subtable(root, "judge")) read_endpoint(*t, c.judge, "judge.");
  if (const auto* t = subtable(root, "player")) {
    read_endpoint(*t, c.player, "player.");
    if (auto p = get<std::string>(*t, "template_without_cot", "player.")) {
      c.player_without_cot_template = *p;
    }
  }
  if (const auto* t = subtable(root, "extractor")) read_endpoint(*t, c.extractor, "extractor.");
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) invalid("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

void validate(const RunConfig& c, bool check_paths) {
  if (c.k < 1) invalid("k must be >= 1");
  if (!(c.eta > 0.0 && c.eta <= 1.0)) invalid("eta must lie in (0, 1]");
  for (double e : c.eta_sweep) {
    if (!(e > 0.0 && e <= 1.0)) invalid("every eta_sweep value must lie in (0, 1]");
  }
  if (c.agent_count() < 1) invalid("at least one agent is required");
  if (c.concurrency < 1) invalid("concurrency must be >= 1");
  if (c.retry.max_attempts < 1) invalid("retry.max_attempts must be >= 1");
  if (c.retry.backoff_multiplier < 1.0) invalid("retry.backoff_multiplier must be >= 1");
  try {
    validate(c.weights);
  } catch (const Error& e) {
    invalid(e.what());
  }
  std::set<std::string> ids;
  for (const auto& a : c.effective_agents()) {
    if (!ids.insert(a.id).second) invalid("duplicate agent id '" + a.id + "'");
    if (!c.mock && a.http.url.empty()) invalid("agent '" + a.id + "' has no url");
  }
  if (!c.mock) {
    for (const auto* role : {&c.judge, &c.player, &c.extractor}) {
      if (role->http.url.empty()) invalid(role->id + " endpoint has no url");
    }
  }
  if (!check_paths) return;
  if (c.corpus_path.empty()) invalid("corpus path is not set");
  if (!fs::exists(c.resolve(c.corpus_path))) {
    invalid("corpus '" + c.resolve(c.corpus_path).string() + "' does not exist");
  }
  auto check_template = [&](const fs::path& p) {
    if (!p.empty() && !fs::exists(c.resolve(p))) {
      invalid("template '" + c.resolve(p).string() + "' does not exist");
    }
  };
  for (const auto& a : c.agents) check_template(a.template_path);
  check_template(c.judge.template_path);
  check_template(c.player.template_path);
  check_template(c.player_without_cot_template);
  check_template(c.extractor.template_path);
}

std::vector<double> parse_eta_list(std::string_view text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    auto item = text.substr(pos, end - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc{} || ptr != item.data() + item.size()) {
      invalid("cannot parse '" + std::string(item) + "' as a number");
    }
    out.push_back(v);
    pos = end + 1;
  }
  return out;
}

ScoreWeights parse_weights(std::string_view text) {
  const auto v = parse_eta_list(text);
  if (v.size() != 4) invalid("--weights expects lambda_k,lambda_alpha,lambda_beta,lambda_gamma");
  ScoreWeights w{v[0], v[1], v[2], v[3]};
  try {
    validate(w);
  } catch (const Error& e) {
    invalid(e.what());
  }
  return w;
}

PromptSet load_prompts(const RunConfig& c) {
  PromptSet p;
  p.synthesis.answer_delimiter = c.answer_delimiter;
  p.player_with_cot.answer_delimiter = c.answer_delimiter;
  p.player_without_cot.answer_delimiter = c.answer_delimiter;
  auto maybe_load = [&](PromptTemplate& t, const fs::path& path) {
    if (!path.empty()) t = load_template(c.resolve(path), t.id, t.answer_delimiter);
  };
  maybe_load(p.player_with_cot, c.player.template_path);
  maybe_load(p.player_without_cot, c.player_without_cot_template);
  maybe_load(p.judge, c.judge.template_path);
  maybe_load(p.extractor, c.extractor.template_path);
  return p;
}

void apply_overrides(RunConfig& c, const ConfigOverrides& o) {
  if (o.run_dir) c.run_dir = *o.run_dir;
  if (o.eta) c.eta = *o.eta;
  if (o.eta_sweep) c.eta_sweep = *o.eta_sweep;
  if (o.weights) c.weights = *o.weights;
  if (o.concurrency) c.concurrency = *o.concurrency;
  if (o.resume) c.resume = *o.resume;
  if (o.mock) c.mock = *o.mock;
}

}  // namespace cotforge
