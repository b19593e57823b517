#include "cotforge/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <openssl/evp.h>

#include <nlohmann/json.hpp>

namespace cotforge {

using json = nlohmann::ordered_json;

std::string CompletionRequest::joined_text() const {
  std::string out;
  for (const auto& part : prompt_parts) {
    if (part.kind != PromptPart::Kind::kText) continue;
    if (!out.empty()) out += "\n\n";
    out += part.content;
  }
  return out;
}

std::string_view to_string(FinishReason reason) noexcept {
  switch (reason) {
    case FinishReason::kComplete: return "complete";
    case FinishReason::kTruncated: return "truncated";
    case FinishReason::kRefused: return "refused";
  }
  return "complete";
}

std::chrono::milliseconds RetryPolicy::backoff_after(int attempt) const {
  const double factor = std::pow(backoff_multiplier, std::max(0, attempt - 1));
  return std::chrono::milliseconds(
      static_cast<std::int64_t>(static_cast<double>(base_backoff.count()) * factor));
}

// ---------------------------------------------------------------------------

CompletionResponse MockBackend::send(const CompletionRequest& req, int attempt) {
  const std::size_t now = ++in_flight_;
  std::size_t prev = max_in_flight_.load();
  while (now > prev && !max_in_flight_.compare_exchange_weak(prev, now)) {
  }
  ++calls_;
  {
    std::lock_guard lock(log_mutex_);
    seeds_.push_back(req.seed);
  }
  struct Release {
    std::atomic<std::size_t>& counter;
    ~Release() { --counter; }
  } release{in_flight_};

  if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);

  MockReply reply = script_(MockCall{req, attempt});
  switch (reply.fault) {
    case MockReply::Fault::kTransient:
      throw EndpointFailure(503, "mock: scripted transient failure");
    case MockReply::Fault::kPermanent:
      throw EndpointFailure(400, "mock: scripted permanent failure");
    case MockReply::Fault::kNone:
      break;
  }
  CompletionResponse resp;
  resp.text = std::move(reply.text);
  resp.finish_reason = reply.finish_reason;
  if (req.want_logprobs) {
    resp.token_logprobs = std::move(reply.logprobs);
    resp.token_texts = std::move(reply.tokens);
  }
  return resp;
}

std::vector<std::uint64_t> MockBackend::seen_seeds() const {
  std::lock_guard lock(log_mutex_);
  return seeds_;
}

// ---------------------------------------------------------------------------

namespace {

std::string base64(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string mime_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "image/jpeg";
}

bool is_remote_or_inline(std::string_view ref) {
  return ref.starts_with("data:") || ref.starts_with("http://") || ref.starts_with("https://");
}

std::string resolve_image(const std::string& ref, const HttpEndpointConfig& config,
                          const std::filesystem::path& image_root) {
  if (is_remote_or_inline(ref) || config.image_mode == "url") return ref;
  const auto path = image_root / ref;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kInvalidArgument, "cannot read image '" + path.string() + "'");
  }
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return "data:" + mime_for(path) + ";base64," + base64(bytes);
}

FinishReason parse_finish(const json& choice) {
  if (!choice.contains("finish_reason") || !choice["finish_reason"].is_string()) {
    return FinishReason::kComplete;
  }
  const auto r = choice["finish_reason"].get<std::string>();
  if (r == "length") return FinishReason::kTruncated;
  if (r == "content_filter") return FinishReason::kRefused;
  return FinishReason::kComplete;
}

}  // namespace

std::string build_chat_request_body(const CompletionRequest& req, const HttpEndpointConfig& config,
                                    const std::filesystem::path& image_root) {
  json content = json::array();
  for (const auto& part : req.prompt_parts) {
    if (part.kind == PromptPart::Kind::kText) {
      content.push_back({{"type", "text"}, {"text", part.content}});
    } else if (!part.content.empty()) {
      content.push_back({{"type", "image_url"},
                         {"image_url", {{"url", resolve_image(part.content, config, image_root)}}}});
    }
  }
  json body;
  body["model"] = config.model;
  body["messages"] = json::array({json{{"role", "user"}, {"content", std::move(content)}}});
  body["temperature"] = req.temperature;
  body["max_tokens"] = req.max_output_units;
  // Most servers reject seeds above the signed 64-bit range.
  body["seed"] = static_cast<std::int64_t>(req.seed & 0x7FFFFFFFFFFFFFFFULL);
  if (req.want_logprobs) body["logprobs"] = true;
  return body.dump();
}

CompletionResponse parse_chat_response(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformedResponse, std::string("response is not JSON: ") + e.what());
  }
  if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
    throw Error(ErrorCode::kMalformedResponse, "response has no choices");
  }
  const auto& choice = doc["choices"][0];
  if (!choice.contains("message") || !choice["message"].contains("content")) {
    throw Error(ErrorCode::kMalformedResponse, "response choice has no message content");
  }
  CompletionResponse resp;
  const auto& content = choice["message"]["content"];
  resp.text = content.is_string() ? content.get<std::string>() : std::string{};
  resp.finish_reason = parse_finish(choice);

  if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
      choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
    std::vector<double> lps;
    std::vector<std::string> toks;
    for (const auto& entry : choice["logprobs"]["content"]) {
      if (!entry.contains("logprob") || !entry["logprob"].is_number()) {
        throw Error(ErrorCode::kMalformedResponse, "logprob entry without a numeric logprob");
      }
      lps.push_back(entry["logprob"].get<double>());
      toks.push_back(entry.value("token", std::string{}));
    }
    resp.token_logprobs = std::move(lps);
    resp.token_texts = std::move(toks);
  }
  return resp;
}

HttpBackend::HttpBackend(HttpEndpointConfig config, std::filesystem::path image_root)
    : config_(std::move(config)), image_root_(std::move(image_root)) {
  const auto scheme_end = config_.url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kConfigInvalid, "endpoint url '" + config_.url + "' has no scheme");
  }
  const auto path_start = config_.url.find('/', scheme_end + 3);
  scheme_host_ = config_.url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.url.substr(path_start);
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
  }
}

CompletionResponse HttpBackend::send(const CompletionRequest& req, int /*attempt*/) {
  const std::string body = build_chat_request_body(req, config_, image_root_);
  httplib::Client client(scheme_host_);
  client.set_connection_timeout(30);
  client.set_read_timeout(config_.timeout_seconds);
  client.set_write_timeout(60);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto result = client.Post(path_, headers, body, "application/json");
  if (!result) {
    throw EndpointFailure(0, "transport error: " + httplib::to_string(result.error()));
  }
  if (result->status < 200 || result->status >= 300) {
    throw EndpointFailure(result->status, "HTTP " + std::to_string(result->status) + ": " +
                                              result->body.substr(0, 200));
  }
  return parse_chat_response(result->body);
}

// ---------------------------------------------------------------------------

AuditLog::AuditLog(const std::filesystem::path& path) : out_(path, std::ios::app) {
  if (!out_) throw Error(ErrorCode::kInvalidArgument, "cannot open audit log " + path.string());
}

void AuditLog::append(const CompletionRequest& req, int attempt, std::string_view outcome,
                      const CompletionResponse* response) {
  json rec;
  rec["endpoint"] = req.endpoint_ref;
  rec["seed"] = req.seed;
  rec["attempt"] = attempt;
  rec["outcome"] = outcome;
  rec["prompt"] = req.joined_text();
  rec["images"] = std::count_if(req.prompt_parts.begin(), req.prompt_parts.end(), [](const auto& p) {
    return p.kind == PromptPart::Kind::kImage;
  });
  if (response != nullptr) {
    rec["response"] = response->text;
    rec["finish_reason"] = to_string(response->finish_reason);
  }
  const std::string line = rec.dump() + "\n";
  std::lock_guard lock(mutex_);
  out_ << line;
  out_.flush();
}

// ---------------------------------------------------------------------------

class Gateway::Limiter {
 public:
  explicit Limiter(int cap) : cap_(cap) {}

  void acquire() {
    if (cap_ <= 0) return;
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return in_use_ < cap_; });
    ++in_use_;
  }
  void release() {
    if (cap_ <= 0) return;
    {
      std::lock_guard lock(mutex_);
      --in_use_;
    }
    cv_.notify_one();
  }

 private:
  int cap_;
  int in_use_ = 0;
  std::mutex mutex_;
  std::condition_variable cv_;
};

Gateway::Gateway() = default;
Gateway::~Gateway() = default;

MockBackend& Gateway::register_mock(const std::string& id, MockScript script, MockOptions options,
                                    int max_in_flight) {
  if (endpoints_.contains(id)) {
    throw Error(ErrorCode::kDuplicateId, "endpoint '" + id + "' is already registered");
  }
  auto backend = std::make_unique<MockBackend>(std::move(script), options);
  MockBackend& ref = *backend;
  Endpoint ep;
  ep.mock = backend.get();
  ep.backend = std::move(backend);
  ep.limiter = std::make_unique<Limiter>(max_in_flight);
  endpoints_.emplace(id, std::move(ep));
  return ref;
}

void Gateway::register_backend(const std::string& id, std::unique_ptr<Backend> backend,
                               int max_in_flight) {
  if (endpoints_.contains(id)) {
    throw Error(ErrorCode::kDuplicateId, "endpoint '" + id + "' is already registered");
  }
  Endpoint ep;
  ep.mock = dynamic_cast<MockBackend*>(backend.get());
  ep.backend = std::move(backend);
  ep.limiter = std::make_unique<Limiter>(max_in_flight);
  endpoints_.emplace(id, std::move(ep));
}

bool Gateway::has_endpoint(const std::string& id) const { return endpoints_.contains(id); }

MockBackend& Gateway::mock(const std::string& id) const {
  auto it = endpoints_.find(id);
  if (it == endpoints_.end() || it->second.mock == nullptr) {
    throw Error(ErrorCode::kPermanentRejection, "no mock registered as '" + id + "'");
  }
  return *it->second.mock;
}

void Gateway::enable_audit(const std::filesystem::path& path) {
  audit_ = std::make_unique<AuditLog>(path);
}

namespace {

void check_request(const CompletionRequest& req) {
  const bool has_text = std::any_of(req.prompt_parts.begin(), req.prompt_parts.end(),
                                    [](const auto& p) { return p.kind == PromptPart::Kind::kText; });
  if (!has_text) throw Error(ErrorCode::kInvalidArgument, "request has no text part");
  if (req.max_output_units < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_output_units must be >= 1");
  }
}

void check_response(const CompletionRequest& req, const CompletionResponse& resp) {
  if (!req.want_logprobs) return;
  if (!resp.token_logprobs) {
    throw Error(ErrorCode::kMalformedResponse,
                "endpoint '" + req.endpoint_ref + "' returned no log-probabilities");
  }
  if (resp.token_texts && resp.token_texts->size() != resp.token_logprobs->size()) {
    throw Error(ErrorCode::kMalformedResponse, "token texts and log-probabilities differ in length");
  }
  for (double lp : *resp.token_logprobs) {
    if (!(lp <= 0.0)) {
      throw Error(ErrorCode::kMalformedResponse, "log-probability above zero or not a number");
    }
  }
}

}  // namespace

CompletionResponse Gateway::complete(const CompletionRequest& req, const RetryPolicy& policy) const {
  check_request(req);
  if (policy.max_attempts < 1) throw Error(ErrorCode::kInvalidArgument, "max_attempts must be >= 1");
  auto it = endpoints_.find(req.endpoint_ref);
  if (it == endpoints_.end()) {
    throw Error(ErrorCode::kPermanentRejection, "unknown endpoint '" + req.endpoint_ref + "'");
  }
  const Endpoint& ep = it->second;

  std::string last_error;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(policy.backoff_after(attempt - 1));
    ++attempts_;
    ep.limiter->acquire();
    CompletionResponse resp;
    try {
      resp = ep.backend->send(req, attempt);
    } catch (const EndpointFailure& e) {
      ep.limiter->release();
      if (audit_) audit_->append(req, attempt, e.what(), nullptr);
      const bool retryable = e.status() == 0 || policy.retryable_statuses.contains(e.status());
      if (!retryable) {
        throw Error(ErrorCode::kPermanentRejection,
                    "endpoint '" + req.endpoint_ref + "' rejected the request: " + e.what());
      }
      last_error = e.what();
      continue;
    } catch (...) {
      ep.limiter->release();
      throw;
    }
    ep.limiter->release();
    if (audit_) audit_->append(req, attempt, "ok", &resp);
    check_response(req, resp);
    return resp;
  }
  throw Error(ErrorCode::kExhaustedRetries, "endpoint '" + req.endpoint_ref + "' failed " +
                                                std::to_string(policy.max_attempts) +
                                                " attempts; last error: " + last_error);
}

}  // namespace cotforge
