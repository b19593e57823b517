#pragma once

// Uniform completion client over every model role (synthesis agents, judge,
// player, extractor). Remote endpoints speak chat-completions JSON over HTTP;
// the mock backend serves scripted replies in-process.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cotforge/error.hpp"

namespace cotforge {

struct PromptPart {
  enum class Kind { kText, kImage };
  Kind kind = Kind::kText;
  /// Text content, or an image reference (path, data URI or URL).
  std::string content;

  static PromptPart text(std::string s) { return {Kind::kText, std::move(s)}; }
  static PromptPart image(std::string ref) { return {Kind::kImage, std::move(ref)}; }
  bool operator==(const PromptPart&) const = default;
};

struct CompletionRequest {
  std::string endpoint_ref;
  std::vector<PromptPart> prompt_parts;
  std::uint64_t seed = 0;
  double temperature = 0.0;
  int max_output_units = 1024;
  bool want_logprobs = false;

  /// Concatenation of the text parts, separated by blank lines.
  std::string joined_text() const;
};

enum class FinishReason { kComplete, kTruncated, kRefused };

std::string_view to_string(FinishReason reason) noexcept;

struct CompletionResponse {
  std::string text;
  /// Natural-log probability per generated unit, each <= 0.
  std::optional<std::vector<double>> token_logprobs;
  /// Surface text of each generated unit, parallel to token_logprobs.
  std::optional<std::vector<std::string>> token_texts;
  FinishReason finish_reason = FinishReason::kComplete;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_backoff{500};
  double backoff_multiplier = 2.0;
  std::set<int> retryable_statuses{408, 429, 500, 502, 503, 504};

  /// Delay before attempt `attempt + 1`, given `attempt` failures so far.
  std::chrono::milliseconds backoff_after(int attempt) const;
};

/// Thrown by backends. Status 0 means the request never got an HTTP status
/// (connection refused, timeout); those are always retried.
class EndpointFailure : public std::runtime_error {
 public:
  EndpointFailure(int status, const std::string& what)
      : std::runtime_error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class Backend {
 public:
  virtual ~Backend() = default;
  /// `attempt` is 1-based. Throws EndpointFailure on transport or HTTP errors.
  virtual CompletionResponse send(const CompletionRequest& req, int attempt) = 0;
};

// ---------------------------------------------------------------------------
// Mock backend

struct MockReply {
  enum class Fault { kNone, kTransient, kPermanent };

  std::string text;
  std::optional<std::vector<double>> logprobs;
  std::optional<std::vector<std::string>> tokens;
  FinishReason finish_reason = FinishReason::kComplete;
  Fault fault = Fault::kNone;

  static MockReply ok(std::string text) {
    MockReply r;
    r.text = std::move(text);
    return r;
  }
  static MockReply transient_failure() {
    MockReply r;
    r.fault = Fault::kTransient;
    return r;
  }
  static MockReply permanent_failure() {
    MockReply r;
    r.fault = Fault::kPermanent;
    return r;
  }
};

struct MockCall {
  const CompletionRequest& request;
  int attempt = 1;
};

/// A mock script must be a pure function of (prompt parts, seed, attempt).
using MockScript = std::function<MockReply(const MockCall&)>;

struct MockOptions {
  /// Simulated service time per call; lets tests observe overlap.
  std::chrono::microseconds latency{0};
};

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockScript script, MockOptions options = {})
      : script_(std::move(script)), options_(options) {}

  CompletionResponse send(const CompletionRequest& req, int attempt) override;

  std::size_t calls() const noexcept { return calls_.load(); }
  std::size_t max_in_flight() const noexcept { return max_in_flight_.load(); }
  /// Seeds of every call, in arrival order.
  std::vector<std::uint64_t> seen_seeds() const;

 private:
  MockScript script_;
  MockOptions options_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> max_in_flight_{0};
  mutable std::mutex log_mutex_;
  std::vector<std::uint64_t> seeds_;
};

// ---------------------------------------------------------------------------
// HTTP backend

struct HttpEndpointConfig {
  std::string url;    ///< Full chat-completions URL.
  std::string model;
  std::string api_key_env;  ///< Name of the env var holding the key; may be empty.
  int max_in_flight = 4;
  int timeout_seconds = 300;
  /// "data_uri" inlines local images as base64; "url" passes refs through.
  std::string image_mode = "data_uri";
};

/// Builds the chat-completions request body for `req`. Local image paths are
/// resolved against `image_root` when inlined.
std::string build_chat_request_body(const CompletionRequest& req, const HttpEndpointConfig& config,
                                    const std::filesystem::path& image_root);

/// Parses a chat-completions response body. Throws kMalformedResponse when
/// required fields are missing.
CompletionResponse parse_chat_response(const std::string& body);

class HttpBackend final : public Backend {
 public:
  HttpBackend(HttpEndpointConfig config, std::filesystem::path image_root);
  CompletionResponse send(const CompletionRequest& req, int attempt) override;

 private:
  HttpEndpointConfig config_;
  std::filesystem::path image_root_;
  std::string scheme_host_;
  std::string path_;
  std::string api_key_;
};

// ---------------------------------------------------------------------------

class AuditLog {
 public:
  explicit AuditLog(const std::filesystem::path& path);
  void append(const CompletionRequest& req, int attempt, std::string_view outcome,
              const CompletionResponse* response);

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

/// Routes requests to registered backends, retrying transient failures and
/// capping the number of in-flight requests per endpoint. Safe for
/// concurrent use once registration is done.
class Gateway {
 public:
  Gateway();
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Throws kDuplicateId if `id` is already registered.
  MockBackend& register_mock(const std::string& id, MockScript script, MockOptions options = {},
                             int max_in_flight = 0);
  void register_backend(const std::string& id, std::unique_ptr<Backend> backend,
                        int max_in_flight = 0);

  bool has_endpoint(const std::string& id) const;
  /// Throws kPermanentRejection for unknown ids or non-mock endpoints.
  MockBackend& mock(const std::string& id) const;

  void enable_audit(const std::filesystem::path& path);

  /// Errors: kExhaustedRetries, kPermanentRejection, kMalformedResponse.
  CompletionResponse complete(const CompletionRequest& req, const RetryPolicy& policy) const;

  /// Attempts made across all requests, including retries.
  std::size_t total_attempts() const noexcept { return attempts_.load(); }

 private:
  class Limiter;
  struct Endpoint {
    std::unique_ptr<Backend> backend;
    MockBackend* mock = nullptr;
    std::unique_ptr<Limiter> limiter;
  };

  std::map<std::string, Endpoint> endpoints_;
  std::unique_ptr<AuditLog> audit_;
  mutable std::atomic<std::size_t> attempts_{0};
};

}  // namespace cotforge
