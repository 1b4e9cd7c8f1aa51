#pragma once

// Chat-completion backends: a live HTTP client, an offline mock, and a
// content-addressed response cache that wraps either.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "discovery/data_model.hpp"

namespace discovery {

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

enum class RequestPurpose { generation, detection };

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::string reasoning_effort = "medium";
  // Retry number; attempts after the first bypass cached responses.
  std::size_t attempt = 0;

  // Context for offline backends. Live backends send only the messages.
  RequestPurpose purpose = RequestPurpose::generation;
  FeatureId feature_id = 0;
  std::string doc_id;
  std::string description;
  std::string text;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  // Returns the assistant message text. Throws BackendError on failure.
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::string endpoint() const = 0;
  virtual std::string model() const = 0;
};

enum class BackendMode { live, mock };

struct LlmBackendConfig {
  BackendMode mode = BackendMode::mock;
  std::string endpoint_url;
  std::string model = "gpt-oss-20b";
  // Name of the environment variable holding the bearer token.
  std::string api_key_env = "LLM_API_KEY";
  std::string generation_effort = "medium";
  std::string evaluation_effort = "low";
  double timeout_seconds = 120.0;
  std::size_t retries = 2;
  std::size_t max_in_flight = 4;
  std::optional<std::filesystem::path> cache_dir;

  void validate() const;
};

// POSTs {model, messages, reasoning_effort} to an OpenAI-style
// chat-completions endpoint with the bearer token read from the configured
// environment variable.
class HttpBackend : public LlmBackend {
 public:
  explicit HttpBackend(LlmBackendConfig config);
  std::string complete(const ChatRequest& request) override;
  std::string endpoint() const override { return config_.endpoint_url; }
  std::string model() const override { return config_.model; }

 private:
  LlmBackendConfig config_;
  std::string api_key_;
  std::string scheme_host_port_;
  std::string path_;
};

enum class MockRule { keyword, constant, oracle };

MockRule parse_mock_rule(std::string_view text);

struct MockConfig {
  // Canned descriptions; features without one get "feature <id>".
  std::map<FeatureId, std::string> descriptions;
  MockRule rule = MockRule::keyword;
  // keyword rule: predict 1 when the text contains any keyword of the feature,
  // ignoring ASCII case.
  std::map<FeatureId, std::vector<std::string>> keywords;
  int constant = 0;
  // oracle rule: the true indicator for (doc_id, feature_id).
  std::function<int(const std::string&, FeatureId)> oracle;
};

// Deterministic, network-free backend.
class MockBackend : public LlmBackend {
 public:
  explicit MockBackend(MockConfig config);
  std::string complete(const ChatRequest& request) override;
  std::string endpoint() const override { return "mock://"; }
  std::string model() const override { return "mock"; }
  std::string description_for(FeatureId feature_id) const;
  std::size_t calls() const;

 private:
  MockConfig config_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

// Memoizes responses by SHA-256 of (endpoint, model, reasoning effort,
// messages, attempt). Concurrent identical requests share one upstream call.
// With a directory, responses persist as <key>.json files.
class CachedBackend : public LlmBackend {
 public:
  CachedBackend(std::shared_ptr<LlmBackend> inner, std::optional<std::filesystem::path> directory = std::nullopt);
  std::string complete(const ChatRequest& request) override;
  std::string endpoint() const override { return inner_->endpoint(); }
  std::string model() const override { return inner_->model(); }

  std::string cache_key(const ChatRequest& request) const;
  std::size_t upstream_calls() const;

 private:
  struct Slot;
  std::shared_ptr<LlmBackend> inner_;
  std::optional<std::filesystem::path> directory_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::shared_ptr<Slot>> slots_;
  std::size_t upstream_calls_ = 0;
};

std::shared_ptr<LlmBackend> make_backend(const LlmBackendConfig& config, MockConfig mock);

}  // namespace discovery
