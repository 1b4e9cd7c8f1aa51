#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "discovery/llm_backend.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <future>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "discovery/error.hpp"
#include "discovery/hashing.hpp"

namespace discovery {

void LlmBackendConfig::validate() const {
  if (mode == BackendMode::live) {
    if (endpoint_url.empty()) throw ConfigError("live LLM backend needs an endpoint URL");
    if (api_key_env.empty()) throw ConfigError("live LLM backend needs an API key environment variable name");
    if (model.empty()) throw ConfigError("live LLM backend needs a model name");
  }
  for (const std::string* effort : {&generation_effort, &evaluation_effort}) {
    if (*effort != "low" && *effort != "medium" && *effort != "high") {
      throw ConfigError("reasoning effort must be low, medium or high, not '" + *effort + "'");
    }
  }
  if (!(timeout_seconds > 0.0)) throw ConfigError("LLM timeout must be positive");
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be at least 1");
}

// ---- HttpBackend ----------------------------------------------------------

HttpBackend::HttpBackend(LlmBackendConfig config) : config_(std::move(config)) {
  config_.validate();
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError("environment variable " + config_.api_key_env + " holding the API key is not set");
  }
  api_key_ = key;
  const std::string& url = config_.endpoint_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL needs a scheme: '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::string HttpBackend::complete(const ChatRequest& request) {
  nlohmann::ordered_json body;
  body["model"] = config_.model;
  body["messages"] = nlohmann::ordered_json::array();
  for (const ChatMessage& message : request.messages) {
    body["messages"].push_back({{"role", message.role}, {"content", message.content}});
  }
  body["reasoning_effort"] = request.reasoning_effort;
  const std::string payload = body.dump();

  httplib::Client client(scheme_host_port_);
  const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_bearer_token_auth(api_key_);

  std::string last_error;
  for (std::size_t attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(500 << std::min<std::size_t>(attempt, 5)));
    auto result = client.Post(path_, payload, "application/json");
    if (!result) {
      last_error = "transport error: " + httplib::to_string(result.error());
      continue;
    }
    if (result->status == 429 || result->status >= 500) {
      last_error = "HTTP " + std::to_string(result->status);
      continue;
    }
    if (result->status != 200) {
      throw BackendError("HTTP " + std::to_string(result->status) + " from " + config_.endpoint_url + ": " +
                         result->body.substr(0, 500));
    }
    try {
      const auto reply = nlohmann::json::parse(result->body);
      const auto& content = reply.at("choices").at(0).at("message").at("content");
      return content.is_null() ? std::string{} : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw BackendError(std::string("unexpected chat-completions response: ") + e.what());
    }
  }
  throw BackendError("request to " + config_.endpoint_url + " failed after " + std::to_string(config_.retries + 1) +
                     " attempts: " + last_error);
}

// ---- MockBackend ----------------------------------------------------------

MockRule parse_mock_rule(std::string_view text) {
  if (text == "keyword") return MockRule::keyword;
  if (text == "constant") return MockRule::constant;
  if (text == "oracle") return MockRule::oracle;
  throw ConfigError("unknown mock classification rule '" + std::string(text) + "'");
}

MockBackend::MockBackend(MockConfig config) : config_(std::move(config)) {
  if (config_.rule == MockRule::oracle && !config_.oracle) throw ConfigError("oracle mock rule needs an oracle");
  if (config_.constant != 0 && config_.constant != 1) throw ConfigError("mock constant must be 0 or 1");
}

std::string MockBackend::description_for(FeatureId feature_id) const {
  const auto it = config_.descriptions.find(feature_id);
  return it != config_.descriptions.end() ? it->second : "feature " + std::to_string(feature_id);
}

std::size_t MockBackend::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

namespace {

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string MockBackend::complete(const ChatRequest& request) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  if (request.purpose == RequestPurpose::generation) {
    return "The feature responds to [[" + description_for(request.feature_id) + "]]";
  }
  int label = 0;
  switch (config_.rule) {
    case MockRule::constant:
      label = config_.constant;
      break;
    case MockRule::oracle:
      label = config_.oracle(request.doc_id, request.feature_id);
      break;
    case MockRule::keyword: {
      const auto it = config_.keywords.find(request.feature_id);
      if (it != config_.keywords.end()) {
        const std::string haystack = ascii_lower(request.text);
        for (const std::string& keyword : it->second) {
          if (!keyword.empty() && haystack.find(ascii_lower(keyword)) != std::string::npos) {
            label = 1;
            break;
          }
        }
      }
      break;
    }
  }
  return label ? "1" : "0";
}

// ---- CachedBackend --------------------------------------------------------

struct CachedBackend::Slot {
  std::shared_future<std::string> response;
};

CachedBackend::CachedBackend(std::shared_ptr<LlmBackend> inner, std::optional<std::filesystem::path> directory)
    : inner_(std::move(inner)), directory_(std::move(directory)) {
  if (directory_) std::filesystem::create_directories(*directory_);
}

std::string CachedBackend::cache_key(const ChatRequest& request) const {
  Sha256 hasher;
  auto field = [&](std::string_view text) {
    hasher.update_u64(text.size());
    hasher.update(text);
  };
  field(inner_->endpoint());
  field(inner_->model());
  field(request.reasoning_effort);
  hasher.update_u64(request.messages.size());
  for (const ChatMessage& message : request.messages) {
    field(message.role);
    field(message.content);
  }
  hasher.update_u64(request.attempt);
  return hasher.hex_digest();
}

std::size_t CachedBackend::upstream_calls() const {
  std::lock_guard lock(mutex_);
  return upstream_calls_;
}

std::string CachedBackend::complete(const ChatRequest& request) {
  const std::string key = cache_key(request);
  std::promise<std::string> promise;
  std::shared_future<std::string> pending;
  {
    std::lock_guard lock(mutex_);
    const auto it = slots_.find(key);
    if (it != slots_.end()) {
      pending = it->second->response;
    } else {
      auto slot = std::make_shared<Slot>();
      slot->response = promise.get_future().share();
      slots_.emplace(key, slot);
    }
  }
  if (pending.valid()) return pending.get();

  try {
    std::optional<std::string> response;
    std::filesystem::path file;
    if (directory_) {
      file = *directory_ / (key + ".json");
      std::ifstream in(file, std::ios::binary);
      if (in) {
        try {
          response = nlohmann::json::parse(in).at("response").get<std::string>();
        } catch (const nlohmann::json::exception&) {
          spdlog::warn("ignoring unreadable cache entry {}", file.string());
        }
      }
    }
    if (!response) {
      {
        std::lock_guard lock(mutex_);
        ++upstream_calls_;
      }
      response = inner_->complete(request);
      if (directory_) {
        const std::filesystem::path tmp = file.string() + ".tmp";
        {
          std::ofstream out(tmp, std::ios::binary);
          nlohmann::ordered_json entry;
          entry["endpoint"] = inner_->endpoint();
          entry["model"] = inner_->model();
          entry["response"] = *response;
          out << entry.dump() << '\n';
        }
        std::filesystem::rename(tmp, file);
      }
    }
    promise.set_value(*response);
    return *response;
  } catch (...) {
    // Failed calls are not cached.
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mutex_);
    slots_.erase(key);
    throw;
  }
}

std::shared_ptr<LlmBackend> make_backend(const LlmBackendConfig& config, MockConfig mock) {
  config.validate();
  std::shared_ptr<LlmBackend> inner;
  if (config.mode == BackendMode::mock) {
    inner = std::make_shared<MockBackend>(std::move(mock));
  } else {
    inner = std::make_shared<HttpBackend>(config);
  }
  return std::make_shared<CachedBackend>(std::move(inner), config.cache_dir);
}

}  // namespace discovery
