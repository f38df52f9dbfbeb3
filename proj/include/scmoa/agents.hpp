#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "scmoa/errors.hpp"

namespace scmoa {

enum class BackendKind { kHttpOpenAiCompatible, kScripted };

struct AgentSpec {
  std::string model_id;
  double temperature = 0.0;  // main protocol is greedy decoding
  int max_output_tokens = 4096;
  BackendKind backend = BackendKind::kScripted;
};

struct ChatRequest {
  std::string system_prompt;
  std::string user_prompt;
  AgentSpec agent;
};

struct ChatResponse {
  std::string text;
  int64_t tokens_in = 0;
  int64_t tokens_out = 0;
  bool from_cache = false;
};

// sha256(model_id || 0x00 || system_prompt || 0x00 || user_prompt), lowercase
// hex. The NUL separators remove boundary ambiguity between the fields.
std::string cache_key(const ChatRequest& req);

// Neutral HTML comment appended to user prompts when k > 1, so each sample
// gets a distinct content hash at greedy decoding.
std::string make_variant_tag(const std::string& method_prefix,
                             const std::string& persona_or_index, int sample_index);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
};

struct HttpBackendConfig {
  std::string base_url;  // falls back to SCMOA_API_BASE
  std::string api_key;   // falls back to SCMOA_API_KEY
  int max_attempts = 5;
  int base_delay_ms = 250;  // exponential backoff with jitter, capped
  int max_delay_ms = 8000;
  int timeout_s = 120;
};

// OpenAI-compatible /v1/chat/completions client. Retries transport errors
// and 5xx/429 with bounded exponential backoff plus jitter; throws
// BackendUnavailable once max_attempts are exhausted.
class HttpOpenAiBackend : public Backend {
 public:
  explicit HttpOpenAiBackend(HttpBackendConfig config);
  ChatResponse complete(const ChatRequest& req) override;

 private:
  HttpBackendConfig config_;
};

// Content-addressed cache keyed by cache_key(). Files live at
// {cache_dir}/{key[0:2]}/{key}.json and hold the request alongside the
// response, so a cache directory doubles as a scripted fixture set.
//
// complete() is safe under arbitrary concurrent callers; writes go through
// an atomic rename, so last-writer-wins (identical keys imply identical
// payloads at temperature 0). With no inner backend this IS the scripted
// backend: a miss throws MissingFixture in strict mode and yields an empty
// response otherwise.
class CachingClient {
 public:
  CachingClient(std::string cache_dir, std::shared_ptr<Backend> inner, bool strict_fixtures);

  ChatResponse complete(const ChatRequest& req);

  // Observes every request before completion; tests use this to scan
  // assembled prompts (e.g. for gold leakage).
  void set_observer(std::function<void(const ChatRequest&)> observer);

  int64_t backend_calls() const;
  const std::string& cache_dir() const { return cache_dir_; }

 private:
  std::optional<ChatResponse> lookup(const std::string& key);
  void store(const std::string& key, const ChatRequest& req, const ChatResponse& resp);

  std::string cache_dir_;
  std::shared_ptr<Backend> inner_;
  bool strict_fixtures_;
  std::function<void(const ChatRequest&)> observer_;

  mutable std::mutex mutex_;
  std::unordered_map<std::string, ChatResponse> memo_;
  int64_t backend_calls_ = 0;
};

}  // namespace scmoa
