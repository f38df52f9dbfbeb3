#include "scmoa/agents.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace scmoa {

namespace fs = std::filesystem;
using nlohmann::json;

std::string cache_key(const ChatRequest& req) {
  std::string preimage;
  preimage.reserve(req.agent.model_id.size() + req.system_prompt.size() +
                   req.user_prompt.size() + 2);
  preimage.append(req.agent.model_id);
  preimage.push_back('\0');
  preimage.append(req.system_prompt);
  preimage.push_back('\0');
  preimage.append(req.user_prompt);

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  EVP_Digest(preimage.data(), preimage.size(), digest, &digest_len, EVP_sha256(), nullptr);

  static const char* kHex = "0123456789abcdef";
  std::string hex;
  hex.reserve(digest_len * 2);
  for (unsigned int i = 0; i < digest_len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

std::string make_variant_tag(const std::string& method_prefix,
                             const std::string& persona_or_index, int sample_index) {
  return "<!-- sample variant: " + method_prefix + "-" + persona_or_index + "-" +
         std::to_string(sample_index) + " -->";
}

HttpOpenAiBackend::HttpOpenAiBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) {
    const char* env = std::getenv("SCMOA_API_BASE");
    if (env) config_.base_url = env;
  }
  if (config_.api_key.empty()) {
    const char* env = std::getenv("SCMOA_API_KEY");
    if (env) config_.api_key = env;
  }
  if (config_.base_url.empty()) {
    throw Error(ErrorCode::kConfigError,
                "HTTP backend requires a base URL (flag or SCMOA_API_BASE)");
  }
}

ChatResponse HttpOpenAiBackend::complete(const ChatRequest& req) {
  json body{
      {"model", req.agent.model_id},
      {"messages",
       json::array({json{{"role", "system"}, {"content", req.system_prompt}},
                    json{{"role", "user"}, {"content", req.user_prompt}}})},
      {"temperature", req.agent.temperature},
      {"max_tokens", req.agent.max_output_tokens},
  };
  const std::string payload = body.dump();

  // Jitter comes from a local engine; it never influences recorded output.
  std::mt19937_64 jitter_rng(std::random_device{}());
  std::string last_error = "no attempts made";

  for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
    if (attempt > 0) {
      int64_t backoff = static_cast<int64_t>(config_.base_delay_ms) << (attempt - 1);
      backoff = std::min<int64_t>(backoff, config_.max_delay_ms);
      int64_t jitter = backoff > 0 ? static_cast<int64_t>(jitter_rng() % (backoff + 1)) : 0;
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff / 2 + jitter / 2));
    }

    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_s, 0);
    client.set_read_timeout(config_.timeout_s, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty())
      headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = client.Post("/v1/chat/completions", headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::kBackendUnavailable,
                  "chat completion failed with HTTP " + std::to_string(res->status) + ": " +
                      res->body);
    }
    json reply = json::parse(res->body);
    ChatResponse out;
    out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    if (reply.contains("usage")) {
      out.tokens_in = reply["usage"].value("prompt_tokens", 0);
      out.tokens_out = reply["usage"].value("completion_tokens", 0);
    }
    out.from_cache = false;
    return out;
  }
  throw Error(ErrorCode::kBackendUnavailable,
              "backend unavailable after " + std::to_string(config_.max_attempts) +
                  " attempts (" + last_error + ")");
}

CachingClient::CachingClient(std::string cache_dir, std::shared_ptr<Backend> inner,
                             bool strict_fixtures)
    : cache_dir_(std::move(cache_dir)),
      inner_(std::move(inner)),
      strict_fixtures_(strict_fixtures) {
  fs::create_directories(cache_dir_);
}

void CachingClient::set_observer(std::function<void(const ChatRequest&)> observer) {
  std::lock_guard<std::mutex> lock(mutex_);
  observer_ = std::move(observer);
}

int64_t CachingClient::backend_calls() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return backend_calls_;
}

std::optional<ChatResponse> CachingClient::lookup(const std::string& key) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = memo_.find(key);
    if (it != memo_.end()) {
      ChatResponse r = it->second;
      r.from_cache = true;
      return r;
    }
  }
  fs::path path = fs::path(cache_dir_) / key.substr(0, 2) / (key + ".json");
  std::ifstream in(path);
  if (!in) return std::nullopt;
  json entry;
  try {
    in >> entry;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIoError, "corrupt cache entry " + path.string() + ": " + e.what());
  }
  ChatResponse r;
  r.text = entry.at("response").at("text").get<std::string>();
  r.tokens_in = entry.at("response").value("tokens_in", 0);
  r.tokens_out = entry.at("response").value("tokens_out", 0);
  r.from_cache = true;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    memo_[key] = r;
  }
  return r;
}

void CachingClient::store(const std::string& key, const ChatRequest& req,
                          const ChatResponse& resp) {
  fs::path dir = fs::path(cache_dir_) / key.substr(0, 2);
  fs::create_directories(dir);
  json entry{
      {"key", key},
      {"model", req.agent.model_id},
      {"system", req.system_prompt},
      {"user", req.user_prompt},
      {"response",
       {{"text", resp.text}, {"tokens_in", resp.tokens_in}, {"tokens_out", resp.tokens_out}}},
  };
  // Write-then-rename keeps concurrent writers safe: a reader only ever
  // sees a complete entry, and identical keys carry identical payloads.
  fs::path final_path = dir / (key + ".json");
  fs::path tmp_path = dir / (key + ".tmp." + std::to_string(
                                std::hash<std::thread::id>{}(std::this_thread::get_id())));
  {
    std::ofstream out(tmp_path);
    out << entry.dump(2) << "\n";
  }
  fs::rename(tmp_path, final_path);
  std::lock_guard<std::mutex> lock(mutex_);
  memo_[key] = resp;
  memo_[key].from_cache = true;
}

ChatResponse CachingClient::complete(const ChatRequest& req) {
  {
    std::function<void(const ChatRequest&)> obs;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      obs = observer_;
    }
    if (obs) obs(req);
  }
  const std::string key = cache_key(req);
  if (auto hit = lookup(key)) return *hit;
  if (!inner_) {
    if (strict_fixtures_) {
      throw Error(ErrorCode::kMissingFixture,
                  "no fixture for key " + key + " (model=" + req.agent.model_id + ")");
    }
    ChatResponse empty;
    return empty;
  }
  ChatResponse resp = inner_->complete(req);
  {
    std::lock_guard<std::mutex> lock(mutex_);
    ++backend_calls_;
  }
  resp.from_cache = false;
  store(key, req, resp);
  ChatResponse out = resp;
  out.from_cache = false;
  return out;
}

}  // namespace scmoa
