#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace kgv {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::string model;
  std::optional<int> seed_hint;

  /// Single user-message request.
  static ChatRequest user(std::string content, double temperature, std::string model);

  /// Throws ConfigError on empty messages or contents, or negative temperature.
  void validate() const;

  friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason reason);
FinishReason parse_finish_reason(std::string_view text);

struct ChatResponse {
  std::string content;
  FinishReason finish = FinishReason::stop;
};

/// Stable SHA-256 over (model, temperature, messages, sample_index).
std::string cache_key(const ChatRequest& request, int sample_index);

/// Thread-safe chat completion endpoint. `sample_index` distinguishes the
/// independent samples drawn for one prompt.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request, int sample_index) = 0;
};

enum class BackendKind { http, scripted, cache_only };

BackendKind parse_backend_kind(std::string_view name);
std::string_view to_string(BackendKind kind);

struct RetryPolicy {
  int max_attempts = 5;
  int base_backoff_ms = 500;
};

struct BackendConfig {
  BackendKind kind = BackendKind::http;
  std::optional<std::string> endpoint_url;
  std::string api_key_env = "LLM_API_KEY";
  int max_in_flight = 4;
  RetryPolicy retry;
  std::optional<std::filesystem::path> cache_path;
  /// Response script for kind=scripted.
  std::optional<std::filesystem::path> script_path;
  int timeout_s = 120;

  void validate() const;
};

/// OpenAI-compatible POST {endpoint}/chat/completions.
class HttpBackend final : public ChatBackend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  /// Reads the API key from the environment; throws CredentialError when
  /// the variable is unset.
  explicit HttpBackend(const BackendConfig& config, Sleeper sleeper = {});

  ChatResponse complete(const ChatRequest& request, int sample_index) override;

  std::size_t requests_sent() const { return sent_.load(); }

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
  RetryPolicy retry_;
  int timeout_s_;
  Sleeper sleep_;
  std::atomic<std::size_t> sent_{0};
};

/// Canned responses for tests and fixture runs. Makes no network calls.
class ScriptedBackend final : public ChatBackend {
 public:
  /// Returns a response for the request or nullopt to defer to later rules.
  using Rule = std::function<std::optional<std::string>(const ChatRequest&, int sample_index)>;

  ScriptedBackend() = default;

  /// Script file: JSON-lines with either {"key", "response"} (exact
  /// cache_key match) or {"match": [substrings], "sample_index"?: int,
  /// "response" | "responses": [...]}; `responses` is indexed by
  /// sample_index modulo its length.
  static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  void set(const std::string& key, std::string response);
  void add_rule(Rule rule);
  void set_latency(std::chrono::milliseconds latency) { latency_ = latency; }

  ChatResponse complete(const ChatRequest& request, int sample_index) override;

  std::size_t calls() const { return calls_.load(); }
  int peak_in_flight() const { return peak_.load(); }
  /// Copies of every request received, in arrival order.
  std::vector<ChatRequest> log() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::string> by_key_;
  std::vector<Rule> rules_;
  std::vector<ChatRequest> log_;
  std::chrono::milliseconds latency_{0};
  std::atomic<std::size_t> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
};

/// Append-only JSON-lines response cache in front of another backend. With
/// no inner backend it is a pure replay cache and throws CacheMissError on
/// a miss.
class CachedBackend final : public ChatBackend {
 public:
  CachedBackend(std::filesystem::path path, std::shared_ptr<ChatBackend> inner);

  ChatResponse complete(const ChatRequest& request, int sample_index) override;

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }
  std::size_t entries() const;

 private:
  std::filesystem::path path_;
  std::shared_ptr<ChatBackend> inner_;
  mutable std::mutex mu_;
  std::map<std::string, ChatResponse> cache_;
  std::ofstream out_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

/// Caps the number of outstanding requests to the wrapped backend.
class BoundedBackend final : public ChatBackend {
 public:
  BoundedBackend(std::shared_ptr<ChatBackend> inner, int max_in_flight);

  ChatResponse complete(const ChatRequest& request, int sample_index) override;

 private:
  std::shared_ptr<ChatBackend> inner_;
  int limit_;
  int in_flight_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

/// Builds the configured stack: base backend (http / scripted / none),
/// optional cache, concurrency bound.
std::shared_ptr<ChatBackend> make_backend(const BackendConfig& config);

nlohmann::json request_to_json(const ChatRequest& request);

}  // namespace kgv
