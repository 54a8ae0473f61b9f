#include "kgverify/llm_backend.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "kgverify/error.hpp"
#include "text_util.hpp"

namespace kgv {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

FinishReason parse_finish_reason(std::string_view text) {
  if (text == "length") return FinishReason::length;
  if (text == "error") return FinishReason::error;
  return FinishReason::stop;
}

ChatRequest ChatRequest::user(std::string content, double temperature, std::string model) {
  ChatRequest r;
  r.messages.push_back({Role::user, std::move(content)});
  r.temperature = temperature;
  r.model = std::move(model);
  return r;
}

void ChatRequest::validate() const {
  if (messages.empty()) throw ConfigError("chat request has no messages");
  for (const auto& m : messages) {
    if (m.content.empty()) throw ConfigError("chat request has an empty message");
  }
  if (temperature < 0.0) throw ConfigError("temperature must be non-negative");
}

json request_to_json(const ChatRequest& request) {
  json msgs = json::array();
  for (const auto& m : request.messages) {
    msgs.push_back(json{{"role", to_string(m.role)}, {"content", m.content}});
  }
  return json{{"model", request.model}, {"temperature", request.temperature}, {"messages", msgs}};
}

std::string cache_key(const ChatRequest& request, int sample_index) {
  json msgs = json::array();
  for (const auto& m : request.messages) msgs.push_back(json::array({to_string(m.role), m.content}));
  const json canonical =
      json::array({request.model, request.temperature, std::move(msgs), sample_index});
  return sha256_hex(canonical.dump());
}

BackendKind parse_backend_kind(std::string_view name) {
  if (name == "http") return BackendKind::http;
  if (name == "scripted") return BackendKind::scripted;
  if (name == "cache_only") return BackendKind::cache_only;
  throw ConfigError("unknown backend kind '" + std::string(name) + "'");
}

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::http: return "http";
    case BackendKind::scripted: return "scripted";
    case BackendKind::cache_only: return "cache_only";
  }
  return "http";
}

void BackendConfig::validate() const {
  if (kind == BackendKind::http && (!endpoint_url || endpoint_url->empty())) {
    throw ConfigError("http backend requires an endpoint URL");
  }
  if (kind == BackendKind::cache_only && !cache_path) {
    throw ConfigError("cache_only backend requires a cache path");
  }
  if (kind == BackendKind::scripted && !script_path) {
    throw ConfigError("scripted backend requires a script file");
  }
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be positive");
  if (retry.max_attempts < 1) throw ConfigError("retry attempts must be positive");
  if (retry.base_backoff_ms < 0) throw ConfigError("backoff must be non-negative");
}

// ---------------------------------------------------------------------------
// HTTP

HttpBackend::HttpBackend(const BackendConfig& config, Sleeper sleeper)
    : retry_(config.retry), timeout_s_(config.timeout_s), sleep_(std::move(sleeper)) {
  if (!config.endpoint_url) throw ConfigError("http backend requires an endpoint URL");
  const std::string& url = *config.endpoint_url;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/chat/completions";

  const char* key = std::getenv(config.api_key_env.c_str());
  if (!key) throw CredentialError("environment variable " + config.api_key_env + " is not set");
  api_key_ = key;
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

ChatResponse HttpBackend::complete(const ChatRequest& request, int) {
  request.validate();
  const std::string body = request_to_json(request).dump();
  httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};

  std::string last_error;
  for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
    if (attempt > 1) {
      sleep_(std::chrono::milliseconds(static_cast<long long>(retry_.base_backoff_ms) << (attempt - 2)));
    }
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(timeout_s_);
    client.set_read_timeout(timeout_s_);
    client.set_write_timeout(timeout_s_);
    ++sent_;
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
      throw CredentialError("endpoint rejected credentials (HTTP " + std::to_string(status) + ")");
    }
    if (status == 429 || status >= 500) {
      last_error = "HTTP " + std::to_string(status);
      continue;
    }
    if (status != 200) {
      throw TransportError("HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200));
    }
    json j;
    try {
      j = json::parse(res->body);
      const json& choice = j.at("choices").at(0);
      ChatResponse out;
      out.content = choice.at("message").at("content").get<std::string>();
      if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
        out.finish = parse_finish_reason(choice["finish_reason"].get<std::string>());
      }
      if (out.finish == FinishReason::error) out.finish = FinishReason::stop;
      return out;
    } catch (const json::exception& e) {
      throw TransportError(std::string("malformed completion response: ") + e.what());
    }
  }
  throw TransportError("gave up after " + std::to_string(retry_.max_attempts) +
                       " attempts (" + last_error + ")");
}

// ---------------------------------------------------------------------------
// Scripted

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "open", "cannot read script");
  auto backend = std::make_unique<ScriptedBackend>();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw FormatError(path.string(), where, "invalid JSON");
    }
    if (j.contains("key")) {
      backend->set(j.at("key").get<std::string>(), j.at("response").get<std::string>());
      continue;
    }
    if (!j.contains("match")) throw FormatError(path.string(), where, "needs 'key' or 'match'");
    std::vector<std::string> needles = j.at("match").get<std::vector<std::string>>();
    std::optional<int> only_sample;
    if (j.contains("sample_index")) only_sample = j.at("sample_index").get<int>();
    std::vector<std::string> responses;
    if (j.contains("responses")) {
      responses = j.at("responses").get<std::vector<std::string>>();
    } else if (j.contains("response")) {
      responses.push_back(j.at("response").get<std::string>());
    }
    if (responses.empty()) throw FormatError(path.string(), where, "no response given");
    backend->add_rule([needles, only_sample, responses](const ChatRequest& r,
                                                         int sample) -> std::optional<std::string> {
      if (only_sample && *only_sample != sample) return std::nullopt;
      const std::string& text = r.messages.back().content;
      for (const auto& n : needles) {
        if (text.find(n) == std::string::npos) return std::nullopt;
      }
      return responses[static_cast<std::size_t>(sample) % responses.size()];
    });
  }
  return backend;
}

void ScriptedBackend::set(const std::string& key, std::string response) {
  std::lock_guard lock(mu_);
  by_key_[key] = std::move(response);
}

void ScriptedBackend::add_rule(Rule rule) {
  std::lock_guard lock(mu_);
  rules_.push_back(std::move(rule));
}

std::vector<ChatRequest> ScriptedBackend::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request, int sample_index) {
  request.validate();
  const int now = ++in_flight_;
  int peak = peak_.load();
  while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
  }
  struct Leave {
    std::atomic<int>& n;
    ~Leave() { --n; }
  } leave{in_flight_};
  ++calls_;
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);

  std::vector<Rule> rules;
  {
    std::lock_guard lock(mu_);
    log_.push_back(request);
    if (auto it = by_key_.find(cache_key(request, sample_index)); it != by_key_.end()) {
      return ChatResponse{it->second, FinishReason::stop};
    }
    rules = rules_;
  }
  for (const auto& rule : rules) {
    if (auto text = rule(request, sample_index)) return ChatResponse{std::move(*text), FinishReason::stop};
  }
  throw BackendError("scripted backend has no response for request " +
                     cache_key(request, sample_index).substr(0, 12));
}

// ---------------------------------------------------------------------------
// Cache

CachedBackend::CachedBackend(std::filesystem::path path, std::shared_ptr<ChatBackend> inner)
    : path_(std::move(path)), inner_(std::move(inner)) {
  if (std::ifstream in{path_}) {
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      // A torn final line from an interrupted run is skipped.
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("key") || !j.contains("response")) continue;
      ChatResponse r{j["response"].get<std::string>(),
                     parse_finish_reason(j.value("finish", std::string("stop")))};
      cache_.emplace(j["key"].get<std::string>(), std::move(r));
    }
  }
  if (inner_) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    out_.open(path_, std::ios::app);
    if (!out_) throw Error("cannot open cache for append: " + path_.string());
  }
}

std::size_t CachedBackend::entries() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

ChatResponse CachedBackend::complete(const ChatRequest& request, int sample_index) {
  const std::string key = cache_key(request, sample_index);
  {
    std::lock_guard lock(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      ++hits_;
      return it->second;
    }
  }
  ++misses_;
  if (!inner_) throw CacheMissError("no cached response for key " + key);
  ChatResponse r = inner_->complete(request, sample_index);
  std::lock_guard lock(mu_);
  const auto [it, inserted] = cache_.emplace(key, r);
  if (!inserted) return it->second;  // a concurrent miss stored first; replay will serve that one
  out_ << json{{"key", key}, {"response", r.content}, {"finish", to_string(r.finish)}, {"ts", iso8601_now()}}.dump()
       << '\n';
  out_.flush();
  return r;
}

// ---------------------------------------------------------------------------
// Bounded

BoundedBackend::BoundedBackend(std::shared_ptr<ChatBackend> inner, int max_in_flight)
    : inner_(std::move(inner)), limit_(max_in_flight) {
  if (limit_ < 1) throw ConfigError("max_in_flight must be positive");
}

ChatResponse BoundedBackend::complete(const ChatRequest& request, int sample_index) {
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < limit_; });
    ++in_flight_;
  }
  struct Release {
    BoundedBackend& self;
    ~Release() {
      {
        std::lock_guard lock(self.mu_);
        --self.in_flight_;
      }
      self.cv_.notify_one();
    }
  } release{*this};
  return inner_->complete(request, sample_index);
}

std::shared_ptr<ChatBackend> make_backend(const BackendConfig& config) {
  config.validate();
  std::shared_ptr<ChatBackend> base;
  switch (config.kind) {
    case BackendKind::http: base = std::make_shared<HttpBackend>(config); break;
    case BackendKind::scripted: base = ScriptedBackend::from_file(*config.script_path); break;
    case BackendKind::cache_only: break;
  }
  if (config.cache_path) base = std::make_shared<CachedBackend>(*config.cache_path, base);
  return std::make_shared<BoundedBackend>(base, config.max_in_flight);
}

}  // namespace kgv
