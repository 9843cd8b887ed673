#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "talift/prompts.hpp"

namespace talift::llm {

struct GenerationParams {
  std::string model = "gpt-4-turbo";
  double temperature = 0.8;
  int n_samples = 1;
  int max_tokens = 2048;
  std::optional<std::int64_t> seed;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct Completion {
  std::string text;
  std::string backend_id;
  bool cached = false;
  std::optional<Usage> usage;
};

enum class GatewayErrc : std::uint8_t { BackendError, ReplayMiss, Timeout, ConfigError };

class GatewayError : public std::runtime_error {
 public:
  GatewayError(GatewayErrc code, const std::string& what, int status = 0, std::string fingerprint = {})
      : std::runtime_error(what), code_(code), status_(status), fingerprint_(std::move(fingerprint)) {}
  GatewayErrc code() const { return code_; }
  int status() const { return status_; }
  const std::string& fingerprint() const { return fingerprint_; }

 private:
  GatewayErrc code_;
  int status_;
  std::string fingerprint_;
};

/// Throws ConfigError when a field is out of range.
void validate_params(const GenerationParams& p);

/// Canonical form of the sampling settings. n_samples is left out so sample i
/// of a request is the same entry however many samples are drawn.
std::string params_canonical(const GenerationParams& p);

/// Key of a whole request: prompt fingerprint plus sampling settings.
std::string request_key(const prompts::Prompt& prompt, const GenerationParams& params);
std::string cache_key(const prompts::Prompt& prompt, const GenerationParams& params, int index);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual std::vector<Completion> complete(const prompts::Prompt& prompt, const GenerationParams& params) = 0;
};

/// One file per request under <dir>/<key[0:2]>/<key>.json holding
/// {fingerprint, params, completions[]}. Writes are atomic.
class ResponseStore {
 public:
  explicit ResponseStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::filesystem::path path_for(const std::string& key) const;
  std::optional<std::vector<std::string>> load(const std::string& key) const;
  void store(const prompts::Prompt& prompt, const GenerationParams& params, const std::vector<std::string>& texts);
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

/// Fixture completions. Entries are keyed by request; entries recorded without
/// params match any sampling settings for that fingerprint.
class ReplayBackend : public Backend {
 public:
  ReplayBackend() = default;
  /// Loads every *.json record below `dir`.
  explicit ReplayBackend(const std::filesystem::path& dir);

  void add(const std::string& fingerprint, std::vector<std::string> texts);
  void add(const prompts::Prompt& prompt, const GenerationParams& params, std::vector<std::string> texts);
  std::size_t size() const { return exact_.size() + any_params_.size(); }

  std::string id() const override { return "replay"; }
  std::vector<Completion> complete(const prompts::Prompt& prompt, const GenerationParams& params) override;

 private:
  void add_record(const std::string& text);

  std::map<std::string, std::vector<std::string>> exact_;
  std::map<std::string, std::vector<std::string>> any_params_;
};

class CachedBackend : public Backend {
 public:
  CachedBackend(std::shared_ptr<Backend> inner, std::filesystem::path dir)
      : inner_(std::move(inner)), store_(std::move(dir)) {}

  std::string id() const override { return inner_->id(); }
  std::vector<Completion> complete(const prompts::Prompt& prompt, const GenerationParams& params) override;
  std::size_t delegated_calls() const { return delegated_.load(); }

 private:
  std::shared_ptr<Backend> inner_;
  ResponseStore store_;
  std::atomic<std::size_t> delegated_{0};
};

struct HttpConfig {
  std::string api_base;  // e.g. https://api.openai.com/v1
  std::string api_key;
  int timeout_seconds = 120;
  int max_attempts = 3;
  int backoff_ms = 500;
  int max_inflight = 4;

  /// Reads TA_LIFT_API_BASE and TA_LIFT_API_KEY.
  static HttpConfig from_env();
};

/// OpenAI-compatible chat completions client.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpConfig cfg);
  ~HttpBackend() override;

  std::string id() const override { return "http"; }
  std::vector<Completion> complete(const prompts::Prompt& prompt, const GenerationParams& params) override;
  std::size_t requests_sent() const { return sent_.load(); }

 private:
  struct Limiter;
  HttpConfig cfg_;
  std::unique_ptr<Limiter> limiter_;
  std::atomic<std::size_t> sent_{0};
};

/// Model name from TA_LIFT_MODEL, else the default.
std::string model_from_env(const std::string& fallback = GenerationParams{}.model);

struct BackendConfig {
  std::string kind = "replay";  // replay | http
  std::filesystem::path replay_dir;
  std::optional<std::filesystem::path> cache_dir;
};

/// Parses "replay:<dir>" or "http".
BackendConfig parse_backend_spec(const std::string& spec);
std::shared_ptr<Backend> make_backend(const BackendConfig& cfg);

}  // namespace talift::llm
