#include "talift/gateway.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <cstdlib>
#include <nlohmann/json.hpp>
#include <regex>
#include <semaphore>
#include <thread>

#include "talift/util.hpp"

namespace talift::llm {

using nlohmann::json;
namespace fs = std::filesystem;

void validate_params(const GenerationParams& p) {
  if (p.n_samples < 1) throw GatewayError(GatewayErrc::ConfigError, "n_samples must be at least 1");
  if (p.max_tokens < 1) throw GatewayError(GatewayErrc::ConfigError, "max_tokens must be positive");
  if (!(p.temperature >= 0)) throw GatewayError(GatewayErrc::ConfigError, "temperature must be non-negative");
  if (p.model.empty()) throw GatewayError(GatewayErrc::ConfigError, "model must be set");
}

namespace {

json params_json(const GenerationParams& p) {
  json j = {{"max_tokens", p.max_tokens}, {"model", p.model}, {"temperature", p.temperature}};
  j["seed"] = p.seed ? json(*p.seed) : json(nullptr);
  return j;
}

GenerationParams params_from_json(const json& j) {
  GenerationParams p;
  p.model = j.at("model").get<std::string>();
  p.temperature = j.at("temperature").get<double>();
  p.max_tokens = j.at("max_tokens").get<int>();
  if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::int64_t>();
  return p;
}

std::string request_key_of(const std::string& fingerprint, const std::string& params) {
  return sha256_hex(json{{"fingerprint", fingerprint}, {"params", params}}.dump());
}

json messages_json(const prompts::Prompt& prompt) {
  json arr = json::array();
  for (const auto& m : prompt.messages) arr.push_back({{"role", prompts::role_name(m.role)}, {"content", m.text}});
  return arr;
}

}  // namespace

std::string params_canonical(const GenerationParams& p) { return params_json(p).dump(); }

std::string request_key(const prompts::Prompt& prompt, const GenerationParams& params) {
  return request_key_of(prompt.fingerprint, params_canonical(params));
}

std::string cache_key(const prompts::Prompt& prompt, const GenerationParams& params, int index) {
  return sha256_hex(fmt::format("{}:{}", request_key(prompt, params), index));
}

fs::path ResponseStore::path_for(const std::string& key) const { return dir_ / key.substr(0, 2) / (key + ".json"); }

std::optional<std::vector<std::string>> ResponseStore::load(const std::string& key) const {
  auto p = path_for(key);
  std::error_code ec;
  if (!fs::exists(p, ec)) return std::nullopt;
  try {
    auto j = json::parse(read_file(p));
    return j.at("completions").get<std::vector<std::string>>();
  } catch (const std::exception&) {
    // an unreadable entry is a miss; the next store replaces it
    return std::nullopt;
  }
}

void ResponseStore::store(const prompts::Prompt& prompt, const GenerationParams& params,
                          const std::vector<std::string>& texts) {
  json j = {{"fingerprint", prompt.fingerprint}, {"params", params_json(params)}, {"completions", texts}};
  auto p = path_for(request_key(prompt, params));
  fs::create_directories(p.parent_path());
  write_file_atomic(p, j.dump(2) + "\n");
}

ReplayBackend::ReplayBackend(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw GatewayError(GatewayErrc::ConfigError, fmt::format("replay directory {} not found", dir.string()));
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      add_record(read_file(f));
    } catch (const json::exception& e) {
      throw GatewayError(GatewayErrc::ConfigError, fmt::format("bad replay record {}: {}", f.string(), e.what()));
    }
  }
}

void ReplayBackend::add_record(const std::string& text) {
  auto j = json::parse(text);
  auto fp = j.at("fingerprint").get<std::string>();
  auto completions = j.at("completions").get<std::vector<std::string>>();
  if (!j.contains("params") || j["params"].is_null()) {
    add(fp, std::move(completions));
  } else {
    exact_[request_key_of(fp, params_canonical(params_from_json(j["params"])))] = std::move(completions);
  }
}

void ReplayBackend::add(const std::string& fingerprint, std::vector<std::string> texts) {
  any_params_[fingerprint] = std::move(texts);
}

void ReplayBackend::add(const prompts::Prompt& prompt, const GenerationParams& params,
                        std::vector<std::string> texts) {
  exact_[request_key(prompt, params)] = std::move(texts);
}

std::vector<Completion> ReplayBackend::complete(const prompts::Prompt& prompt, const GenerationParams& params) {
  validate_params(params);
  const std::vector<std::string>* found = nullptr;
  if (auto it = exact_.find(request_key(prompt, params)); it != exact_.end()) {
    found = &it->second;
  } else if (auto it2 = any_params_.find(prompt.fingerprint); it2 != any_params_.end()) {
    found = &it2->second;
  }
  if (!found || static_cast<int>(found->size()) < params.n_samples) {
    throw GatewayError(GatewayErrc::ReplayMiss,
                       found ? fmt::format("replay has {} of {} samples for prompt {}", found->size(),
                                           params.n_samples, prompt.fingerprint)
                             : fmt::format("no replay entry for prompt {}", prompt.fingerprint),
                       0, prompt.fingerprint);
  }
  std::vector<Completion> out;
  for (int i = 0; i < params.n_samples; ++i) out.push_back({(*found)[i], id(), false, std::nullopt});
  return out;
}

std::vector<Completion> CachedBackend::complete(const prompts::Prompt& prompt, const GenerationParams& params) {
  validate_params(params);
  if (auto hit = store_.load(request_key(prompt, params)); hit && static_cast<int>(hit->size()) >= params.n_samples) {
    std::vector<Completion> out;
    for (int i = 0; i < params.n_samples; ++i) out.push_back({(*hit)[i], inner_->id(), true, std::nullopt});
    return out;
  }
  ++delegated_;
  auto fresh = inner_->complete(prompt, params);
  std::vector<std::string> texts;
  for (const auto& c : fresh) texts.push_back(c.text);
  store_.store(prompt, params, texts);
  return fresh;
}

HttpConfig HttpConfig::from_env() {
  HttpConfig c;
  if (const char* b = std::getenv("TA_LIFT_API_BASE")) c.api_base = b;
  if (const char* k = std::getenv("TA_LIFT_API_KEY")) c.api_key = k;
  if (c.api_base.empty()) c.api_base = "https://api.openai.com/v1";
  return c;
}

std::string model_from_env(const std::string& fallback) {
  const char* m = std::getenv("TA_LIFT_MODEL");
  return m && *m ? std::string(m) : fallback;
}

struct HttpBackend::Limiter {
  explicit Limiter(int n) : sem(n) {}
  std::counting_semaphore<1024> sem;
};

HttpBackend::HttpBackend(HttpConfig cfg)
    : cfg_(std::move(cfg)), limiter_(std::make_unique<Limiter>(std::clamp(cfg_.max_inflight, 1, 1024))) {
  if (cfg_.max_attempts < 1) throw GatewayError(GatewayErrc::ConfigError, "max_attempts must be at least 1");
}

HttpBackend::~HttpBackend() = default;

std::vector<Completion> HttpBackend::complete(const prompts::Prompt& prompt, const GenerationParams& params) {
  validate_params(params);
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg_.api_base, m, url_re)) {
    throw GatewayError(GatewayErrc::ConfigError, fmt::format("bad api base '{}'", cfg_.api_base));
  }
  std::string host = m[1];
  std::string path = m[2].matched ? m[2].str() : std::string();
  while (!path.empty() && path.back() == '/') path.pop_back();
  path += "/chat/completions";

  json body = {{"model", params.model},
               {"messages", messages_json(prompt)},
               {"temperature", params.temperature},
               {"n", params.n_samples},
               {"max_tokens", params.max_tokens}};
  if (params.seed) body["seed"] = *params.seed;
  std::string payload = body.dump();

  httplib::Client client(host);
  client.set_connection_timeout(cfg_.timeout_seconds, 0);
  client.set_read_timeout(cfg_.timeout_seconds, 0);
  client.set_write_timeout(cfg_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  std::string last_error;
  GatewayErrc last_code = GatewayErrc::BackendError;
  int last_status = 0;
  for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_ms << (attempt - 1)));
    httplib::Result res;
    {
      limiter_->sem.acquire();
      ++sent_;
      res = client.Post(path, headers, payload, "application/json");
      limiter_->sem.release();
    }
    if (!res) {
      auto err = res.error();
      last_code = (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) ? GatewayErrc::Timeout
                                                                                           : GatewayErrc::BackendError;
      last_status = 0;
      last_error = httplib::to_string(err);
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      json j;
      try {
        j = json::parse(res->body);
        std::optional<Usage> usage;
        if (j.contains("usage") && j["usage"].is_object()) {
          usage = Usage{j["usage"].value("prompt_tokens", std::int64_t{0}),
                        j["usage"].value("completion_tokens", std::int64_t{0})};
        }
        std::vector<Completion> out;
        for (const auto& choice : j.at("choices")) {
          const auto& content = choice.at("message").at("content");
          out.push_back({content.is_null() ? std::string() : content.get<std::string>(), id(), false, usage});
        }
        if (static_cast<int>(out.size()) < params.n_samples) {
          throw GatewayError(GatewayErrc::BackendError,
                             fmt::format("backend returned {} of {} samples", out.size(), params.n_samples),
                             res->status);
        }
        out.resize(params.n_samples);
        return out;
      } catch (const json::exception& e) {
        throw GatewayError(GatewayErrc::BackendError, fmt::format("malformed response: {}", e.what()), res->status);
      }
    }
    last_status = res->status;
    last_code = GatewayErrc::BackendError;
    last_error = fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 200));
    // client errors other than rate limiting are not worth retrying
    if (res->status >= 400 && res->status < 500 && res->status != 429) break;
  }
  throw GatewayError(last_code, last_error, last_status, prompt.fingerprint);
}

BackendConfig parse_backend_spec(const std::string& spec) {
  BackendConfig c;
  if (spec == "http") {
    c.kind = "http";
  } else if (spec.rfind("replay:", 0) == 0 && spec.size() > 7) {
    c.kind = "replay";
    c.replay_dir = spec.substr(7);
  } else {
    throw GatewayError(GatewayErrc::ConfigError, fmt::format("unknown backend '{}'", spec));
  }
  return c;
}

std::shared_ptr<Backend> make_backend(const BackendConfig& cfg) {
  std::shared_ptr<Backend> b;
  if (cfg.kind == "http") {
    b = std::make_shared<HttpBackend>(HttpConfig::from_env());
  } else if (cfg.kind == "replay") {
    b = std::make_shared<ReplayBackend>(cfg.replay_dir);
  } else {
    throw GatewayError(GatewayErrc::ConfigError, fmt::format("unknown backend kind '{}'", cfg.kind));
  }
  if (cfg.cache_dir) b = std::make_shared<CachedBackend>(b, *cfg.cache_dir);
  return b;
}

}  // namespace talift::llm
