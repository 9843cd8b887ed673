#include <gtest/gtest.h>
#include <fmt/format.h>
#include <httplib.h>

#include <nlohmann/json.hpp>
#include <thread>

#include "talift/gateway.hpp"
#include "talift/util.hpp"
#include "test_support.hpp"

using namespace talift;
using namespace talift::llm;
namespace fs = std::filesystem;

namespace {

prompts::Prompt prompt(const std::string& text) { return prompts::make_prompt({{prompts::Role::User, text}}); }

GenerationParams params(int n = 1) {
  GenerationParams p;
  p.n_samples = n;
  return p;
}

class CountingBackend : public Backend {
 public:
  std::string id() const override { return "counting"; }
  std::vector<Completion> complete(const prompts::Prompt&, const GenerationParams& p) override {
    ++calls;
    std::vector<Completion> out;
    for (int i = 0; i < p.n_samples; ++i) out.push_back({fmt::format("s{}", i), id(), false, std::nullopt});
    return out;
  }
  int calls = 0;
};

}  // namespace

TEST(Replay, ReturnsFixtureAndMisses) {
  ReplayBackend r;
  auto p = prompt("hello");
  r.add(p.fingerprint, {"X"});
  auto out = r.complete(p, params());
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].text, "X");
  EXPECT_FALSE(out[0].cached);
  EXPECT_EQ(out[0].backend_id, "replay");

  auto q = prompt("other");
  try {
    r.complete(q, params());
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), GatewayErrc::ReplayMiss);
    EXPECT_EQ(e.fingerprint(), q.fingerprint);
  }
  EXPECT_THROW(r.complete(p, params(2)), GatewayError);
}

TEST(Replay, ExactEntriesBeatWildcard) {
  ReplayBackend r;
  auto p = prompt("x");
  r.add(p.fingerprint, {"any"});
  auto hot = params();
  hot.temperature = 1.5;
  r.add(p, hot, {"hot"});
  EXPECT_EQ(r.complete(p, hot)[0].text, "hot");
  EXPECT_EQ(r.complete(p, params())[0].text, "any");
}

TEST(Replay, LoadsDirectory) {
  test_support::TempDir dir;
  ResponseStore store(dir.path());
  auto p = prompt("stored");
  store.store(p, params(), {"a", "b"});
  nlohmann::json wild = {{"fingerprint", prompt("w").fingerprint}, {"params", nullptr}, {"completions", {"w0"}}};
  write_file_atomic(dir.path() / "wild.json", wild.dump());
  ReplayBackend r(dir.path());
  EXPECT_EQ(r.size(), 2u);
  auto out = r.complete(p, params(2));
  EXPECT_EQ(out[1].text, "b");
  EXPECT_EQ(r.complete(prompt("w"), params())[0].text, "w0");
  EXPECT_THROW(ReplayBackend(dir.path() / "missing"), GatewayError);
}

TEST(Cache, SecondCallIsCached) {
  test_support::TempDir dir;
  auto inner = std::make_shared<CountingBackend>();
  CachedBackend cached(inner, dir.path());
  auto p = prompt("q");
  auto first = cached.complete(p, params(3));
  EXPECT_FALSE(first[0].cached);
  auto second = cached.complete(p, params(3));
  EXPECT_EQ(inner->calls, 1);
  EXPECT_EQ(cached.delegated_calls(), 1u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_TRUE(second[i].cached);
    EXPECT_EQ(second[i].text, first[i].text);
  }
  // fewer samples are served from the same entry
  EXPECT_TRUE(cached.complete(p, params(2))[0].cached);
  EXPECT_EQ(inner->calls, 1);
  // more samples than stored go back to the backend
  cached.complete(p, params(4));
  EXPECT_EQ(inner->calls, 2);
  auto key = request_key(p, params());
  EXPECT_TRUE(fs::exists(dir.path() / key.substr(0, 2) / (key + ".json")));
}

TEST(Cache, StoreLoadRoundTripAndCorruptEntry) {
  test_support::TempDir dir;
  ResponseStore store(dir.path());
  auto p = prompt("r");
  std::vector<std::string> texts{"one", "two\nlines", "ünïcode"};
  store.store(p, params(), texts);
  EXPECT_EQ(store.load(request_key(p, params())), texts);
  write_file_atomic(store.path_for(request_key(p, params())), "{not json");
  EXPECT_FALSE(store.load(request_key(p, params())).has_value());
}

TEST(Cache, ConcurrentWritersLeaveValidEntry) {
  test_support::TempDir dir;
  ResponseStore store(dir.path());
  auto p = prompt("c");
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      for (int n = 0; n < 20; ++n) store.store(p, params(), {fmt::format("t{}", t)});
    });
  }
  for (auto& t : threads) t.join();
  auto got = store.load(request_key(p, params()));
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(got->size(), 1u);
}

TEST(Keys, StableAndSensitive) {
  auto p = prompt("k");
  EXPECT_EQ(cache_key(p, params(), 0), cache_key(p, params(), 0));
  EXPECT_NE(cache_key(p, params(), 0), cache_key(p, params(), 1));
  auto warm = params();
  warm.temperature = 0.2;
  EXPECT_NE(cache_key(p, params(), 0), cache_key(p, warm, 0));
  EXPECT_EQ(cache_key(p, params(1), 0), cache_key(p, params(7), 0));
  // rebuilding the same messages through a JSON round trip keeps the key
  nlohmann::json j = nlohmann::json::parse(nlohmann::json{{"m", p.messages[0].text}}.dump());
  auto rebuilt = prompts::make_prompt({{prompts::Role::User, j["m"].get<std::string>()}});
  EXPECT_EQ(cache_key(rebuilt, params(), 0), cache_key(p, params(), 0));
  EXPECT_EQ(cache_key(p, params(), 0).size(), 64u);
}

TEST(Params, Validation) {
  EXPECT_THROW(validate_params(params(0)), GatewayError);
  auto p = params();
  p.temperature = -1;
  EXPECT_THROW(validate_params(p), GatewayError);
  EXPECT_NO_THROW(validate_params(params()));
}

TEST(BackendSpec, Parse) {
  EXPECT_EQ(parse_backend_spec("http").kind, "http");
  auto r = parse_backend_spec("replay:/tmp/x");
  EXPECT_EQ(r.kind, "replay");
  EXPECT_EQ(r.replay_dir, fs::path("/tmp/x"));
  EXPECT_THROW(parse_backend_spec("gpt"), GatewayError);
}

class HttpFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      last_body_ = nlohmann::json::parse(req.body);
      last_auth_ = req.get_header_value("Authorization");
      if (fail_with_ > 0 && failures_left_ > 0) {
        --failures_left_;
        res.status = fail_with_;
        res.set_content("{\"error\":\"nope\"}", "application/json");
        return;
      }
      nlohmann::json choices = nlohmann::json::array();
      for (int i = 0; i < last_body_["n"].get<int>(); ++i) {
        choices.push_back({{"index", i}, {"message", {{"role", "assistant"}, {"content", fmt::format("c{}", i)}}}});
      }
      res.set_content(nlohmann::json{{"choices", choices}, {"usage", {{"prompt_tokens", 5}, {"completion_tokens", 7}}}}
                          .dump(),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  HttpConfig config() const {
    HttpConfig c;
    c.api_base = fmt::format("http://127.0.0.1:{}/v1", port_);
    c.api_key = "secret";
    c.backoff_ms = 1;
    c.timeout_seconds = 5;
    return c;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  int fail_with_ = 0;
  int failures_left_ = 0;
  nlohmann::json last_body_;
  std::string last_auth_;
};

TEST_F(HttpFixture, SendsChatRequestWithN) {
  HttpBackend b(config());
  auto p = prompts::make_prompt({{prompts::Role::System, "sys"}, {prompts::Role::User, "usr"}});
  auto out = b.complete(p, params(3));
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[2].text, "c2");
  EXPECT_EQ(out[0].usage->completion_tokens, 7);
  EXPECT_EQ(last_body_["n"], 3);
  EXPECT_EQ(last_body_["messages"][0]["role"], "system");
  EXPECT_EQ(last_body_["messages"][1]["content"], "usr");
  EXPECT_EQ(last_auth_, "Bearer secret");
  EXPECT_EQ(hits_, 1);
}

TEST_F(HttpFixture, RetriesServerErrors) {
  fail_with_ = 503;
  failures_left_ = 2;
  HttpBackend b(config());
  EXPECT_EQ(b.complete(prompt("x"), params())[0].text, "c0");
  EXPECT_EQ(hits_, 3);
}

TEST_F(HttpFixture, GivesUpAfterThreeAttempts) {
  fail_with_ = 500;
  failures_left_ = 10;
  HttpBackend b(config());
  try {
    b.complete(prompt("x"), params());
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.code(), GatewayErrc::BackendError);
    EXPECT_EQ(e.status(), 500);
    EXPECT_NE(std::string(e.what()).find("nope"), std::string::npos);
  }
  EXPECT_EQ(hits_, 3);
}

TEST_F(HttpFixture, ClientErrorsAreNotRetried) {
  fail_with_ = 401;
  failures_left_ = 10;
  HttpBackend b(config());
  EXPECT_THROW(b.complete(prompt("x"), params()), GatewayError);
  EXPECT_EQ(hits_, 1);
}

TEST(Http, UnreachableHost) {
  HttpConfig c;
  c.api_base = "http://127.0.0.1:1/v1";
  c.backoff_ms = 1;
  c.timeout_seconds = 1;
  HttpBackend b(c);
  EXPECT_THROW(b.complete(prompt("x"), params()), GatewayError);
  c.api_base = "not a url";
  EXPECT_THROW(HttpBackend(c).complete(prompt("x"), params()), GatewayError);
}
