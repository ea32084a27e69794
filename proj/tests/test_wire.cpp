#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "gkp/backends/wire.hpp"

using namespace gkp;

namespace {

/// Completion service on localhost; `handler` writes the reply.
class LocalServer {
public:
  explicit LocalServer(std::function<void(const Json &, httplib::Response &)> handler)
      : handler_(std::move(handler)) {
    server_.Post("/v1/completions", [this](const httplib::Request &req, httplib::Response &res) {
      ++hits;
      last_auth = req.get_header_value("Authorization");
      last_body = Json::parse(req.body);
      handler_(last_body, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::atomic<int> hits{0};
  std::string last_auth;
  Json last_body;

private:
  httplib::Server server_;
  std::function<void(const Json &, httplib::Response &)> handler_;
  int port_ = 0;
  std::thread thread_;
};

WireConfig config_for(const std::string &url) {
  WireConfig c;
  c.base_url = url;
  c.model = "test-model";
  c.api_key = "secret";
  c.initial_backoff = std::chrono::milliseconds(0);
  c.timeout = std::chrono::seconds(5);
  return c;
}

WireBackend backend_for(const std::string &url, WireConfig c) {
  c.base_url = url;
  return WireBackend({"wire", BackendKind::wire, "test-model"}, std::move(c));
}

Json echo_response(const std::string &prompt) {
  // Tokens are single characters groups split at spaces, with offsets.
  Json tokens = Json::array(), logprobs = Json::array(), offsets = Json::array();
  std::size_t i = 0;
  bool first = true;
  while (i < prompt.size()) {
    std::size_t j = prompt.find(' ', i + 1);
    if (j == std::string::npos) j = prompt.size();
    tokens.push_back(prompt.substr(i, j - i));
    offsets.push_back(i);
    logprobs.push_back(first ? Json(nullptr) : Json(-0.25 * static_cast<double>(tokens.size())));
    first = false;
    i = j;
  }
  return {{"choices",
           {{{"text", prompt},
             {"logprobs", {{"tokens", tokens}, {"token_logprobs", logprobs}, {"text_offset", offsets}}}}}}};
}

} // namespace

TEST(Wire, GenerateSendsProtocolFields) {
  LocalServer server([](const Json &, httplib::Response &res) {
    res.set_content(Json{{"choices", {{{"text", " A brick is a cube.\nignored"}, {"finish_reason", "stop"}}}}}.dump(),
                    "application/json");
  });
  auto backend = backend_for(server.url(), config_for(""));
  const SamplingParams p{64, 0.5, 1.0, {"\n"}, 3};
  const auto c = generate(backend, "Input: x\nKnowledge:", p);
  EXPECT_EQ(c.text, " A brick is a cube.");
  EXPECT_EQ(c.finish_reason, FinishReason::stop);
  const auto &body = server.last_body;
  for (const char *field : {"model", "prompt", "max_tokens", "top_p", "temperature", "stop", "logprobs", "echo", "n"})
    EXPECT_TRUE(body.contains(field)) << field;
  EXPECT_EQ(body["model"], "test-model");
  EXPECT_EQ(body["top_p"], 0.5);
  EXPECT_EQ(body["max_tokens"], 64);
  EXPECT_EQ(server.last_auth, "Bearer secret");
}

TEST(Wire, ScoringAlignsByOffset) {
  LocalServer server([](const Json &body, httplib::Response &res) {
    res.set_content(echo_response(body["prompt"].get<std::string>()).dump(), "application/json");
  });
  auto backend = backend_for(server.url(), config_for(""));
  const auto scores = score_continuation(backend, "Most motorcycles have", "two tires");
  EXPECT_TRUE(server.last_body["echo"].get<bool>());
  EXPECT_EQ(server.last_body["max_tokens"], 0);
  EXPECT_EQ(server.last_body["prompt"], "Most motorcycles have two tires");
  ASSERT_EQ(scores.size(), 2u);
  EXPECT_EQ(scores[0].token, " two");
  EXPECT_EQ(scores[1].token, " tires");
  EXPECT_DOUBLE_EQ(scores[0].logprob, -1.0);
  EXPECT_DOUBLE_EQ(scores[1].logprob, -1.25);
}

TEST(Wire, WholeSentenceScoringDropsLeadingNull) {
  LocalServer server([](const Json &body, httplib::Response &res) {
    res.set_content(echo_response(body["prompt"].get<std::string>()).dump(), "application/json");
  });
  auto backend = backend_for(server.url(), config_for(""));
  const auto scores = score_continuation(backend, "", "Most motorcycles have two tires.");
  EXPECT_EQ(scores.size(), 4u);
}

TEST(Wire, RetriesServerErrorsThenSucceeds) {
  std::atomic<int> calls{0};
  LocalServer server([&](const Json &, httplib::Response &res) {
    if (calls++ < 2) {
      res.status = 503;
      return;
    }
    res.set_content(Json{{"choices", {{{"text", "ok"}}}}}.dump(), "application/json");
  });
  auto backend = backend_for(server.url(), config_for(""));
  EXPECT_EQ(generate(backend, "P", {}).text, "ok");
  EXPECT_EQ(server.hits, 3);
}

TEST(Wire, UnreachableAfterBoundedAttempts) {
  LocalServer server([](const Json &, httplib::Response &res) { res.status = 500; });
  auto backend = backend_for(server.url(), config_for(""));
  try {
    generate(backend, "P", {});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::backend_unreachable);
    EXPECT_EQ(e.family(), ErrorFamily::backend);
  }
  EXPECT_EQ(server.hits, 3);
}

TEST(Wire, ClientErrorIsNotRetried) {
  LocalServer server([](const Json &, httplib::Response &res) { res.status = 400; });
  auto backend = backend_for(server.url(), config_for(""));
  try {
    generate(backend, "P", {});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::backend_protocol);
  }
  EXPECT_EQ(server.hits, 1);
}

TEST(Wire, ConnectionRefused) {
  std::string url;
  {
    LocalServer gone([](const Json &, httplib::Response &) {});
    url = gone.url();
  }
  auto c = config_for("");
  c.timeout = std::chrono::seconds(1);
  auto backend = backend_for(url, c);
  try {
    generate(backend, "P", {});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::backend_unreachable);
  }
}

TEST(Wire, RequestCap) {
  LocalServer server([](const Json &, httplib::Response &res) {
    res.set_content(Json{{"choices", {{{"text", "ok"}}}}}.dump(), "application/json");
  });
  auto c = config_for("");
  c.request_cap = 2;
  auto backend = backend_for(server.url(), c);
  generate(backend, "P", {});
  generate(backend, "P", {});
  try {
    generate(backend, "P", {});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::budget_exhausted);
  }
  EXPECT_EQ(server.hits, 2);
}

TEST(Wire, MissingEndpointIsConfigError) {
  ::unsetenv("GKP_ENDPOINT");
  try {
    WireBackend({"wire", BackendKind::wire, "m"}, WireConfig{});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.family(), ErrorFamily::config);
  }
}

TEST(Wire, EnvironmentSuppliesEndpoint) {
  ::setenv("GKP_ENDPOINT", "http://127.0.0.1:1", 1);
  ::setenv("GKP_API_KEY", "from-env", 1);
  WireConfig c;
  c.apply_environment();
  EXPECT_EQ(c.base_url, "http://127.0.0.1:1");
  EXPECT_EQ(c.api_key, "from-env");
  ::unsetenv("GKP_ENDPOINT");
  ::unsetenv("GKP_API_KEY");
}
