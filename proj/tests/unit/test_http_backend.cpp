#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "relagent/error.hpp"
#include "relagent/http_backend.hpp"

using namespace relagent;

namespace {

/// Local OpenAI-compatible endpoint whose behaviour each test scripts.
class FakeServer {
public:
  explicit FakeServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post(R"(/v1/(chat/completions|embeddings))", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

ChatRequest request() {
  ChatRequest r;
  r.model_id = "gpt-test";
  r.messages = {{ChatRole::system, "sys"}, {ChatRole::user, "classify"}};
  return r;
}

HttpBackendOptions options(const FakeServer& server, std::vector<std::chrono::milliseconds>* slept) {
  HttpBackendOptions o;
  o.base_url = server.base_url();
  o.api_key = "secret";
  o.timeout = std::chrono::seconds(5);
  o.sleep = [slept](std::chrono::milliseconds d) {
    if (slept) slept->push_back(d);
  };
  return o;
}

const char* kChatReply =
    R"({"model":"gpt-test","choices":[{"message":{"role":"assistant","content":"acquired_by\n"}}],)"
    R"("usage":{"prompt_tokens":12,"completion_tokens":3}})";

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::Precondition;
}

}  // namespace

TEST_CASE("chat completion over HTTP") {
  std::string auth, path;
  json body;
  FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    path = req.path;
    body = json::parse(req.body);
    res.set_content(kChatReply, "application/json");
  });
  OpenAiCompatibleBackend backend(options(server, nullptr));
  auto r = backend.complete(request());
  CHECK(r.content == "acquired_by");
  CHECK(r.model_id == "gpt-test");
  CHECK(r.usage.prompt == 12);
  CHECK(r.usage.completion == 3);
  CHECK_FALSE(r.from_cache);
  CHECK(auth == "Bearer secret");
  CHECK(path == "/v1/chat/completions");
  CHECK(body["model"] == "gpt-test");
  CHECK(body["temperature"] == 0.0);
  CHECK(body["messages"].size() == 2);
  CHECK(body["messages"][0]["role"] == "system");
}

TEST_CASE("embeddings over HTTP") {
  FakeServer server([](const httplib::Request& req, httplib::Response& res) {
    auto in = json::parse(req.body);
    json data = json::array();
    for (std::size_t i = 0; i < in["input"].size(); ++i) {
      data.push_back({{"index", i}, {"embedding", {double(i), 1.0, 2.0}}});
    }
    res.set_content(json{{"data", data}, {"model", "emb"}}.dump(), "application/json");
  });
  OpenAiCompatibleBackend backend(options(server, nullptr));
  auto r = backend.embed({"emb", {"a", "b", "c"}});
  REQUIRE(r.vectors.size() == 3);
  for (const auto& v : r.vectors) CHECK(v.size() == 3);
  CHECK(r.vectors[2][0] == 2.0f);
}

TEST_CASE("bad credentials fail without retrying") {
  std::atomic<int> calls{0};
  FakeServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 401;
  });
  std::vector<std::chrono::milliseconds> slept;
  OpenAiCompatibleBackend backend(options(server, &slept));
  CHECK(code_of([&] { backend.complete(request()); }) == Errc::AuthError);
  CHECK(calls == 1);
  CHECK(slept.empty());
}

TEST_CASE("missing credential is an auth error before any request") {
  FakeServer server([](const httplib::Request&, httplib::Response& res) { res.set_content(kChatReply, "application/json"); });
  auto o = options(server, nullptr);
  o.api_key.clear();
  OpenAiCompatibleBackend backend(o);
  CHECK(code_of([&] { backend.complete(request()); }) == Errc::AuthError);
}

TEST_CASE("rate limiting retries with bounded exponential backoff") {
  std::atomic<int> calls{0};
  FakeServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 429;
  });
  std::vector<std::chrono::milliseconds> slept;
  OpenAiCompatibleBackend backend(options(server, &slept));
  CHECK(code_of([&] { backend.complete(request()); }) == Errc::RateLimited);
  CHECK(calls == 6);
  REQUIRE(slept.size() == 5);
  for (std::size_t i = 0; i < slept.size(); ++i) {
    const double base = 1000.0 * std::pow(2.0, double(i));
    CHECK(double(slept[i].count()) <= base);
    CHECK(double(slept[i].count()) >= 0.5 * base - 1);
  }
}

TEST_CASE("transient server errors are retried") {
  std::atomic<int> calls{0};
  FakeServer server([&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 3) {
      res.status = 503;
      return;
    }
    res.set_content(kChatReply, "application/json");
  });
  std::vector<std::chrono::milliseconds> slept;
  OpenAiCompatibleBackend backend(options(server, &slept));
  CHECK(backend.complete(request()).content == "acquired_by");
  CHECK(calls == 3);
  CHECK(slept.size() == 2);
}

TEST_CASE("persistent server errors end in a transport error") {
  FakeServer server([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  auto o = options(server, nullptr);
  o.retry.max_retries = 2;
  OpenAiCompatibleBackend backend(o);
  CHECK(code_of([&] { backend.complete(request()); }) == Errc::TransportError);
}

TEST_CASE("client errors and malformed bodies are transport errors") {
  FakeServer bad_request([](const httplib::Request&, httplib::Response& res) { res.status = 400; });
  OpenAiCompatibleBackend b1(options(bad_request, nullptr));
  CHECK(code_of([&] { b1.complete(request()); }) == Errc::TransportError);

  FakeServer garbage([](const httplib::Request&, httplib::Response& res) { res.set_content("{}", "application/json"); });
  OpenAiCompatibleBackend b2(options(garbage, nullptr));
  CHECK(code_of([&] { b2.complete(request()); }) == Errc::TransportError);
}

TEST_CASE("unreachable host is a transport error") {
  HttpBackendOptions o;
  o.base_url = "http://127.0.0.1:1/v1";
  o.api_key = "k";
  o.retry.max_retries = 1;
  o.timeout = std::chrono::seconds(1);
  o.sleep = [](std::chrono::milliseconds) {};
  OpenAiCompatibleBackend backend(o);
  CHECK(code_of([&] { backend.complete(request()); }) == Errc::TransportError);
}

TEST_CASE("retry delays stay inside the jitter window") {
  RetryPolicy p;
  std::mt19937_64 rng(1);
  for (int retry = 0; retry < 5; ++retry) {
    for (int k = 0; k < 100; ++k) {
      auto d = p.delay_for(retry, rng).count();
      const double base = 1000.0 * std::pow(2.0, retry);
      CHECK(d <= base);
      CHECK(d >= 0.5 * base);
    }
  }
}
