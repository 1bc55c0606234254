#include "neurochat/llm/gateway.hpp"
#include "neurochat/llm/http_client.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <random>

using namespace neurochat;

namespace {

const char* kAdaptiveSha = "0e9946e4c59bd37eed2a24cf01897e27bc8927cca85ed4ab54582f424a6e3a2a";
const char* kControlSha = "96cecbfdf9770766ff96c8348d3ad55607f5132c92d5e386d844ea6a9ec3a072";

ChatTurn user(std::string text, Mode mode, std::optional<double> score = std::nullopt) {
  ChatTurn t;
  t.role = Role::kUser;
  t.visible_text = std::move(text);
  t.mode = mode;
  t.injected_score = score;
  return t;
}

ChatTurn assistant(std::string text) {
  ChatTurn t;
  t.role = Role::kAssistant;
  t.visible_text = std::move(text);
  return t;
}

class FailingClient : public ChatClient {
public:
  std::string complete(const nlohmann::json&) override {
    ++calls;
    throw TransportError("connection refused");
  }
  int calls = 0;
};

class FlakyClient : public ChatClient {
public:
  std::string complete(const nlohmann::json& req) override {
    if (++calls < 3) throw TransportError("reset");
    return inner.complete(req);
  }
  int calls = 0;
  MockLlm inner;
};

}  // namespace

// ---- prompts ---------------------------------------------------------------------------

TEST(Prompts, ChecksumsMatchShippedResources) {
  const auto p = load_prompts();
  EXPECT_EQ(sha256_hex(p.adaptive), kAdaptiveSha);
  EXPECT_EQ(sha256_hex(p.control), kControlSha);
  EXPECT_EQ(p.adaptive.rfind("You are an encouraging tutor", 0), 0u);
  EXPECT_EQ(p.control.rfind("You are an AI Tutor designed to assist learners", 0), 0u);
  EXPECT_NE(p.adaptive.find("Respond in Markdown"), std::string::npos);
  EXPECT_NE(p.control.find("Respond in Markdown"), std::string::npos);
}

TEST(Prompts, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Prompts, MissingDirectoryIsConfigError) { EXPECT_THROW(load_prompts("/nonexistent"), ConfigError); }

// ---- injection ---------------------------------------------------------------------------

TEST(Inject, Examples) {
  const auto low = inject_engagement("What was the Taiping Rebellion?", 0.10);
  EXPECT_EQ(low, "What was the Taiping Rebellion?\n\n[normalized_engagement_score: 0.10]");
  const auto high = inject_engagement("anything", 1.0);
  EXPECT_TRUE(high.ends_with("[normalized_engagement_score: 1.00]"));
  EXPECT_TRUE(inject_engagement("x", 0.0).ends_with("[normalized_engagement_score: 0.00]"));
  EXPECT_TRUE(inject_engagement("x", 0.426).ends_with("0.43]"));
}

TEST(Inject, OutOfRangeIsContractViolation) {
  EXPECT_THROW(inject_engagement("x", 1.01), ContractViolation);
  EXPECT_THROW(inject_engagement("x", -0.01), ContractViolation);
  EXPECT_THROW(inject_engagement("x", std::nan("")), ContractViolation);
}

TEST(Inject, ParseRoundTripProperty) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double s = u(rng);
    const auto parsed = parse_injected_score(inject_engagement("question " + std::to_string(i), s));
    ASSERT_TRUE(parsed);
    EXPECT_EQ(format_score(*parsed), format_score(s));
    EXPECT_NEAR(*parsed, std::round(s * 100.0) / 100.0, 1e-12);
  }
  EXPECT_FALSE(parse_injected_score("no marker here"));
}

TEST(Inject, ControlModeWireEqualsVisible) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 500; ++i) {
    std::string text;
    const int n = std::uniform_int_distribution<int>(0, 100)(rng);
    for (int k = 0; k < n; ++k) text.push_back(static_cast<char>(std::uniform_int_distribution<int>(32, 126)(rng)));
    auto t = user(text, Mode::kControl);
    EXPECT_EQ(wire_content(t), text);
    // A stray score on a control turn must not leak into the wire either.
    t.injected_score = 0.5;
    EXPECT_EQ(wire_content(t), text);
  }
}

TEST(Inject, AdaptiveWireCarriesHiddenScore) {
  const auto t = user("hello", Mode::kAdaptive, 0.42);
  EXPECT_EQ(wire_content(t), "hello\n\n[normalized_engagement_score: 0.42]");
  EXPECT_FALSE(contains_marker(t.visible_text));
}

// ---- bundle assembly ---------------------------------------------------------------------

TEST(Bundle, ThreePriorTurnsGiveFiveMessages) {
  const auto prompts = load_prompts();
  const std::vector<ChatTurn> history{assistant("welcome"), user("q1", Mode::kAdaptive, 0.3), assistant("a1")};
  const auto b = build_bundle(prompts, history, user("q2", Mode::kAdaptive, 0.9), "gpt-4-turbo", std::nullopt);
  const auto req = b.to_request();
  const auto& msgs = req["messages"];
  ASSERT_EQ(msgs.size(), 5u);
  EXPECT_EQ(msgs[0]["role"], "system");
  EXPECT_EQ(msgs[0]["content"], prompts.adaptive);
  EXPECT_EQ(msgs[1]["content"], "welcome");
  EXPECT_EQ(msgs[2]["content"], "q1\n\n[normalized_engagement_score: 0.30]");
  EXPECT_EQ(msgs[3]["role"], "assistant");
  EXPECT_EQ(msgs[3]["content"], "a1");
  EXPECT_EQ(msgs[4]["content"], "q2\n\n[normalized_engagement_score: 0.90]");
  EXPECT_EQ(req["model"], "gpt-4-turbo");
  EXPECT_FALSE(req.contains("temperature"));
}

TEST(Bundle, ControlModeUsesControlPrompt) {
  const auto prompts = load_prompts();
  const auto b = build_bundle(prompts, {}, user("hi", Mode::kControl), "m", 0.2);
  const auto req = b.to_request();
  EXPECT_EQ(req["messages"][0]["content"], prompts.control);
  EXPECT_EQ(req["messages"][1]["content"], "hi");
  EXPECT_DOUBLE_EQ(req["temperature"].get<double>(), 0.2);
}

TEST(Bundle, ControlRequestStripsEarlierScores) {
  const auto prompts = load_prompts();
  const std::vector<ChatTurn> history{user("q1", Mode::kAdaptive, 0.3), assistant("a1")};
  const auto req = build_bundle(prompts, history, user("q2", Mode::kControl), "m", std::nullopt).to_request();
  for (const auto& m : req["messages"]) EXPECT_FALSE(contains_marker(m["content"].get<std::string>()));
  EXPECT_EQ(req["messages"][1]["content"], "q1");
}

TEST(Bundle, RejectsBrokenAlternation) {
  const auto prompts = load_prompts();
  EXPECT_THROW(build_bundle(prompts, {user("a", Mode::kControl)}, user("b", Mode::kControl), "m", std::nullopt),
               ContractViolation);
  EXPECT_THROW(build_bundle(prompts, {assistant("a"), assistant("b")}, user("c", Mode::kControl), "m", std::nullopt),
               ContractViolation);
  EXPECT_THROW(build_bundle(prompts, {}, assistant("b"), "m", std::nullopt), ContractViolation);
}

// ---- mock --------------------------------------------------------------------------------

TEST(MockLlm, EchoesScore) {
  const auto prompts = load_prompts();
  MockLlm mock;
  const auto adaptive = send_chat(build_bundle(prompts, {}, user("q", Mode::kAdaptive, 0.42), "m", std::nullopt), mock);
  EXPECT_NE(adaptive.response.find("score_seen=0.42"), std::string::npos);
  const auto control = send_chat(build_bundle(prompts, {}, user("q", Mode::kControl), "m", std::nullopt), mock);
  EXPECT_NE(control.response.find("score_seen=none"), std::string::npos);
  EXPECT_NE(adaptive.response, control.response);
}

TEST(MockLlm, DeterministicAndHistoryIndependent) {
  const auto prompts = load_prompts();
  MockLlm a, b;
  const auto next = user("same question", Mode::kAdaptive, 0.7);
  const auto r1 = send_chat(build_bundle(prompts, {}, next, "m", std::nullopt), a).response;
  const auto r2 = send_chat(build_bundle(prompts, {}, next, "m", std::nullopt), b).response;
  const auto r3 = send_chat(build_bundle(prompts, {user("x", Mode::kAdaptive, 0.1), assistant("y")}, next, "m",
                                         std::nullopt),
                            a)
                      .response;
  EXPECT_EQ(r1, r2);
  EXPECT_EQ(r1, r3);
}

TEST(MockLlm, CannedMapKeyedOnAugmentedContent) {
  const auto prompts = load_prompts();
  MockLlm mock(std::map<std::string, std::string>{{"hi\n\n[normalized_engagement_score: 0.25]", "canned!"}});
  EXPECT_EQ(send_chat(build_bundle(prompts, {}, user("hi", Mode::kAdaptive, 0.25), "m", std::nullopt), mock).response,
            "canned!");
  EXPECT_NE(send_chat(build_bundle(prompts, {}, user("hi", Mode::kAdaptive, 0.26), "m", std::nullopt), mock).response,
            "canned!");
}

// ---- retries -----------------------------------------------------------------------------

TEST(SendChat, EndpointDownFailsAfterThreeAttempts) {
  const auto prompts = load_prompts();
  FailingClient client;
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(send_chat(build_bundle(prompts, {}, user("q", Mode::kControl), "m", std::nullopt), client,
                         RetryPolicy{3, std::chrono::milliseconds(10)}),
               GatewayError);
  EXPECT_EQ(client.calls, 3);
  // Backoff 10 ms then 20 ms.
  EXPECT_GE(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(30));
}

TEST(SendChat, RecoversOnThirdAttempt) {
  const auto prompts = load_prompts();
  FlakyClient client;
  const auto ex = send_chat(build_bundle(prompts, {}, user("q", Mode::kControl), "m", std::nullopt), client,
                            RetryPolicy{3, std::chrono::milliseconds(1)});
  EXPECT_EQ(ex.attempts, 3);
  EXPECT_NE(ex.response.find("score_seen=none"), std::string::npos);
  EXPECT_GE(ex.latency_ms, 0.0);
}

// ---- HTTP client against a local fake provider --------------------------------------------

namespace {
struct FakeProvider {
  httplib::Server server;
  int port = 0;
  std::jthread thread;
  std::atomic<int> hits{0};
  nlohmann::json last_request;
  std::string last_auth;
  std::mutex mu;

  FakeProvider() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      auto body = nlohmann::json::parse(req.body);
      {
        std::lock_guard lock(mu);
        last_request = body;
        last_auth = req.get_header_value("Authorization");
      }
      if (body["model"] == "bad-model") {
        res.status = 400;
        res.set_content(R"({"error":{"message":"model not found"}})", "application/json");
        return;
      }
      MockLlm mock;
      nlohmann::json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", mock.complete(body)}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::jthread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeProvider() { server.stop(); }
};
}  // namespace

TEST(HttpChatClient, TalksToCompatibleEndpoint) {
  FakeProvider fake;
  HttpChatClient client("http://127.0.0.1:" + std::to_string(fake.port) + "/v1/", "sk-test");
  const auto prompts = load_prompts();
  const auto ex =
      send_chat(build_bundle(prompts, {}, user("q", Mode::kAdaptive, 0.61), "gpt-4-turbo", std::nullopt), client);
  EXPECT_NE(ex.response.find("score_seen=0.61"), std::string::npos);
  std::lock_guard lock(fake.mu);
  EXPECT_EQ(fake.last_auth, "Bearer sk-test");
  EXPECT_EQ(fake.last_request["messages"][0]["content"], prompts.adaptive);
}

TEST(HttpChatClient, NonSuccessCarriesProviderMessage) {
  FakeProvider fake;
  HttpChatClient client("http://127.0.0.1:" + std::to_string(fake.port) + "/v1", "");
  const auto prompts = load_prompts();
  try {
    send_chat(build_bundle(prompts, {}, user("q", Mode::kControl), "bad-model", std::nullopt), client);
    FAIL() << "expected GatewayError";
  } catch (const TransportError&) {
    FAIL() << "HTTP errors are not transport errors";
  } catch (const GatewayError& e) {
    EXPECT_EQ(e.http_status, 400);
    EXPECT_NE(std::string(e.what()).find("model not found"), std::string::npos);
  }
  EXPECT_EQ(fake.hits.load(), 1);  // no retry on HTTP errors
}

TEST(HttpChatClient, DownEndpointIsGatewayErrorAfterRetries) {
  // Nothing listens on port 1, so every connect is refused.
  HttpChatClient client("http://127.0.0.1:1/v1", "");
  const auto prompts = load_prompts();
  EXPECT_THROW(send_chat(build_bundle(prompts, {}, user("q", Mode::kControl), "m", std::nullopt), client,
                         RetryPolicy{3, std::chrono::milliseconds(5)}),
               GatewayError);
}

TEST(HttpChatClient, BaseUrlSplitting) {
  HttpChatClient a("https://api.openai.com/v1", "");
  EXPECT_EQ(a.origin(), "https://api.openai.com");
  EXPECT_EQ(a.path_prefix(), "/v1");
  HttpChatClient b("http://localhost:8080", "");
  EXPECT_EQ(b.path_prefix(), "");
  EXPECT_THROW(HttpChatClient("localhost:8080", ""), ConfigError);
}
