#pragma once

#include "neurochat/errors.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#ifndef NEUROCHAT_PROMPTS_DIR
#define NEUROCHAT_PROMPTS_DIR "prompts"
#endif

namespace neurochat {

// ---- prompts ------------------------------------------------------------------

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

struct PromptSet {
  std::string adaptive;  // prompts/neurochat_system.md
  std::string control;   // prompts/control_system.md
};

// Directory from NEUROCHAT_PROMPTS_DIR in the environment, else the build default.
inline std::string default_prompts_dir() {
  if (const char* env = std::getenv("NEUROCHAT_PROMPTS_DIR"); env && *env) return env;
  return NEUROCHAT_PROMPTS_DIR;
}

inline PromptSet load_prompts(const std::string& dir = default_prompts_dir()) {
  return PromptSet{read_file_bytes(dir + "/neurochat_system.md"), read_file_bytes(dir + "/control_system.md")};
}

// ---- turns and injection ----------------------------------------------------------

enum class Role { kSystem, kUser, kAssistant };
enum class Mode { kAdaptive, kControl };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

inline const char* to_string(Mode m) { return m == Mode::kAdaptive ? "adaptive" : "control"; }

inline Role parse_role(const std::string& s) {
  if (s == "system") return Role::kSystem;
  if (s == "user") return Role::kUser;
  if (s == "assistant") return Role::kAssistant;
  throw FormatError("unknown role " + s);
}

inline Mode parse_mode(const std::string& s) {
  if (s == "adaptive") return Mode::kAdaptive;
  if (s == "control") return Mode::kControl;
  throw FormatError("unknown mode " + s);
}

inline constexpr std::string_view kInjectionMarker = "[normalized_engagement_score:";

struct ChatTurn {
  Role role = Role::kUser;
  std::string visible_text;
  std::optional<double> injected_score;  // user turns in adaptive mode only
  Mode mode = Mode::kControl;
  double t_ms = 0.0;
  bool score_default = false;  // injected score was the no-data default
  // Assistant turns: which system prompt produced it, and how long it took.
  std::string prompt_sha256;
  std::string model;
  double latency_ms = 0.0;

  friend bool operator==(const ChatTurn&, const ChatTurn&) = default;
};

inline double round_score(double score) { return std::round(score * 100.0) / 100.0; }

inline std::string format_score(double score) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", round_score(score));
  return buf;
}

// Wire content for an adaptive user turn: the visible text followed by the
// hidden score block. The stored visible text stays untouched.
inline std::string inject_engagement(std::string_view user_text, double score) {
  if (!(std::isfinite(score) && score >= 0.0 && score <= 1.0)) {
    throw ContractViolation("engagement score must lie in [0, 1]");
  }
  std::string out(user_text);
  out += "\n\n";
  out += kInjectionMarker;
  out += " ";
  out += format_score(score);
  out += "]";
  return out;
}

// Score carried by a wire message, if any (the last marker wins).
inline std::optional<double> parse_injected_score(std::string_view content) {
  const auto pos = content.rfind(kInjectionMarker);
  if (pos == std::string_view::npos) return std::nullopt;
  auto rest = content.substr(pos + kInjectionMarker.size());
  const auto close = rest.find(']');
  if (close == std::string_view::npos) return std::nullopt;
  std::string number(rest.substr(0, close));
  char* end = nullptr;
  const double v = std::strtod(number.c_str(), &end);
  if (end == number.c_str()) return std::nullopt;
  return v;
}

inline bool contains_marker(std::string_view text) { return text.find(kInjectionMarker) != std::string_view::npos; }

inline std::string wire_content(const ChatTurn& turn) {
  if (turn.role == Role::kUser && turn.mode == Mode::kAdaptive && turn.injected_score) {
    return inject_engagement(turn.visible_text, *turn.injected_score);
  }
  return turn.visible_text;
}

// ---- request assembly ------------------------------------------------------------

struct WireMessage {
  Role role;
  std::string content;
};

struct PromptBundle {
  std::string system_prompt;
  std::vector<WireMessage> messages;  // prior turns then the new user message
  std::string model = "gpt-4-turbo";
  std::optional<double> temperature;

  nlohmann::json to_request() const {
    nlohmann::json msgs = nlohmann::json::array();
    msgs.push_back({{"role", "system"}, {"content", system_prompt}});
    for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    nlohmann::json req{{"model", model}, {"messages", std::move(msgs)}};
    if (temperature) req["temperature"] = *temperature;
    return req;
  }
};

inline const std::string& system_prompt_for(const PromptSet& prompts, Mode mode) {
  return mode == Mode::kAdaptive ? prompts.adaptive : prompts.control;
}

// System prompt of `next.mode`, then history and the new user turn. Roles
// after the system message must alternate, so history (which may open with
// an assistant greeting) has to end on an assistant turn.
inline PromptBundle build_bundle(const PromptSet& prompts, const std::vector<ChatTurn>& history, const ChatTurn& next,
                                 std::string model, std::optional<double> temperature) {
  if (next.role != Role::kUser) throw ContractViolation("new turn must be a user turn");
  PromptBundle b;
  b.system_prompt = system_prompt_for(prompts, next.mode);
  b.model = std::move(model);
  b.temperature = temperature;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& t = history[i];
    if (t.role == Role::kSystem) throw ContractViolation("system turns are not part of chat history");
    if (i > 0 && t.role == history[i - 1].role) throw ContractViolation("chat history must alternate user/assistant");
    // Control requests carry no scores at all, even from earlier adaptive turns.
    b.messages.push_back({t.role, next.mode == Mode::kAdaptive ? wire_content(t) : t.visible_text});
  }
  if (!history.empty() && history.back().role != Role::kAssistant) {
    throw ContractViolation("chat history must end with an assistant turn");
  }
  b.messages.push_back({Role::kUser, wire_content(next)});
  return b;
}

// ---- clients ----------------------------------------------------------------------

// Connection-level failure; send_chat retries these.
struct TransportError : GatewayError {
  using GatewayError::GatewayError;
};

class ChatClient {
public:
  virtual ~ChatClient() = default;
  // Returns the assistant message content for a chat-completion request body.
  virtual std::string complete(const nlohmann::json& request) = 0;
};

// Deterministic stand-in for the provider. The reply is a function of the
// system prompt hash and the last user content only; it reports the score
// it found in that content as `score_seen=<0.xx>` or `score_seen=none`.
class MockLlm : public ChatClient {
public:
  MockLlm() = default;
  explicit MockLlm(std::map<std::string, std::string> canned) : canned_(std::move(canned)) {}

  std::string complete(const nlohmann::json& request) override {
    const auto& msgs = request.at("messages");
    if (!msgs.is_array() || msgs.empty()) throw GatewayError("mock: request has no messages", 400);
    std::string system;
    std::string last_user;
    for (const auto& m : msgs) {
      const auto role = m.at("role").get<std::string>();
      if (role == "system") system = m.at("content").get<std::string>();
      if (role == "user") last_user = m.at("content").get<std::string>();
    }
    if (auto it = canned_.find(last_user); it != canned_.end()) return it->second;

    const auto score = parse_injected_score(last_user);
    std::string reply = "**Mock tutor** (prompt " + sha256_hex(system).substr(0, 12) + ")\n\n";
    reply += "score_seen=" + (score ? format_score(*score) : std::string("none")) + "\n\n";
    reply += "echo=" + sha256_hex(last_user).substr(0, 16) + "\n";
    return reply;
  }

private:
  std::map<std::string, std::string> canned_;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds backoff{250};  // doubles after each failure
};

struct ChatExchange {
  nlohmann::json request;
  std::string response;
  double latency_ms = 0.0;
  int attempts = 0;
};

// Sends the bundle, retrying transport failures. Throws GatewayError when
// the provider rejects the request or every attempt fails.
inline ChatExchange send_chat(const PromptBundle& bundle, ChatClient& client, RetryPolicy retry = {}) {
  ChatExchange ex;
  ex.request = bundle.to_request();
  auto backoff = retry.backoff;
  const auto t0 = std::chrono::steady_clock::now();
  for (int attempt = 1;; ++attempt) {
    ex.attempts = attempt;
    try {
      ex.response = client.complete(ex.request);
      break;
    } catch (const TransportError& e) {
      if (attempt >= retry.attempts) {
        throw GatewayError("LLM endpoint unreachable after " + std::to_string(attempt) + " attempts: " + e.what(),
                           e.http_status);
      }
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  ex.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return ex;
}

}  // namespace neurochat
