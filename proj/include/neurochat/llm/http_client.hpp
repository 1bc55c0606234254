#pragma once

// Chat-completion client for OpenAI-compatible endpoints.
// Base URL and key come from NEUROCHAT_LLM_BASE_URL / NEUROCHAT_LLM_API_KEY.

#include "neurochat/llm/gateway.hpp"

#include <httplib.h>

#include <cstdlib>
#include <string>

namespace neurochat {

inline constexpr const char* kDefaultLlmBaseUrl = "https://api.openai.com/v1";

class HttpChatClient : public ChatClient {
public:
  // `base_url` like "https://api.openai.com/v1"; requests go to <base>/chat/completions.
  HttpChatClient(std::string base_url, std::string api_key, std::chrono::seconds timeout = std::chrono::seconds(120))
      : api_key_(std::move(api_key)), timeout_(timeout) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("LLM base URL needs a scheme: " + base_url);
    const auto path_start = base_url.find('/', scheme_end + 3);
    origin_ = base_url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }

  static HttpChatClient from_env() {
    const char* base = std::getenv("NEUROCHAT_LLM_BASE_URL");
    const char* key = std::getenv("NEUROCHAT_LLM_API_KEY");
    return HttpChatClient(base && *base ? base : kDefaultLlmBaseUrl, key ? key : "");
  }

  std::string complete(const nlohmann::json& request) override {
    httplib::Client cli(origin_);
    cli.set_connection_timeout(std::chrono::seconds(10));
    cli.set_read_timeout(timeout_);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = cli.Post(prefix_ + "/chat/completions", headers, request.dump(), "application/json");
    if (!res) throw TransportError("transport failure: " + httplib::to_string(res.error()));

    auto body = nlohmann::json::parse(res->body, nullptr, false);
    if (res->status < 200 || res->status >= 300) {
      std::string message = "provider returned HTTP " + std::to_string(res->status);
      if (!body.is_discarded() && body.contains("error") && body["error"].is_object() &&
          body["error"].contains("message") && body["error"]["message"].is_string()) {
        message += ": " + body["error"]["message"].get<std::string>();
      }
      throw GatewayError(message, res->status);
    }
    try {
      return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw GatewayError("provider response missing choices[0].message.content", res->status);
    }
  }

  const std::string& origin() const { return origin_; }
  const std::string& path_prefix() const { return prefix_; }

private:
  std::string origin_;
  std::string prefix_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

}  // namespace neurochat
