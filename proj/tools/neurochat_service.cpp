// Session service: HTTP API under /api/v1 plus the live engagement stream.

#include "neurochat/config.hpp"
#include "neurochat/llm/http_client.hpp"
#include "neurochat/service/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  using namespace neurochat;

  CLI::App app{"neurochat session service"};
  std::string source;
  std::string data_dir = "neurochat-data";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string config_path;
  std::string llm = "auto";
  std::string prompts_dir = default_prompts_dir();
  app.add_option("--source", source, "start a session on this source (bridge://host:port, replay://file.csv, synth://spec.json)");
  app.add_option("--data-dir", data_dir, "session storage directory")->capture_default_str();
  app.add_option("--host", host, "listen address")->capture_default_str();
  app.add_option("--port", port, "listen port")->capture_default_str()->check(CLI::Range(1, 65535));
  app.add_option("--config", config_path, "INI file with signal and engine parameters")->check(CLI::ExistingFile);
  app.add_option("--llm", llm, "mock, http, or auto (http when NEUROCHAT_LLM_API_KEY is set)")
      ->capture_default_str()
      ->check(CLI::IsMember({"auto", "mock", "http"}));
  app.add_option("--prompts", prompts_dir, "directory holding the system prompts")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    SessionDeps deps;
    deps.config = config_path.empty() ? EngineConfig{} : load_config(config_path);
    deps.prompts = load_prompts(prompts_dir);
    const char* key = std::getenv("NEUROCHAT_LLM_API_KEY");
    if (llm == "auto") llm = key && *key ? "http" : "mock";
    if (llm == "http") {
      deps.llm = std::make_shared<HttpChatClient>(HttpChatClient::from_env());
    } else {
      deps.llm = std::make_shared<MockLlm>();
    }
    const auto t0 = std::chrono::steady_clock::now();
    deps.clock = [t0] { return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count(); };

    SessionManager sessions(data_dir, deps);
    for (const auto& e : sessions.recovery_errors()) std::cerr << "warning: could not recover " << e << '\n';
    std::cerr << "recovered " << sessions.list().size() << " session(s) from " << data_dir << '\n';

    ApiServer server(sessions);
    const int bound = server.start(host, port);
    std::cerr << "listening on http://" << host << ':' << bound << "/api/v1 (llm: " << llm << ")\n";

    if (!source.empty()) {
      auto s = sessions.create();
      s->set_source(source);
      std::cout << s->id() << std::endl;
      std::cerr << "session " << s->id() << " reading " << source << '\n';
    }

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    std::cerr << "shutting down\n";
    server.stop();
    sessions.shutdown();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
