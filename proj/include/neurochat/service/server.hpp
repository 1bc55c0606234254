#pragma once

// HTTP front end for SessionManager. Routes are listed in docs/api.md.
// Errors come back as {"error": {"code": "...", "message": "..."}}.

#include "neurochat/service/session.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <memory>
#include <string>

namespace neurochat {

class ApiServer {
public:
  explicit ApiServer(SessionManager& sessions) : sessions_(sessions) {
    // SSE clients each hold a worker for the life of the stream.
    server_.new_task_queue = [] { return new httplib::ThreadPool(32); };
    routes();
  }

  ~ApiServer() { stop(); }

  // Binds and serves on a background thread; returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    stopping_ = true;
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  httplib::Server& raw() { return server_; }

private:
  using Req = httplib::Request;
  using Res = httplib::Response;

  static constexpr const char* kSid = R"(/api/v1/sessions/([0-9a-zA-Z_-]+))";

  static void send_json(Res& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  static void send_error(Res& res, int status, const std::string& code, const std::string& message) {
    send_json(res, {{"error", {{"code", code}, {"message", message}}}}, status);
  }

  static nlohmann::json body_json(const Req& req) {
    if (req.body.empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded()) throw FormatError("request body is not valid JSON");
    if (!j.is_object()) throw FormatError("request body must be a JSON object");
    return j;
  }

  static std::string string_field(const nlohmann::json& j, const char* key, bool required = true) {
    if (!j.contains(key)) {
      if (required) throw FormatError(std::string("missing field ") + key);
      return {};
    }
    if (!j[key].is_string()) throw FormatError(std::string(key) + " must be a string");
    return j[key].get<std::string>();
  }

  // Wraps a handler with the error mapping.
  template <class F>
  static httplib::Server::Handler guarded(F f) {
    return [f](const Req& req, Res& res) {
      try {
        f(req, res);
      } catch (const NotFound& e) {
        send_error(res, 404, "not_found", e.what());
      } catch (const Conflict& e) {
        send_error(res, 409, "conflict", e.what());
      } catch (const CalibrationError& e) {
        send_error(res, 409, "calibration", e.what());
      } catch (const GatewayError& e) {
        // Provider text can echo request content; keep the reply generic.
        send_error(res, 502, "llm_unavailable",
                   "language model request failed" +
                       (e.http_status ? " (provider status " + std::to_string(e.http_status) + ")" : std::string()));
      } catch (const FormatError& e) {
        send_error(res, 400, "bad_request", e.what());
      } catch (const ContractViolation& e) {
        send_error(res, 400, "bad_request", e.what());
      } catch (const ConfigError& e) {
        send_error(res, 400, "bad_request", e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  std::shared_ptr<Session> session(const Req& req) { return sessions_.get(req.matches[1]); }

  // Chat views hide injected scores unless debug mode is on.
  static nlohmann::json chat_view(const Chat& c, bool debug) {
    auto j = to_json(c);
    if (!debug)
      for (auto& t : j["turns"]) {
        t.erase("injected_score");
        t.erase("score_default");
      }
    return j;
  }

  static nlohmann::json turn_view(const ChatTurn& t, bool debug) {
    auto j = to_json(t);
    if (!debug) {
      j.erase("injected_score");
      j.erase("score_default");
    }
    return j;
  }

  static nlohmann::json chat_summary(const Chat& c) {
    return {{"id", c.id}, {"title", c.title}, {"folder", c.folder}, {"created_ms", c.created_ms}, {"turn_count", c.turns.size()}};
  }

  void routes() {
    const std::string sid = kSid;
    auto& s = server_;

    s.Get("/api/v1/health", guarded([](const Req&, Res& res) { send_json(res, {{"status", "ok"}}); }));

    s.Post("/api/v1/sessions", guarded([this](const Req& req, Res& res) {
      const auto body = body_json(req);
      Settings settings;
      if (body.contains("settings")) apply_settings(settings, body["settings"]);
      const auto source = string_field(body, "source", false);
      if (!source.empty()) parse_source_descriptor(source);  // validate before creating anything
      auto sess = sessions_.create(settings);
      if (!source.empty()) sess->set_source(source);
      send_json(res, sess->describe(), 201);
    }));

    s.Get("/api/v1/sessions", guarded([this](const Req&, Res& res) {
      auto list = nlohmann::json::array();
      for (const auto& sess : sessions_.list()) list.push_back(sess->describe());
      send_json(res, {{"sessions", list}});
    }));

    s.Get(sid, guarded([this](const Req& req, Res& res) { send_json(res, session(req)->describe()); }));

    s.Delete(sid, guarded([this](const Req& req, Res& res) {
      sessions_.remove(req.matches[1]);
      res.status = 204;
    }));

    // ---- source
    s.Put(sid + "/source", guarded([this](const Req& req, Res& res) {
      auto sess = session(req);
      sess->set_source(string_field(body_json(req), "source"));
      send_json(res, sess->describe());
    }));
    s.Delete(sid + "/source", guarded([this](const Req& req, Res& res) {
      auto sess = session(req);
      sess->stop_source();
      send_json(res, sess->describe());
    }));

    // ---- calibration
    s.Get(sid + "/calibration",
          guarded([this](const Req& req, Res& res) { send_json(res, session(req)->calibration_status()); }));
    s.Post(sid + "/calibration/start",
           guarded([this](const Req& req, Res& res) { send_json(res, session(req)->start_calibration()); }));
    s.Post(sid + "/calibration/resume",
           guarded([this](const Req& req, Res& res) { send_json(res, session(req)->resume_calibration()); }));
    s.Put(sid + "/calibration", guarded([this](const Req& req, Res& res) {
      auto sess = session(req);
      sess->import_calibration(calibration_from_json(body_json(req)));
      send_json(res, sess->calibration_status());
    }));

    // ---- settings
    s.Get(sid + "/settings",
          guarded([this](const Req& req, Res& res) { send_json(res, to_json(session(req)->settings())); }));
    s.Patch(sid + "/settings", guarded([this](const Req& req, Res& res) {
      send_json(res, to_json(session(req)->patch_settings(body_json(req))));
    }));

    // ---- chats (fixed paths before the id pattern)
    s.Get(sid + "/chats/export", guarded([this](const Req& req, Res& res) {
      res.set_header("Content-Disposition", "attachment; filename=\"chats.json\"");
      res.set_content(session(req)->chats_json(), "application/json");
    }));
    s.Post(sid + "/chats/import", guarded([this](const Req& req, Res& res) {
      const auto n = session(req)->import_chats(req.body);
      send_json(res, {{"imported", n}});
    }));
    s.Get(sid + "/chats", guarded([this](const Req& req, Res& res) {
      auto list = nlohmann::json::array();
      for (const auto& c : session(req)->chats()) list.push_back(chat_summary(c));
      send_json(res, {{"chats", list}});
    }));
    s.Post(sid + "/chats", guarded([this](const Req& req, Res& res) {
      const auto body = body_json(req);
      const auto c = session(req)->create_chat(string_field(body, "title", false), string_field(body, "folder", false));
      send_json(res, chat_view(c, false), 201);
    }));
    const std::string cid = sid + R"(/chats/([0-9a-zA-Z_-]+))";
    s.Get(cid, guarded([this](const Req& req, Res& res) {
      auto sess = session(req);
      send_json(res, chat_view(sess->chat(req.matches[2]), sess->settings().debug_mode));
    }));
    s.Patch(cid, guarded([this](const Req& req, Res& res) {
      auto sess = session(req);
      send_json(res, chat_summary(sess->patch_chat(req.matches[2], body_json(req))));
    }));
    s.Delete(cid, guarded([this](const Req& req, Res& res) {
      session(req)->delete_chat(req.matches[2]);
      res.status = 204;
    }));
    s.Post(cid + "/messages", guarded([this](const Req& req, Res& res) {
      auto sess = session(req);
      const auto body = body_json(req);
      const auto r = sess->post_message(req.matches[2], string_field(body, "text"));
      const bool debug = sess->settings().debug_mode;
      send_json(res, {{"user", turn_view(r.user, debug)}, {"assistant", turn_view(r.assistant, debug)}}, 201);
    }));

    // ---- folders
    s.Get(sid + "/folders",
          guarded([this](const Req& req, Res& res) { send_json(res, {{"folders", session(req)->folders()}}); }));
    s.Post(sid + "/folders", guarded([this](const Req& req, Res& res) {
      auto sess = session(req);
      sess->create_folder(string_field(body_json(req), "name"));
      send_json(res, {{"folders", sess->folders()}}, 201);
    }));
    const std::string fid = sid + R"(/folders/([^/]+))";
    s.Patch(fid, guarded([this](const Req& req, Res& res) {
      auto sess = session(req);
      sess->rename_folder(httplib::detail::decode_url(req.matches[2], false), string_field(body_json(req), "name"));
      send_json(res, {{"folders", sess->folders()}});
    }));
    s.Delete(fid, guarded([this](const Req& req, Res& res) {
      session(req)->delete_folder(httplib::detail::decode_url(req.matches[2], false));
      res.status = 204;
    }));

    // ---- loop
    s.Post(sid + "/typing", guarded([this](const Req& req, Res& res) {
      auto sess = session(req);
      const auto f = sess->typing_started();
      nlohmann::json j{{"frozen", f.frozen}, {"frozen_at_ms", f.frozen_at_ms}};
      if (sess->settings().debug_mode) {
        j["score"] = f.frozen_score;
        j["default"] = f.default_flag;
      }
      send_json(res, j);
    }));
    s.Post(sid + "/reset", guarded([this](const Req& req, Res& res) {
      auto sess = session(req);
      sess->reset();
      send_json(res, sess->describe());
    }));
    s.Get(sid + "/export", guarded([this](const Req& req, Res& res) {
      auto sess = session(req);
      res.set_header("Content-Disposition", "attachment; filename=\"neurochat-" + sess->id() + ".zip\"");
      res.set_content(sess->export_zip(), "application/zip");
    }));

    // ---- engagement
    s.Get(sid + "/engagement/latest", guarded([this](const Req& req, Res& res) {
      const auto latest = session(req)->latest();
      if (!latest) throw NotFound("no engagement sample yet");
      send_json(res, sample_record(*latest, session(req)->freeze_state().frozen));
    }));
    s.Get(sid + "/engagement/stream", guarded([this](const Req& req, Res& res) {
      auto sess = session(req);
      auto sub = sess->subscribe();
      std::weak_ptr<Session> weak = sess;
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream",
          [this, sub](std::size_t, httplib::DataSink& sink) {
            bool closed = false;
            const auto frame = Broadcaster::next(*sub, std::chrono::milliseconds(500), closed);
            if (stopping_ || closed) {
              sink.done();
              return true;
            }
            const std::string out = frame ? *frame : std::string(": keepalive\n\n");
            return sink.write(out.data(), out.size());
          },
          [weak, sub](bool) {
            if (auto s = weak.lock()) s->unsubscribe(sub);
          });
    }));
  }

  SessionManager& sessions_;
  httplib::Server server_;
  std::thread thread_;
  std::atomic<bool> stopping_{false};
  int port_ = -1;
};

}  // namespace neurochat
