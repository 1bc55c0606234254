#pragma once

// Persistent session record and the chats.json exchange format.

#include "neurochat/errors.hpp"
#include "neurochat/llm/gateway.hpp"
#include "neurochat/signal/types.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace neurochat {

struct NotFound : Error {
  using Error::Error;
};

// Request conflicts with session state (HTTP 409).
struct Conflict : Error {
  using Error::Error;
};

struct Settings {
  bool mood_mode = false;
  bool debug_mode = false;
  bool dark_mode = false;

  friend bool operator==(const Settings&, const Settings&) = default;
};

struct Chat {
  std::string id;
  std::string title;
  std::string folder;  // empty = no folder
  double created_ms = 0.0;
  std::vector<ChatTurn> turns;

  friend bool operator==(const Chat&, const Chat&) = default;
};

struct SessionRecord {
  std::string id;
  double created_ms = 0.0;
  std::string source;  // last source descriptor, empty if none
  std::optional<CalibrationResult> calibration;
  Settings settings;
  std::vector<std::string> folders;
  std::vector<Chat> chats;

  Chat* find_chat(const std::string& chat_id) {
    auto it = std::find_if(chats.begin(), chats.end(), [&](const Chat& c) { return c.id == chat_id; });
    return it == chats.end() ? nullptr : &*it;
  }

  Chat& chat(const std::string& chat_id) {
    if (auto* c = find_chat(chat_id)) return *c;
    throw NotFound("unknown chat " + chat_id);
  }

  bool has_folder(const std::string& name) const {
    return std::find(folders.begin(), folders.end(), name) != folders.end();
  }
};

inline double wall_clock_ms() {
  return static_cast<double>(
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
          .count());
}

inline std::string random_id(std::size_t hex_chars = 16) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id;
  for (std::size_t i = 0; i < hex_chars; ++i) id.push_back(kHex[rng() & 0xf]);
  return id;
}

// ---- JSON --------------------------------------------------------------------------

inline nlohmann::json to_json(const ChatTurn& t) {
  nlohmann::json j;
  j["role"] = to_string(t.role);
  j["visible_text"] = t.visible_text;
  j["mode"] = to_string(t.mode);
  j["t_ms"] = t.t_ms;
  if (t.injected_score) j["injected_score"] = *t.injected_score;
  if (t.role == Role::kUser && t.mode == Mode::kAdaptive) j["score_default"] = t.score_default;
  if (t.role == Role::kAssistant) {
    j["prompt_sha256"] = t.prompt_sha256;
    j["model"] = t.model;
    j["latency_ms"] = t.latency_ms;
  }
  return j;
}

inline void check_turn(const ChatTurn& t) {
  if (contains_marker(t.visible_text)) throw FormatError("visible text contains the engagement marker");
  const bool may_carry_score = t.role == Role::kUser && t.mode == Mode::kAdaptive;
  if (t.injected_score.has_value() && !may_carry_score) {
    throw FormatError("injected_score is only valid on adaptive user turns");
  }
  if (t.injected_score && !(*t.injected_score >= 0.0 && *t.injected_score <= 1.0)) {
    throw FormatError("injected_score outside [0, 1]");
  }
}

inline ChatTurn turn_from_json(const nlohmann::json& j) {
  try {
    ChatTurn t;
    t.role = parse_role(j.at("role").get<std::string>());
    if (t.role == Role::kSystem) throw FormatError("system turns are not stored in chats");
    t.visible_text = j.at("visible_text").get<std::string>();
    t.mode = parse_mode(j.at("mode").get<std::string>());
    t.t_ms = j.at("t_ms").get<double>();
    if (j.contains("injected_score") && !j["injected_score"].is_null()) t.injected_score = j["injected_score"].get<double>();
    t.score_default = j.value("score_default", false);
    t.prompt_sha256 = j.value("prompt_sha256", std::string());
    t.model = j.value("model", std::string());
    t.latency_ms = j.value("latency_ms", 0.0);
    check_turn(t);
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad chat turn: ") + e.what());
  }
}

inline nlohmann::json to_json(const Chat& c) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : c.turns) turns.push_back(to_json(t));
  return {{"id", c.id}, {"title", c.title}, {"folder", c.folder}, {"created_ms", c.created_ms}, {"turns", turns}};
}

inline Chat chat_from_json(const nlohmann::json& j) {
  try {
    Chat c;
    c.id = j.at("id").get<std::string>();
    c.title = j.value("title", std::string());
    c.folder = j.value("folder", std::string());
    c.created_ms = j.value("created_ms", 0.0);
    for (const auto& t : j.at("turns")) c.turns.push_back(turn_from_json(t));
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad chat: ") + e.what());
  }
}

inline nlohmann::json to_json(const Settings& s) {
  return {{"mood_mode", s.mood_mode}, {"debug_mode", s.debug_mode}, {"dark_mode", s.dark_mode}};
}

// Applies the keys present in `j`; unknown keys are rejected.
inline void apply_settings(Settings& s, const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("settings must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_boolean()) throw FormatError("setting " + key + " must be a boolean");
    if (key == "mood_mode") {
      s.mood_mode = value.get<bool>();
    } else if (key == "debug_mode") {
      s.debug_mode = value.get<bool>();
    } else if (key == "dark_mode") {
      s.dark_mode = value.get<bool>();
    } else {
      throw FormatError("unknown setting " + key);
    }
  }
}

inline nlohmann::json to_json(const CalibrationResult& c) {
  return {{"e_min", c.e_min}, {"e_max", c.e_max}};
}

inline CalibrationResult calibration_from_json(const nlohmann::json& j) {
  try {
    return CalibrationResult{j.at("e_min").get<double>(), j.at("e_max").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad calibration: ") + e.what());
  }
}

inline constexpr const char* kChatsFormat = "neurochat-chats";

// chats.json: folders and chats in session order.
inline nlohmann::json chats_document(const SessionRecord& r) {
  nlohmann::json chats = nlohmann::json::array();
  for (const auto& c : r.chats) chats.push_back(to_json(c));
  return {{"format", kChatsFormat}, {"version", 1}, {"folders", r.folders}, {"chats", chats}};
}

struct ChatsDocument {
  std::vector<std::string> folders;
  std::vector<Chat> chats;
};

inline ChatsDocument parse_chats_document(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", std::string()) != kChatsFormat) throw FormatError("not a chats document");
  if (j.value("version", 0) != 1) throw FormatError("unsupported chats document version");
  ChatsDocument d;
  try {
    d.folders = j.value("folders", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad folders: ") + e.what());
  }
  if (!j.contains("chats") || !j["chats"].is_array()) throw FormatError("chats must be an array");
  for (const auto& c : j["chats"]) d.chats.push_back(chat_from_json(c));
  return d;
}

inline nlohmann::json to_json(const SessionRecord& r) {
  nlohmann::json j = chats_document(r);
  j["format"] = "neurochat-session";
  j["id"] = r.id;
  j["created_ms"] = r.created_ms;
  j["source"] = r.source;
  j["settings"] = to_json(r.settings);
  j["calibration"] = r.calibration ? to_json(*r.calibration) : nlohmann::json(nullptr);
  return j;
}

inline SessionRecord session_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", std::string()) != "neurochat-session") {
    throw FormatError("not a session record");
  }
  SessionRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.created_ms = j.at("created_ms").get<double>();
    r.source = j.value("source", std::string());
    apply_settings(r.settings, j.at("settings"));
    if (!j.at("calibration").is_null()) r.calibration = calibration_from_json(j["calibration"]);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad session record: ") + e.what());
  }
  auto copy = j;
  copy["format"] = kChatsFormat;
  auto doc = parse_chats_document(copy);
  r.folders = std::move(doc.folders);
  r.chats = std::move(doc.chats);
  return r;
}

}  // namespace neurochat
