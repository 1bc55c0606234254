#pragma once

// One learner session: ingest thread, engagement engine, chats, and the
// on-disk record under <data>/sessions/<id>/.
//
//   session.json      settings, calibration, folders, chats (rewritten atomically)
//   raw_eeg.csv       frames as received (session time axis)
//   filtered_eeg.csv  band-passed and notched frames
//   metrics.jsonl     samples and events
//
// Locking: `mu_` guards engine and record; `msg_mu_` serializes message
// posts and exports so histories never interleave; `source_mu_` guards the
// source thread. The LLM call runs with only `msg_mu_` held.

#include "neurochat/engine/engine.hpp"
#include "neurochat/ingest/csv.hpp"
#include "neurochat/ingest/source.hpp"
#include "neurochat/llm/gateway.hpp"
#include "neurochat/service/metrics.hpp"
#include "neurochat/service/records.hpp"
#include "neurochat/service/zip.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace neurochat {

namespace fs = std::filesystem;

// Server-push fan-out. Every subscriber sees the same sequence.
class Broadcaster {
public:
  struct Subscriber {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::string> pending;
    bool closed = false;
    std::size_t dropped = 0;
  };

  static constexpr std::size_t kMaxPending = 4096;

  std::shared_ptr<Subscriber> subscribe() {
    auto s = std::make_shared<Subscriber>();
    std::lock_guard lock(mu_);
    if (closed_) s->closed = true;
    subs_.push_back(s);
    return s;
  }

  void unsubscribe(const std::shared_ptr<Subscriber>& s) {
    std::lock_guard lock(mu_);
    std::erase(subs_, s);
  }

  void publish(const std::string& event, const nlohmann::json& data) {
    const auto frame = "event: " + event + "\ndata: " + data.dump() + "\n\n";
    std::lock_guard lock(mu_);
    for (const auto& s : subs_) {
      std::lock_guard sl(s->mu);
      if (s->pending.size() >= kMaxPending) {
        s->pending.pop_front();
        ++s->dropped;
      }
      s->pending.push_back(frame);
      s->cv.notify_one();
    }
  }

  // Next frame for `s`; nullopt on timeout. Sets `closed` when the stream ended.
  static std::optional<std::string> next(Subscriber& s, std::chrono::milliseconds timeout, bool& closed) {
    std::unique_lock lock(s.mu);
    s.cv.wait_for(lock, timeout, [&] { return !s.pending.empty() || s.closed; });
    closed = s.closed && s.pending.empty();
    if (s.pending.empty()) return std::nullopt;
    auto f = std::move(s.pending.front());
    s.pending.pop_front();
    return f;
  }

  void close_all() {
    std::lock_guard lock(mu_);
    closed_ = true;
    for (const auto& s : subs_) {
      std::lock_guard sl(s->mu);
      s->closed = true;
      s->cv.notify_all();
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return subs_.size();
  }

private:
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Subscriber>> subs_;
  bool closed_ = false;
};

struct SessionDeps {
  EngineConfig config;
  PromptSet prompts;
  std::shared_ptr<ChatClient> llm;
  RetryPolicy retry;
  BridgeSource::Clock clock;  // engine clock for bridge re-timestamping
};

struct MessageResult {
  ChatTurn user;
  ChatTurn assistant;
};

namespace detail {

inline void write_file_atomic(const fs::path& path, const std::string& data) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << data;
    out.flush();
    if (!out) throw Error("cannot write " + tmp);
  }
  fs::rename(tmp, path);
}

// Timestamp of the last well-formed row of an EEG CSV, if any.
inline std::optional<double> last_csv_timestamp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::streamoff>(in.tellg());
  const std::streamoff back = std::min<std::streamoff>(size, 8192);
  in.seekg(size - back);
  std::string tail(static_cast<std::size_t>(back), '\0');
  in.read(tail.data(), back);
  std::optional<double> last;
  std::size_t start = 0;
  while (start < tail.size()) {
    auto end = tail.find('\n', start);
    if (end == std::string::npos) end = tail.size();
    EegFrame f;
    if (parse_csv_row(std::string_view(tail).substr(start, end - start), f)) last = f.timestamp_ms;
    start = end + 1;
  }
  return last;
}

}  // namespace detail

class Session {
public:
  // New session persisted under `dir`.
  static std::shared_ptr<Session> create(const fs::path& dir, SessionDeps deps, Settings settings = {}) {
    SessionRecord rec;
    rec.id = dir.filename().string();
    rec.created_ms = wall_clock_ms();
    rec.settings = settings;
    fs::create_directories(dir);
    auto s = std::shared_ptr<Session>(new Session(std::move(rec), dir, std::move(deps)));
    std::lock_guard lock(s->mu_);
    s->persist();
    return s;
  }

  // Reopens a session from disk after a restart.
  static std::shared_ptr<Session> open(const fs::path& dir, SessionDeps deps) {
    const auto text = read_file_bytes((dir / "session.json").string());
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError("corrupt session record in " + dir.string());
    return std::shared_ptr<Session>(new Session(session_from_json(j), dir, std::move(deps)));
  }

  ~Session() { close(); }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }
  const fs::path& dir() const { return dir_; }

  // ---- sources -------------------------------------------------------------

  void set_source(const std::string& descriptor) {
    const auto desc = parse_source_descriptor(descriptor);
    auto source = make_source(desc, deps_.clock);
    std::lock_guard source_lock(source_mu_);
    stop_source_locked(false);
    {
      std::lock_guard lock(mu_);
      rec_.source = descriptor;
      rebase_pending_ = true;
      streaming_ = true;
      persist();
    }
    runner_ = std::make_unique<SourceRunner>(std::move(source));
    consumer_ = std::jthread([this, runner = runner_.get()](std::stop_token st) { consume(*runner, st); });
  }

  // Pauses ingestion. A calibration task in progress fails (resumable).
  void stop_source() {
    std::lock_guard source_lock(source_mu_);
    stop_source_locked(true);
  }

  bool source_active() const {
    std::lock_guard lock(mu_);
    return streaming_;
  }

  // Feeds one frame on the session time axis. Used by the source thread and
  // by in-process drivers.
  void ingest(const EegFrame& raw) {
    std::lock_guard lock(mu_);
    ingest_locked(raw);
  }

  void report(const QualityEvent& q) {
    std::lock_guard lock(mu_);
    handle_quality_locked(q);
  }

  // ---- calibration ---------------------------------------------------------

  nlohmann::json start_calibration() {
    std::lock_guard lock(mu_);
    engine().start_calibration(now());
    flush_engine_events();
    return calibration_json();
  }

  nlohmann::json resume_calibration() {
    std::lock_guard lock(mu_);
    engine().resume_calibration(now());
    flush_engine_events();
    return calibration_json();
  }

  nlohmann::json calibration_status() const {
    std::lock_guard lock(mu_);
    return calibration_json();
  }

  void import_calibration(const CalibrationResult& cal) {
    std::lock_guard lock(mu_);
    if (!(std::isfinite(cal.e_min) && std::isfinite(cal.e_max))) throw FormatError("calibration must be finite");
    try {
      engine().restore_calibration(cal);
    } catch (const CalibrationError& e) {
      throw FormatError(e.what());
    }
    rec_.calibration = cal;
    persist();
  }

  std::optional<CalibrationResult> calibration() const {
    std::lock_guard lock(mu_);
    return rec_.calibration;
  }

  // ---- settings ------------------------------------------------------------

  Settings patch_settings(const nlohmann::json& patch) {
    std::lock_guard lock(mu_);
    auto s = rec_.settings;
    apply_settings(s, patch);
    rec_.settings = s;
    persist();
    return s;
  }

  Settings settings() const {
    std::lock_guard lock(mu_);
    return rec_.settings;
  }

  // ---- folders and chats ---------------------------------------------------

  Chat create_chat(const std::string& title, const std::string& folder) {
    std::lock_guard lock(mu_);
    check_folder(folder);
    Chat c;
    do {
      c.id = random_id(12);
    } while (rec_.find_chat(c.id));
    c.title = title;
    c.folder = folder;
    c.created_ms = wall_clock_ms();
    rec_.chats.push_back(c);
    persist();
    return c;
  }

  std::vector<Chat> chats() const {
    std::lock_guard lock(mu_);
    return rec_.chats;
  }

  Chat chat(const std::string& chat_id) const {
    std::lock_guard lock(mu_);
    for (const auto& c : rec_.chats)
      if (c.id == chat_id) return c;
    throw NotFound("unknown chat " + chat_id);
  }

  Chat patch_chat(const std::string& chat_id, const nlohmann::json& patch) {
    std::lock_guard lock(mu_);
    auto& c = rec_.chat(chat_id);
    if (!patch.is_object()) throw FormatError("chat patch must be an object");
    auto updated = c;
    for (const auto& [key, value] : patch.items()) {
      if (!value.is_string()) throw FormatError(key + " must be a string");
      if (key == "title") {
        updated.title = value.get<std::string>();
      } else if (key == "folder") {
        check_folder(value.get<std::string>());
        updated.folder = value.get<std::string>();
      } else {
        throw FormatError("unknown chat field " + key);
      }
    }
    c = updated;
    persist();
    return c;
  }

  void delete_chat(const std::string& chat_id) {
    std::lock_guard lock(mu_);
    rec_.chat(chat_id);
    std::erase_if(rec_.chats, [&](const Chat& c) { return c.id == chat_id; });
    persist();
  }

  std::vector<std::string> folders() const {
    std::lock_guard lock(mu_);
    return rec_.folders;
  }

  void create_folder(const std::string& name) {
    std::lock_guard lock(mu_);
    if (name.empty()) throw FormatError("folder name is empty");
    if (rec_.has_folder(name)) throw Conflict("folder exists: " + name);
    rec_.folders.push_back(name);
    persist();
  }

  void rename_folder(const std::string& from, const std::string& to) {
    std::lock_guard lock(mu_);
    if (!rec_.has_folder(from)) throw NotFound("unknown folder " + from);
    if (to.empty()) throw FormatError("folder name is empty");
    if (from == to) return;
    if (rec_.has_folder(to)) throw Conflict("folder exists: " + to);
    std::replace(rec_.folders.begin(), rec_.folders.end(), from, to);
    for (auto& c : rec_.chats)
      if (c.folder == from) c.folder = to;
    persist();
  }

  // Chats in the folder move to the top level.
  void delete_folder(const std::string& name) {
    std::lock_guard lock(mu_);
    if (!rec_.has_folder(name)) throw NotFound("unknown folder " + name);
    std::erase(rec_.folders, name);
    for (auto& c : rec_.chats)
      if (c.folder == name) c.folder.clear();
    persist();
  }

  // ---- the loop --------------------------------------------------------------

  FreezeState typing_started() {
    std::lock_guard lock(mu_);
    const auto f = engine().on_typing_started(now());
    flush_engine_events();
    return f;
  }

  // freeze -> inject (mood mode) -> send -> deliver -> unfreeze. On a
  // gateway failure the history is untouched and the freeze holds, so a
  // retry carries the same score.
  MessageResult post_message(const std::string& chat_id, const std::string& text) {
    std::lock_guard serial(msg_mu_);
    ChatTurn user;
    PromptBundle bundle;
    {
      std::lock_guard lock(mu_);
      const auto& chat = rec_.chat(chat_id);
      if (text.empty()) throw FormatError("message text is empty");
      if (contains_marker(text)) throw FormatError("message text contains a reserved marker");
      const auto mode = rec_.settings.mood_mode ? Mode::kAdaptive : Mode::kControl;
      if (mode == Mode::kAdaptive && !engine().calibration()) {
        throw Conflict("calibration must complete before chatting with mood mode on");
      }
      engine().on_typing_started(now());
      const auto score = engine().injectable_score();
      user.role = Role::kUser;
      user.visible_text = text;
      user.mode = mode;
      user.t_ms = wall_clock_ms();
      if (mode == Mode::kAdaptive) {
        user.injected_score = round_score(score.score);
        user.score_default = score.default_flag;
      }
      bundle = build_bundle(deps_.prompts, chat.turns, user, deps_.config.model, deps_.config.temperature);
      flush_engine_events();
    }

    const auto ex = send_chat(bundle, *deps_.llm, deps_.retry);

    ChatTurn reply;
    reply.role = Role::kAssistant;
    reply.visible_text = ex.response;
    reply.mode = user.mode;
    reply.t_ms = wall_clock_ms();
    reply.prompt_sha256 = sha256_hex(bundle.system_prompt);
    reply.model = bundle.model;
    reply.latency_ms = ex.latency_ms;
    // A provider echoing the marker back must not put it on screen.
    if (contains_marker(reply.visible_text)) {
      std::string cleaned;
      std::string_view rest = reply.visible_text;
      for (auto pos = rest.find(kInjectionMarker); pos != std::string_view::npos; pos = rest.find(kInjectionMarker)) {
        cleaned += rest.substr(0, pos);
        const auto close = rest.find(']', pos);
        rest = close == std::string_view::npos ? std::string_view() : rest.substr(close + 1);
      }
      cleaned += rest;
      reply.visible_text = cleaned;
    }

    std::lock_guard lock(mu_);
    engine().on_response_delivered(now());
    flush_engine_events();
    auto* chat = rec_.find_chat(chat_id);
    if (!chat) throw NotFound("chat deleted while awaiting the reply: " + chat_id);
    chat->turns.push_back(user);
    chat->turns.push_back(reply);
    if (chat->title.empty()) chat->title = text.substr(0, 60);
    write_metric({{"type", "turn"},
                  {"t_ms", now()},
                  {"chat_id", chat_id},
                  {"mode", to_string(user.mode)},
                  {"injected_score", opt(user.injected_score)},
                  {"score_default", user.score_default},
                  {"latency_ms", reply.latency_ms},
                  {"prompt_sha256", reply.prompt_sha256}});
    persist();
    return {user, reply};
  }

  // Clears chats and folders for a new learner; calibration stays.
  void reset() {
    std::lock_guard serial(msg_mu_);
    std::lock_guard lock(mu_);
    rec_.chats.clear();
    rec_.folders.clear();
    persist();
  }

  // ---- engagement ------------------------------------------------------------

  std::optional<EngagementSample> latest() const {
    std::lock_guard lock(mu_);
    return latest_;
  }

  FreezeState freeze_state() const {
    std::lock_guard lock(mu_);
    return proc_.engine().freeze_state();
  }

  InjectableScore injectable_score() const {
    std::lock_guard lock(mu_);
    return proc_.engine().injectable_score();
  }

  double stream_now_ms() const {
    std::lock_guard lock(mu_);
    return now();
  }

  std::shared_ptr<Broadcaster::Subscriber> subscribe() { return bus_.subscribe(); }
  void unsubscribe(const std::shared_ptr<Broadcaster::Subscriber>& s) { bus_.unsubscribe(s); }
  std::size_t subscribers() const { return bus_.size(); }

  // ---- export / import ---------------------------------------------------------

  // Waits for an in-flight completion, then bundles the session data.
  std::string export_zip() {
    std::lock_guard serial(msg_mu_);
    std::lock_guard lock(mu_);
    raw_.flush();
    filtered_.flush();
    metrics_.flush();
    auto summary = to_json(rec_);
    summary.erase("chats");
    return zip::write({
        {"raw_eeg.csv", read_file_bytes((dir_ / "raw_eeg.csv").string())},
        {"filtered_eeg.csv", read_file_bytes((dir_ / "filtered_eeg.csv").string())},
        {"metrics.jsonl", read_file_bytes((dir_ / "metrics.jsonl").string())},
        {"chats.json", chats_json_locked()},
        {"session.json", summary.dump(2) + "\n"},
    });
  }

  std::string chats_json() const {
    std::lock_guard lock(mu_);
    return chats_json_locked();
  }

  // Adds the chats of a chats.json document (or an export zip holding one).
  // Ids that collide with existing chats are replaced by fresh ones.
  std::size_t import_chats(const std::string& body) {
    std::string text = body;
    if (zip::looks_like_zip(body)) {
      text.clear();
      for (auto& e : zip::read(body))
        if (e.name == "chats.json") text = std::move(e.data);
      if (text.empty()) throw FormatError("archive has no chats.json");
    }
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw FormatError("chats document is not valid JSON");
    auto doc = parse_chats_document(j);

    std::lock_guard serial(msg_mu_);
    std::lock_guard lock(mu_);
    for (const auto& f : doc.folders)
      if (!rec_.has_folder(f)) rec_.folders.push_back(f);
    for (auto& c : doc.chats) {
      if (!c.folder.empty() && !rec_.has_folder(c.folder)) rec_.folders.push_back(c.folder);
      while (c.id.empty() || rec_.find_chat(c.id)) c.id = random_id(12);
      rec_.chats.push_back(std::move(c));
    }
    persist();
    return doc.chats.size();
  }

  // ---- description ---------------------------------------------------------------

  nlohmann::json describe() const {
    std::lock_guard lock(mu_);
    nlohmann::json folders = rec_.folders;
    return {{"id", rec_.id},
            {"created_ms", rec_.created_ms},
            {"source", rec_.source},
            {"source_active", streaming_},
            {"settings", to_json(rec_.settings)},
            {"calibrated", rec_.calibration.has_value()},
            {"calibration", calibration_json()},
            {"frozen", proc_.engine().freeze_state().frozen},
            {"chat_count", rec_.chats.size()},
            {"folders", folders},
            {"frames", frames_},
            {"stream_t_ms", now()}};
  }

  // Stops the source and ends all event streams.
  void close() {
    {
      std::lock_guard source_lock(source_mu_);
      stop_source_locked(false);
    }
    bus_.close_all();
    std::lock_guard lock(mu_);
    raw_.flush();
    filtered_.flush();
    metrics_.flush();
  }

private:
  Session(SessionRecord rec, fs::path dir, SessionDeps deps)
      : id_(rec.id), rec_(std::move(rec)), dir_(std::move(dir)), deps_(std::move(deps)), proc_(deps_.config) {
    if (!deps_.llm) throw ConfigError("session needs an LLM client");
    open_csv(raw_, dir_ / "raw_eeg.csv");
    open_csv(filtered_, dir_ / "filtered_eeg.csv");
    metrics_.open(dir_ / "metrics.jsonl", std::ios::app | std::ios::binary);
    if (!metrics_) throw Error("cannot open metrics log in " + dir_.string());
    if (rec_.calibration) proc_.engine().restore_calibration(*rec_.calibration);
    if (auto t = detail::last_csv_timestamp(dir_ / "raw_eeg.csv")) {
      last_t_ = *t;
      have_last_ = true;
      rebase_pending_ = true;
    }
  }

  static void open_csv(std::ofstream& out, const fs::path& path) {
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    out.open(path, std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot open " + path.string());
    if (fresh) write_csv_header(out);
  }

  EngagementEngine& engine() { return proc_.engine(); }

  double now() const { return have_last_ ? last_t_ : 0.0; }

  nlohmann::json calibration_json() const {
    return calibration_status_json(proc_.engine().calibration_status(), deps_.config.task_s);
  }

  std::string chats_json_locked() const { return chats_document(rec_).dump(2) + "\n"; }

  void check_folder(const std::string& folder) const {
    if (!folder.empty() && !rec_.has_folder(folder)) throw NotFound("unknown folder " + folder);
  }

  void persist() { detail::write_file_atomic(dir_ / "session.json", to_json(rec_).dump(2) + "\n"); }

  void write_metric(const nlohmann::json& j) { metrics_ << j.dump() << '\n'; }

  void ingest_locked(const EegFrame& raw) {
    EegFrame f = raw;
    if (rebase_pending_) {
      // A new source may start its clock anywhere; keep session time increasing.
      offset_ = (have_last_ && raw.timestamp_ms <= last_t_) ? last_t_ + kSamplePeriodMs - raw.timestamp_ms : 0.0;
      rebase_pending_ = false;
    }
    f.timestamp_ms += offset_;
    if (have_last_ && !(f.timestamp_ms > last_t_)) {
      ++out_of_order_;
      return;
    }
    StreamProcessor::Output out;
    try {
      out = proc_.push(f);
    } catch (const StreamQualityError& e) {
      handle_quality_locked({QualityEvent::Kind::kMalformedLine, f.timestamp_ms, 1, e.what()});
      return;
    }
    have_last_ = true;
    last_t_ = f.timestamp_ms;
    ++frames_;
    raw_ << format_csv_row(f);
    filtered_ << format_csv_row(out.filtered);
    for (const auto& s : out.samples) {
      latest_ = s;
      const auto rec = sample_record(s, proc_.engine().freeze_state().frozen);
      write_metric(rec);
      bus_.publish("sample", rec);
    }
    flush_engine_events();
    if (!out.samples.empty()) {
      raw_.flush();
      filtered_.flush();
      metrics_.flush();
    }
  }

  void handle_quality_locked(QualityEvent q) {
    if (q.t_ms == 0.0) q.t_ms = now();
    const auto rec = quality_record(q);
    write_metric(rec);
    raw_.flush();
    filtered_.flush();
    metrics_.flush();
    bus_.publish("quality", rec);
    if (q.kind == QualityEvent::Kind::kStreamEnded || q.kind == QualityEvent::Kind::kSourceError) {
      streaming_ = false;
      engine().on_stream_lost(now());
      flush_engine_events();
    }
  }

  void flush_engine_events() {
    for (const auto& e : engine().drain_events()) {
      const auto rec = event_record(e);
      write_metric(rec);
      bus_.publish(rec["type"].get<std::string>(), rec);
      if (e.kind == EngineEvent::Kind::kCalibrationComplete && e.calibration) {
        rec_.calibration = *e.calibration;
        persist();
      }
    }
  }

  void consume(SourceRunner& runner, std::stop_token st) {
    EegFrame f;
    std::vector<QualityEvent> ending;  // held until queued frames are consumed
    while (!st.stop_requested()) {
      const auto r = runner.queue().pop(f, std::chrono::milliseconds(100));
      if (r == FrameQueue::PopResult::kFrame) ingest(f);
      for (auto& e : runner.queue().drain_events()) {
        const bool end = e.kind == QualityEvent::Kind::kStreamEnded || e.kind == QualityEvent::Kind::kSourceError;
        if (end) {
          ending.push_back(std::move(e));
        } else {
          report(e);
        }
      }
      if (r == FrameQueue::PopResult::kClosed) {
        for (auto& e : ending) report(e);
        break;
      }
    }
  }

  // Caller holds source_mu_.
  void stop_source_locked(bool lost) {
    if (!runner_) return;
    consumer_.request_stop();
    runner_->stop();
    if (consumer_.joinable()) consumer_.join();
    runner_.reset();
    std::lock_guard lock(mu_);
    if (lost && streaming_) {
      handle_quality_locked({QualityEvent::Kind::kStreamEnded, now(), 0, "source stopped"});
    }
    streaming_ = false;
  }

  const std::string id_;
  mutable std::mutex mu_;
  std::mutex msg_mu_;
  std::mutex source_mu_;

  SessionRecord rec_;
  fs::path dir_;
  SessionDeps deps_;
  StreamProcessor proc_;

  std::ofstream raw_;
  std::ofstream filtered_;
  std::ofstream metrics_;
  Broadcaster bus_;

  std::unique_ptr<SourceRunner> runner_;
  std::jthread consumer_;
  bool streaming_ = false;

  bool have_last_ = false;
  double last_t_ = 0.0;
  double offset_ = 0.0;
  bool rebase_pending_ = false;
  std::size_t frames_ = 0;
  std::size_t out_of_order_ = 0;
  std::optional<EngagementSample> latest_;
};

// All sessions under a data directory; recovers them at startup.
class SessionManager {
public:
  SessionManager(fs::path data_dir, SessionDeps deps) : root_(std::move(data_dir) / "sessions"), deps_(std::move(deps)) {
    fs::create_directories(root_);
    for (const auto& entry : fs::directory_iterator(root_)) {
      if (!entry.is_directory() || !fs::exists(entry.path() / "session.json")) continue;
      try {
        auto s = Session::open(entry.path(), deps_);
        sessions_[s->id()] = s;
      } catch (const std::exception& e) {
        recovery_errors_.push_back(entry.path().string() + ": " + e.what());
      }
    }
  }

  ~SessionManager() { shutdown(); }

  std::shared_ptr<Session> create(Settings settings = {}) {
    std::lock_guard lock(mu_);
    std::string id;
    do {
      id = random_id(16);
    } while (sessions_.count(id) || fs::exists(root_ / id));
    auto s = Session::create(root_ / id, deps_, settings);
    sessions_[id] = s;
    return s;
  }

  std::shared_ptr<Session> get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("unknown session " + id);
    return it->second;
  }

  std::vector<std::shared_ptr<Session>> list() const {
    std::lock_guard lock(mu_);
    std::vector<std::shared_ptr<Session>> out;
    for (const auto& [id, s] : sessions_) out.push_back(s);
    return out;
  }

  // Ends the session and deletes its data.
  void remove(const std::string& id) {
    std::shared_ptr<Session> s;
    {
      std::lock_guard lock(mu_);
      auto it = sessions_.find(id);
      if (it == sessions_.end()) throw NotFound("unknown session " + id);
      s = it->second;
      sessions_.erase(it);
    }
    s->close();
    const auto dir = s->dir();
    s.reset();
    std::error_code ec;
    fs::remove_all(dir, ec);
  }

  void shutdown() {
    for (const auto& s : list()) s->close();
  }

  const std::vector<std::string>& recovery_errors() const { return recovery_errors_; }
  const SessionDeps& deps() const { return deps_; }

private:
  fs::path root_;
  SessionDeps deps_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::vector<std::string> recovery_errors_;
};

}  // namespace neurochat
