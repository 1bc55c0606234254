#pragma once

// Session-level engagement state: calibration tasks, the 1 Hz windowed
// score, and score freezing while the learner types.
//
// Time is always stream time in milliseconds, supplied by the caller. The
// engine never reads a clock, so replays at any speed behave identically.

#include "neurochat/config.hpp"
#include "neurochat/engine/pipeline.hpp"
#include "neurochat/errors.hpp"
#include "neurochat/signal/engagement.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace neurochat {

enum class CalibrationPhase { kIdle, kRelaxation, kWordAssociation, kComplete, kFailed };

inline const char* to_string(CalibrationPhase p) {
  switch (p) {
    case CalibrationPhase::kIdle: return "idle";
    case CalibrationPhase::kRelaxation: return "relaxation";
    case CalibrationPhase::kWordAssociation: return "word_association";
    case CalibrationPhase::kComplete: return "complete";
    case CalibrationPhase::kFailed: return "failed";
  }
  return "unknown";
}

enum class CalibrationFailure { kNone, kQuality, kDegenerate, kStreamLost };

inline const char* to_string(CalibrationFailure f) {
  switch (f) {
    case CalibrationFailure::kNone: return "none";
    case CalibrationFailure::kQuality: return "quality";
    case CalibrationFailure::kDegenerate: return "degenerate";
    case CalibrationFailure::kStreamLost: return "stream_lost";
  }
  return "unknown";
}

struct CalibrationStatus {
  CalibrationPhase phase = CalibrationPhase::kIdle;
  bool armed = false;  // waiting for the signal probe before relaxation starts
  double started_ms = 0.0;
  double elapsed_s = 0.0;
  std::size_t relaxation_windows = 0;
  std::size_t word_windows = 0;
  CalibrationFailure failure = CalibrationFailure::kNone;
  std::string failure_message;
  // Phase a resume restarts from, when failed.
  std::optional<CalibrationPhase> resume_phase;
  std::optional<CalibrationResult> result;
};

struct EngagementSample {
  double t_ms = 0.0;
  std::optional<double> raw_e_epoch;
  std::optional<double> e_window;
  std::optional<double> e_norm;
  double quality = 0.0;   // valid / present epochs in the window
  double coverage = 0.0;  // present / expected complete epochs in the window
  bool stale = true;
};

struct FreezeState {
  bool frozen = false;
  double frozen_score = 0.0;
  double frozen_at_ms = 0.0;
  bool default_flag = false;
};

struct InjectableScore {
  double score = 0.0;
  bool default_flag = false;
};

struct EngineEvent {
  enum class Kind { kPhase, kCalibrationComplete, kCalibrationFailed, kFreeze, kUnfreeze };
  Kind kind;
  double t_ms = 0.0;
  CalibrationPhase phase = CalibrationPhase::kIdle;
  double value = 0.0;  // frozen score
  bool default_flag = false;
  std::optional<CalibrationResult> calibration;
  std::string detail;
};

struct WindowStats {
  std::size_t present = 0;
  std::size_t valid = 0;
  std::optional<double> mean;
  double quality = 0.0;
  double coverage = 0.0;
  bool stale = true;
};

// Statistics over epochs whose start lies in (now - window, now].
inline WindowStats window_stats(const std::deque<EpochScore>& epochs, double window_s, double now_ms,
                                double stale_quality) {
  WindowStats w;
  const double window_ms = window_s * 1000.0;
  std::vector<TimedValue> values;
  for (const auto& e : epochs) {
    if (e.start_ms > now_ms - window_ms && e.start_ms <= now_ms) {
      ++w.present;
      if (e.valid()) ++w.valid;
      values.push_back({e.start_ms, e.raw_e, e.valid()});
    }
  }
  // Epoch starts in the final second are not complete yet.
  const double expected = std::max(1.0, std::floor((window_ms - kEpochMs) / kHopMs));
  w.coverage = std::min(1.0, w.present / expected);
  w.quality = w.present == 0 ? 0.0 : static_cast<double>(w.valid) / static_cast<double>(w.present);
  try {
    w.mean = sliding_window_mean(values, window_s, now_ms);
  } catch (const StaleScore&) {
    w.mean.reset();
  }
  w.stale = !w.mean || w.quality < stale_quality || w.coverage < 0.5;
  return w;
}

class EngagementEngine {
public:
  explicit EngagementEngine(EngineConfig cfg = {}) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const EngineConfig& config() const { return cfg_; }

  // ---- epoch intake --------------------------------------------------------

  void push_epoch(const EpochScore& epoch) {
    last_epoch_ = epoch;
    recent_.push_back(epoch);

    if (in_task()) {
      if (epoch.flags & kEpochDiscontinuous) {
        fail_phase(CalibrationFailure::kStreamLost, "signal gap during calibration task", epoch.start_ms);
      } else if (epoch.start_ms >= status_.started_ms) {
        phase_epochs_.push_back(epoch);
      }
    }

    if (epoch.start_ms < floor_ms_) return;
    if (freeze_.frozen && epoch.start_ms >= freeze_.frozen_at_ms) return;
    main_.push_back(epoch);
  }

  // ---- 1 Hz scoring --------------------------------------------------------

  // Advances calibration and returns the sample for `now`; e_norm stays empty
  // until a calibration exists.
  std::optional<EngagementSample> tick(double now_ms) {
    trim(now_ms);

    if (status_.phase == CalibrationPhase::kIdle && status_.armed) try_probe(now_ms);
    if (in_task()) advance_task(now_ms);

    const auto w = window_stats(main_, cfg_.main_window_s, now_ms, cfg_.stale_quality);
    EngagementSample s;
    s.t_ms = now_ms;
    if (last_epoch_ && last_epoch_->valid()) s.raw_e_epoch = last_epoch_->raw_e;
    s.e_window = w.mean;
    if (w.mean && calibration_) s.e_norm = normalize_engagement(*w.mean, *calibration_);
    s.quality = w.quality;
    s.coverage = w.coverage;
    s.stale = w.stale;
    last_sample_ = s;
    if (!s.stale && s.e_norm) last_fresh_score_ = *s.e_norm;
    return s;
  }

  const std::optional<EngagementSample>& last_sample() const { return last_sample_; }

  // ---- calibration ---------------------------------------------------------

  // Arms calibration from scratch; relaxation begins once the probe passes.
  void start_calibration(double now_ms) {
    if (in_task()) throw CalibrationError("calibration already running");
    status_ = CalibrationStatus{};
    status_.armed = true;
    status_.started_ms = now_ms;
    relax_windows_.clear();
    word_windows_.clear();
    resume_target_ = CalibrationPhase::kRelaxation;
  }

  // Re-arms a failed calibration at the phase it failed in. Relaxation
  // windows survive a failure during word association.
  void resume_calibration(double now_ms) {
    if (status_.phase != CalibrationPhase::kFailed || !status_.resume_phase) {
      throw CalibrationError("nothing to resume");
    }
    resume_target_ = *status_.resume_phase;
    if (resume_target_ == CalibrationPhase::kRelaxation) relax_windows_.clear();
    word_windows_.clear();
    const auto keep_relax = relax_windows_.size();
    status_ = CalibrationStatus{};
    status_.armed = true;
    status_.started_ms = now_ms;
    status_.relaxation_windows = keep_relax;
  }

  void on_stream_lost(double now_ms) {
    if (in_task()) {
      fail_phase(CalibrationFailure::kStreamLost, "stream lost during calibration task", now_ms);
    } else if (status_.phase == CalibrationPhase::kIdle && status_.armed) {
      status_.armed = false;
      status_.phase = CalibrationPhase::kFailed;
      status_.failure = CalibrationFailure::kStreamLost;
      status_.failure_message = "stream lost before calibration started";
      status_.resume_phase = resume_target_;
      emit_failed(now_ms);
    }
  }

  // Installs a previously computed calibration (e.g. recovered from disk).
  void restore_calibration(const CalibrationResult& cal) {
    validate_calibration(cal);
    calibration_ = cal;
    status_ = CalibrationStatus{};
    status_.phase = CalibrationPhase::kComplete;
    status_.result = cal;
  }

  const CalibrationStatus& calibration_status() const { return status_; }
  const std::optional<CalibrationResult>& calibration() const { return calibration_; }

  // Every 10 s window value collected so far, both tasks.
  std::vector<double> calibration_windows() const {
    std::vector<double> all = relax_windows_;
    all.insert(all.end(), word_windows_.begin(), word_windows_.end());
    return all;
  }

  // ---- freezing ------------------------------------------------------------

  FreezeState on_typing_started(double now_ms) {
    if (freeze_.frozen) return freeze_;
    const auto current = current_score();
    freeze_ = FreezeState{true, current.score, now_ms, current.default_flag};
    events_.push_back({EngineEvent::Kind::kFreeze, now_ms, status_.phase, current.score, current.default_flag, {}, {}});
    return freeze_;
  }

  void on_response_delivered(double now_ms) {
    if (!freeze_.frozen) return;
    freeze_.frozen = false;
    // The main window restarts at delivery: only reading-time epochs count.
    floor_ms_ = now_ms;
    main_.clear();
    events_.push_back({EngineEvent::Kind::kUnfreeze, now_ms, status_.phase, 0.0, false, {}, {}});
  }

  const FreezeState& freeze_state() const { return freeze_; }

  // The value message injection reads: the frozen score while frozen,
  // otherwise the latest non-stale score (or the default).
  InjectableScore injectable_score() const {
    if (freeze_.frozen) return {freeze_.frozen_score, freeze_.default_flag};
    return current_score();
  }

  std::vector<EngineEvent> drain_events() {
    std::vector<EngineEvent> out;
    out.swap(events_);
    return out;
  }

private:
  bool in_task() const {
    return status_.phase == CalibrationPhase::kRelaxation || status_.phase == CalibrationPhase::kWordAssociation;
  }

  InjectableScore current_score() const {
    if (last_fresh_score_) return {*last_fresh_score_, false};
    return {cfg_.default_frozen_score, true};
  }

  void trim(double now_ms) {
    const double keep_ms = std::max({cfg_.main_window_s, cfg_.calibration_window_s, cfg_.probe_s}) * 1000.0 + kEpochMs;
    auto drop_old = [&](std::deque<EpochScore>& d) {
      while (!d.empty() && d.front().start_ms <= now_ms - keep_ms) d.pop_front();
    };
    drop_old(main_);
    drop_old(recent_);
    drop_old(phase_epochs_);
  }

  void try_probe(double now_ms) {
    const auto probe = window_stats(recent_, cfg_.probe_s, now_ms, cfg_.stale_quality);
    if (probe.coverage < 1.0) return;  // not enough signal yet
    if (probe.quality < cfg_.probe_quality) {
      status_.armed = false;
      status_.phase = CalibrationPhase::kFailed;
      status_.failure = CalibrationFailure::kQuality;
      status_.failure_message = "signal probe below quality threshold";
      status_.resume_phase = resume_target_;
      emit_failed(now_ms);
      return;
    }
    enter_phase(resume_target_, now_ms);
  }

  void enter_phase(CalibrationPhase phase, double now_ms) {
    status_.armed = false;
    status_.phase = phase;
    status_.started_ms = now_ms;
    status_.elapsed_s = 0.0;
    status_.failure = CalibrationFailure::kNone;
    status_.failure_message.clear();
    status_.resume_phase.reset();
    phase_epochs_.clear();
    events_.push_back({EngineEvent::Kind::kPhase, now_ms, phase, 0.0, false, {}, {}});
  }

  void advance_task(double now_ms) {
    status_.elapsed_s = (now_ms - status_.started_ms) / 1000.0;
    const auto w = window_stats(phase_epochs_, cfg_.calibration_window_s, now_ms, cfg_.stale_quality);
    auto& windows = status_.phase == CalibrationPhase::kRelaxation ? relax_windows_ : word_windows_;
    if (!w.stale) windows.push_back(*w.mean);
    status_.relaxation_windows = relax_windows_.size();
    status_.word_windows = word_windows_.size();

    if (now_ms - status_.started_ms < cfg_.task_s * 1000.0) return;

    if (windows.size() < static_cast<std::size_t>(cfg_.min_task_windows)) {
      fail_phase(CalibrationFailure::kQuality,
                 "only " + std::to_string(windows.size()) + " valid windows in " + to_string(status_.phase), now_ms);
      return;
    }
    if (status_.phase == CalibrationPhase::kRelaxation) {
      enter_phase(CalibrationPhase::kWordAssociation, now_ms);
      return;
    }
    finish(now_ms);
  }

  void finish(double now_ms) {
    const auto all = calibration_windows();
    const auto [lo, hi] = std::minmax_element(all.begin(), all.end());
    CalibrationResult cal{*lo, *hi};
    if (cal.e_max - cal.e_min < 1e-6) {
      status_.phase = CalibrationPhase::kFailed;
      status_.failure = CalibrationFailure::kDegenerate;
      status_.failure_message = "calibration range below 1e-6";
      status_.resume_phase = CalibrationPhase::kRelaxation;
      emit_failed(now_ms);
      return;
    }
    calibration_ = cal;
    status_.phase = CalibrationPhase::kComplete;
    status_.result = cal;
    status_.resume_phase.reset();
    // Scoring starts fresh after calibration.
    floor_ms_ = now_ms;
    main_.clear();
    events_.push_back({EngineEvent::Kind::kCalibrationComplete, now_ms, status_.phase, 0.0, false, cal, {}});
  }

  void fail_phase(CalibrationFailure why, std::string message, double now_ms) {
    const auto phase = status_.phase;
    if (phase == CalibrationPhase::kRelaxation) relax_windows_.clear();
    word_windows_.clear();
    status_.phase = CalibrationPhase::kFailed;
    status_.failure = why;
    status_.failure_message = std::move(message);
    status_.resume_phase = phase;
    status_.relaxation_windows = relax_windows_.size();
    status_.word_windows = 0;
    phase_epochs_.clear();
    emit_failed(now_ms);
  }

  void emit_failed(double now_ms) {
    events_.push_back({EngineEvent::Kind::kCalibrationFailed, now_ms, status_.phase, 0.0, false, {},
                       std::string(to_string(status_.failure)) + ": " + status_.failure_message});
  }

  EngineConfig cfg_;

  std::deque<EpochScore> main_;
  std::deque<EpochScore> recent_;
  std::deque<EpochScore> phase_epochs_;
  std::optional<EpochScore> last_epoch_;
  double floor_ms_ = -std::numeric_limits<double>::infinity();

  CalibrationStatus status_;
  CalibrationPhase resume_target_ = CalibrationPhase::kRelaxation;
  std::vector<double> relax_windows_;
  std::vector<double> word_windows_;
  std::optional<CalibrationResult> calibration_;

  FreezeState freeze_;
  std::optional<EngagementSample> last_sample_;
  std::optional<double> last_fresh_score_;

  std::vector<EngineEvent> events_;
};

// Pipeline + engine + 1 Hz tick schedule driven by frame timestamps.
class StreamProcessor {
public:
  struct Output {
    EegFrame filtered;
    std::optional<EpochScore> epoch;
    std::vector<EngagementSample> samples;
  };

  explicit StreamProcessor(const EngineConfig& cfg = {}) : pipeline_(cfg), engine_(cfg) {}

  Output push(const EegFrame& raw) {
    auto p = pipeline_.push(raw);
    Output out{p.filtered, p.epoch, {}};
    if (p.epoch) engine_.push_epoch(*p.epoch);
    if (!next_tick_ms_) next_tick_ms_ = raw.timestamp_ms + 1000.0;
    while (raw.timestamp_ms >= *next_tick_ms_) {
      if (auto s = engine_.tick(*next_tick_ms_)) out.samples.push_back(*s);
      *next_tick_ms_ += 1000.0;
    }
    last_ms_ = raw.timestamp_ms;
    return out;
  }

  // Stream time of the latest frame.
  double now_ms() const { return last_ms_; }

  EngagementEngine& engine() { return engine_; }
  const EngagementEngine& engine() const { return engine_; }

private:
  SignalPipeline pipeline_;
  EngagementEngine engine_;
  std::optional<double> next_tick_ms_;
  double last_ms_ = 0.0;
};

// Calibrates on two candidate streams sharing one time axis: frames are
// taken from `relaxation` until the engine moves to word association, then
// from `word_association` for the remaining times. Throws QualityError,
// DegenerateCalibration, or CalibrationError when it cannot complete.
inline CalibrationResult run_calibration(std::span<const EegFrame> relaxation,
                                         std::span<const EegFrame> word_association,
                                         const EngineConfig& cfg = {}) {
  StreamProcessor proc(cfg);
  auto& engine = proc.engine();
  if (relaxation.empty()) throw QualityError("empty relaxation stream");
  engine.start_calibration(relaxation.front().timestamp_ms);

  auto settled = [&] {
    const auto p = engine.calibration_status().phase;
    return p == CalibrationPhase::kComplete || p == CalibrationPhase::kFailed;
  };

  double last_t = -std::numeric_limits<double>::infinity();
  for (const auto& f : relaxation) {
    if (engine.calibration_status().phase == CalibrationPhase::kWordAssociation || settled()) break;
    proc.push(f);
    last_t = f.timestamp_ms;
  }
  for (const auto& f : word_association) {
    if (settled()) break;
    if (f.timestamp_ms <= last_t) continue;
    proc.push(f);
  }

  const auto& st = engine.calibration_status();
  switch (st.phase) {
    case CalibrationPhase::kComplete: return *st.result;
    case CalibrationPhase::kFailed:
      if (st.failure == CalibrationFailure::kDegenerate) throw DegenerateCalibration(st.failure_message);
      throw QualityError(st.failure_message);
    default: throw CalibrationError("streams ended before calibration completed");
  }
}

}  // namespace neurochat
