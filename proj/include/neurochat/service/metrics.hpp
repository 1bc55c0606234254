#pragma once

// metrics.jsonl: one JSON object per line, keyed by "type". Schemas are in
// docs/formats.md; the analysis tool reads the "sample" records.

#include "neurochat/engine/engine.hpp"
#include "neurochat/ingest/bridge.hpp"
#include "neurochat/service/records.hpp"

#include <nlohmann/json.hpp>

namespace neurochat {

inline nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline nlohmann::json sample_record(const EngagementSample& s, bool frozen) {
  return {{"type", "sample"},          {"t_ms", s.t_ms},       {"raw_e_epoch", opt(s.raw_e_epoch)},
          {"e_window", opt(s.e_window)}, {"e_norm", opt(s.e_norm)}, {"quality", s.quality},
          {"coverage", s.coverage},    {"stale", s.stale},     {"frozen", frozen}};
}

inline nlohmann::json event_record(const EngineEvent& e) {
  switch (e.kind) {
    case EngineEvent::Kind::kPhase:
      return {{"type", "calibration"}, {"t_ms", e.t_ms}, {"event", "phase"}, {"phase", to_string(e.phase)}};
    case EngineEvent::Kind::kCalibrationComplete: {
      nlohmann::json j{{"type", "calibration"}, {"t_ms", e.t_ms}, {"event", "complete"}, {"phase", "complete"}};
      if (e.calibration) {
        j["e_min"] = e.calibration->e_min;
        j["e_max"] = e.calibration->e_max;
      }
      return j;
    }
    case EngineEvent::Kind::kCalibrationFailed:
      return {{"type", "calibration"}, {"t_ms", e.t_ms}, {"event", "failed"}, {"phase", "failed"}, {"detail", e.detail}};
    case EngineEvent::Kind::kFreeze:
      return {{"type", "freeze"}, {"t_ms", e.t_ms}, {"score", e.value}, {"default", e.default_flag}};
    case EngineEvent::Kind::kUnfreeze:
      return {{"type", "unfreeze"}, {"t_ms", e.t_ms}};
  }
  return {{"type", "unknown"}};
}

inline nlohmann::json quality_record(const QualityEvent& q) {
  return {{"type", "quality"}, {"t_ms", q.t_ms}, {"kind", to_string(q.kind)}, {"count", q.count}, {"detail", q.detail}};
}

inline nlohmann::json calibration_status_json(const CalibrationStatus& st, double task_s) {
  nlohmann::json j{{"phase", to_string(st.phase)},
                   {"armed", st.armed},
                   {"elapsed_s", st.elapsed_s},
                   {"task_s", task_s},
                   {"relaxation_windows", st.relaxation_windows},
                   {"word_windows", st.word_windows},
                   {"failure", to_string(st.failure)},
                   {"failure_message", st.failure_message},
                   {"resume_phase", st.resume_phase ? nlohmann::json(to_string(*st.resume_phase)) : nlohmann::json()},
                   {"result", st.result ? to_json(*st.result) : nlohmann::json()}};
  return j;
}

}  // namespace neurochat
