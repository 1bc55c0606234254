#pragma once

// Deterministic synthetic EEG: one sinusoid per band plus Gaussian noise.
// Every channel carries the same sinusoids and independent noise.

#include "neurochat/config.hpp"
#include "neurochat/errors.hpp"
#include "neurochat/signal/types.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace neurochat {

struct SynthComponent {
  double amplitude_uv = 0.0;
  double frequency_hz = 0.0;
};

struct SynthSpec {
  SynthComponent theta{0.0, 5.0};
  SynthComponent alpha{0.0, 9.0};
  SynthComponent beta{0.0, 15.0};
  double noise_std_uv = 0.0;
  double duration_s = 60.0;
  std::uint64_t seed = 1;
  double start_ms = 0.0;

  void validate(const EngineConfig& cfg = {}) const {
    auto inside = [](const SynthComponent& c, const Band& b) {
      return c.frequency_hz >= b.low_hz && c.frequency_hz < b.high_hz;
    };
    if (!inside(theta, cfg.theta) || !inside(alpha, cfg.alpha) || !inside(beta, cfg.beta)) {
      throw ContractViolation("synthetic component frequency outside its band");
    }
    for (const auto* c : {&theta, &alpha, &beta}) {
      if (!(std::isfinite(c->amplitude_uv) && c->amplitude_uv >= 0.0)) {
        throw ContractViolation("synthetic amplitude must be finite and >= 0");
      }
    }
    if (!(std::isfinite(noise_std_uv) && noise_std_uv >= 0.0)) throw ContractViolation("noise_std must be >= 0");
    if (!(std::isfinite(duration_s) && duration_s >= 0.0)) throw ContractViolation("duration must be >= 0");
    if (!std::isfinite(start_ms)) throw ContractViolation("start_ms must be finite");
  }
};

inline std::size_t synth_sample_count(const SynthSpec& spec) {
  return static_cast<std::size_t>(std::llround(spec.duration_s * kSampleRateHz));
}

// Sample i of the stream. Phases use absolute stream time, so two specs
// generated over the same time axis line up sample for sample.
class SynthGenerator {
public:
  explicit SynthGenerator(SynthSpec spec, const EngineConfig& cfg = {})
      : spec_(spec), rng_(spec.seed), noise_(0.0, 1.0), total_(synth_sample_count(spec)) {
    spec_.validate(cfg);
  }

  bool done() const { return index_ >= total_; }
  std::size_t total() const { return total_; }

  EegFrame next() {
    EegFrame f;
    f.timestamp_ms = spec_.start_ms + static_cast<double>(index_) * kSamplePeriodMs;
    const double t = f.timestamp_ms / 1000.0;
    double clean = 0.0;
    for (const auto* c : {&spec_.theta, &spec_.alpha, &spec_.beta}) {
      if (c->amplitude_uv > 0.0) clean += c->amplitude_uv * std::sin(2.0 * std::numbers::pi * c->frequency_hz * t);
    }
    for (auto& x : f.channels) {
      x = clean;
      if (spec_.noise_std_uv > 0.0) x += spec_.noise_std_uv * noise_(rng_);
    }
    ++index_;
    return f;
  }

private:
  SynthSpec spec_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_;
  std::size_t total_;
  std::size_t index_ = 0;
};

inline std::vector<EegFrame> synth_generate(const SynthSpec& spec, const EngineConfig& cfg = {}) {
  SynthGenerator gen(spec, cfg);
  std::vector<EegFrame> out;
  out.reserve(gen.total());
  while (!gen.done()) out.push_back(gen.next());
  return out;
}

// ---- spec files -------------------------------------------------------------
//
// A spec file is JSON: either a single spec object or
//   {"speed": "max" | "realtime" | <factor>, "segments": [spec, ...]}
// Segments play back to back on one continuous time axis.

struct SynthScript {
  std::vector<SynthSpec> segments;
  double speed = 0.0;  // 0 = as fast as possible, 1 = realtime, k = k x realtime
};

inline SynthComponent parse_component(const nlohmann::json& j, SynthComponent fallback) {
  if (j.is_null()) return fallback;
  return SynthComponent{j.value("amplitude_uv", fallback.amplitude_uv), j.value("frequency_hz", fallback.frequency_hz)};
}

inline SynthSpec parse_synth_spec(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.theta = parse_component(j.value("theta", nlohmann::json()), s.theta);
    s.alpha = parse_component(j.value("alpha", nlohmann::json()), s.alpha);
    s.beta = parse_component(j.value("beta", nlohmann::json()), s.beta);
    s.noise_std_uv = j.value("noise_std_uv", s.noise_std_uv);
    s.duration_s = j.value("duration_s", s.duration_s);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad synth spec: ") + e.what());
  }
  return s;
}

inline double parse_speed(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "max") return 0.0;
    if (s == "realtime") return 1.0;
    throw FormatError("speed must be max, realtime or a number");
  }
  if (j.is_number() && j.get<double>() >= 0.0) return j.get<double>();
  throw FormatError("speed must be max, realtime or a non-negative number");
}

inline SynthScript parse_synth_script(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("synth spec must be a JSON object");
  SynthScript script;
  if (j.contains("speed")) script.speed = parse_speed(j["speed"]);
  if (j.contains("segments")) {
    if (!j["segments"].is_array() || j["segments"].empty()) throw FormatError("segments must be a non-empty array");
    for (const auto& seg : j["segments"]) script.segments.push_back(parse_synth_spec(seg));
  } else {
    script.segments.push_back(parse_synth_spec(j));
  }
  double t = 0.0;
  for (auto& seg : script.segments) {
    seg.start_ms = t;
    t += static_cast<double>(synth_sample_count(seg)) * kSamplePeriodMs;
    seg.validate();
  }
  return script;
}

}  // namespace neurochat
