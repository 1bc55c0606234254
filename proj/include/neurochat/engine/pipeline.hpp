#pragma once

#include "neurochat/config.hpp"
#include "neurochat/signal/engagement.hpp"
#include "neurochat/signal/epoch.hpp"
#include "neurochat/signal/filters.hpp"
#include "neurochat/signal/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace neurochat {

// Per-epoch result of the DSP chain.
struct EpochScore {
  double start_ms = 0.0;
  BandPowers bands;
  double raw_e = 0.0;
  double peak_uv = 0.0;
  std::uint32_t flags = kEpochOk;

  bool valid() const { return flags == kEpochOk; }
};

inline double peak_abs(const Epoch& epoch) {
  double peak = 0.0;
  for (const auto& ch : epoch.samples) {
    for (double x : ch) peak = std::max(peak, std::abs(x));
  }
  return peak;
}

// Flags epochs that exceed the amplitude bound or straddle a timestamp gap.
// Returns the flags to OR into the epoch; 0 means valid.
inline std::uint32_t artifact_gate(const Epoch& epoch, double artifact_uv = 200.0) {
  std::uint32_t flags = kEpochOk;
  if (epoch.discontinuous()) flags |= kEpochDiscontinuous;
  if (peak_abs(epoch) > artifact_uv) flags |= kEpochArtifact;
  return flags;
}

// Raw frame -> filtered frame -> epochs -> gated band powers and raw E.
// Owns all per-stream state; not shared between threads.
class SignalPipeline {
public:
  struct Output {
    EegFrame filtered;
    std::optional<EpochScore> epoch;
  };

  explicit SignalPipeline(const EngineConfig& cfg)
      : cfg_(cfg),
        filters_(cfg.bandpass_low_hz, cfg.bandpass_high_hz, cfg.bandpass_order, cfg.notch_hz, cfg.notch_q,
                 cfg.sample_rate_hz),
        spectrum_(cfg.spectrum_window) {
    cfg_.validate();
  }

  Output push(const EegFrame& raw) {
    Output out{raw, std::nullopt};
    filters_.process(out.filtered);
    if (auto epoch = epocher_.push(out.filtered)) out.epoch = score(*epoch);
    return out;
  }

  EpochScore score(const Epoch& epoch) {
    EpochScore s;
    s.start_ms = epoch.start_ms;
    s.peak_uv = peak_abs(epoch);
    s.flags = artifact_gate(epoch, cfg_.artifact_uv);
    s.bands = extract_bands(spectrum_.psd(epoch), cfg_, epoch.start_ms);
    const auto e = engagement_index(s.bands, cfg_.epsilon);
    if (e.valid) {
      s.raw_e = e.raw_e;
    } else {
      s.flags |= kEpochInvalidEngagement;
    }
    return s;
  }

  const EngineConfig& config() const { return cfg_; }

private:
  EngineConfig cfg_;
  ChannelFilterBank filters_;
  Epocher epocher_;
  Spectrum spectrum_;
};

}  // namespace neurochat
