#pragma once

#include "neurochat/config.hpp"
#include "neurochat/errors.hpp"
#include "neurochat/signal/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace neurochat {

// Sum of PSD bins whose centre f satisfies low <= f < high, times the bin width.
inline double band_power(std::span<const double> psd, Band band) {
  if (!(band.low_hz >= 1.0 && band.high_hz <= 30.0 && band.low_hz < band.high_hz)) {
    throw ContractViolation("band must lie within [1, 30] Hz");
  }
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < psd.size(); ++k) {
    const double f = k * kBinWidthHz;
    if (f >= band.low_hz && f < band.high_hz) {
      sum += psd[k];
      ++used;
    }
  }
  if (used == 0) throw ContractViolation("band contains no PSD bins");
  return sum * kBinWidthHz;
}

// Per-channel band power averaged over the four channels.
inline double band_power(const ChannelPsd& psd, Band band) {
  double sum = 0.0;
  for (const auto& ch : psd) sum += band_power(ch, band);
  return sum / static_cast<double>(psd.size());
}

inline BandPowers extract_bands(const ChannelPsd& psd, const EngineConfig& cfg, double epoch_start_ms = 0.0) {
  return BandPowers{band_power(psd, cfg.theta), band_power(psd, cfg.alpha), band_power(psd, cfg.beta),
                    epoch_start_ms};
}

// E = beta / (alpha + theta).
inline EngagementValue engagement_index(const BandPowers& b, double epsilon = 1e-12) {
  if (!(std::isfinite(b.theta) && std::isfinite(b.alpha) && std::isfinite(b.beta)) || b.theta < 0.0 ||
      b.alpha < 0.0 || b.beta < 0.0) {
    throw ContractViolation("band powers must be finite and non-negative");
  }
  const double denom = b.alpha + b.theta;
  if (denom < epsilon) return EngagementValue{0.0, false};
  return EngagementValue{b.beta / denom, true};
}

struct TimedValue {
  double t_ms = 0.0;
  double value = 0.0;
  bool valid = true;
};

// Plain arithmetic mean of the valid values with t in (now - window, now].
// Throws StaleScore when none qualify.
inline double sliding_window_mean(std::span<const TimedValue> values, double window_s, double now_ms) {
  const double lo = now_ms - window_s * 1000.0;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (v.valid && v.t_ms > lo && v.t_ms <= now_ms) {
      sum += v.value;
      ++n;
    }
  }
  if (n == 0) throw StaleScore("no valid engagement values in window");
  return sum / static_cast<double>(n);
}

inline void validate_calibration(const CalibrationResult& cal) {
  if (!(std::isfinite(cal.e_min) && std::isfinite(cal.e_max) && cal.e_min < cal.e_max)) {
    throw CalibrationError("calibration requires e_min < e_max");
  }
}

// (E - E_min) / (E_max - E_min), clamped to [0, 1].
inline double normalize_engagement(double e_window_mean, const CalibrationResult& cal) {
  validate_calibration(cal);
  if (!std::isfinite(e_window_mean)) throw ContractViolation("engagement value must be finite");
  const double n = (e_window_mean - cal.e_min) / (cal.e_max - cal.e_min);
  return std::clamp(n, 0.0, 1.0);
}

}  // namespace neurochat
