#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace neurochat {

inline constexpr int kSampleRateHz = 256;
inline constexpr std::size_t kChannels = 4;
inline constexpr double kSamplePeriodMs = 1000.0 / kSampleRateHz;  // 3.90625, exact in binary

// Channel order as streamed by the headset: TP9, AF7, AF8, TP10.
inline constexpr std::array<const char*, kChannels> kChannelNames{"TP9", "AF7", "AF8", "TP10"};

// One sample instant across the four electrodes, in microvolts.
struct EegFrame {
  double timestamp_ms = 0.0;
  std::array<double, kChannels> channels{};

  friend bool operator==(const EegFrame&, const EegFrame&) = default;
};

// Epoch quality flags.
enum EpochFlag : std::uint32_t {
  kEpochOk = 0,
  kEpochDiscontinuous = 1u << 0,
  kEpochArtifact = 1u << 1,
  kEpochInvalidEngagement = 1u << 2,
};

// 1 s of filtered samples (256 per channel); starts are 250 ms apart.
struct Epoch {
  double start_ms = 0.0;
  std::array<std::vector<double>, kChannels> samples;
  std::uint32_t flags = kEpochOk;

  bool discontinuous() const { return (flags & kEpochDiscontinuous) != 0; }
};

struct BandPowers {
  double theta = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double epoch_start_ms = 0.0;
};

// Raw engagement ratio beta / (alpha + theta). `valid` is false when the
// denominator fell below epsilon (flat or disconnected signal).
struct EngagementValue {
  double raw_e = 0.0;
  bool valid = false;
};

struct CalibrationResult {
  double e_min = 0.0;
  double e_max = 0.0;

  friend bool operator==(const CalibrationResult&, const CalibrationResult&) = default;
};

}  // namespace neurochat
