#pragma once

#include "neurochat/errors.hpp"
#include "neurochat/signal/types.hpp"

#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace neurochat {

inline constexpr std::size_t kEpochSamples = kSampleRateHz;      // 1 s
inline constexpr std::size_t kHopSamples = kSampleRateHz / 4;    // 250 ms
inline constexpr double kHopMs = 250.0;
inline constexpr double kEpochMs = 1000.0;
inline constexpr double kMaxGapMs = 250.0;

// Cuts a filtered stream into 1 s epochs every 250 ms. The first epoch is
// emitted once a full second is buffered; afterwards one per 64 new samples.
// An epoch whose samples straddle a timestamp gap > 250 ms is flagged
// discontinuous rather than bridged.
class Epocher {
public:
  std::optional<Epoch> push(const EegFrame& frame) {
    if (!buffer_.empty() && !(frame.timestamp_ms > buffer_.back().timestamp_ms)) {
      throw ContractViolation("frame timestamps must strictly increase");
    }
    buffer_.push_back(frame);
    if (buffer_.size() > kEpochSamples) buffer_.pop_front();
    ++since_emit_;

    if (buffer_.size() < kEpochSamples) return std::nullopt;
    if (emitted_any_ && since_emit_ < kHopSamples) return std::nullopt;

    emitted_any_ = true;
    since_emit_ = 0;

    Epoch e;
    e.start_ms = buffer_.front().timestamp_ms;
    for (auto& ch : e.samples) ch.reserve(kEpochSamples);
    for (std::size_t i = 0; i < buffer_.size(); ++i) {
      const auto& f = buffer_[i];
      for (std::size_t ch = 0; ch < kChannels; ++ch) e.samples[ch].push_back(f.channels[ch]);
      if (i > 0 && f.timestamp_ms - buffer_[i - 1].timestamp_ms > kMaxGapMs) e.flags |= kEpochDiscontinuous;
    }
    return e;
  }

  void reset() {
    buffer_.clear();
    since_emit_ = 0;
    emitted_any_ = false;
  }

private:
  std::deque<EegFrame> buffer_;
  std::size_t since_emit_ = 0;
  bool emitted_any_ = false;
};

inline std::vector<Epoch> epoch_stream(std::span<const EegFrame> filtered) {
  Epocher epocher;
  std::vector<Epoch> out;
  for (const auto& f : filtered) {
    if (auto e = epocher.push(f)) out.push_back(std::move(*e));
  }
  return out;
}

}  // namespace neurochat
