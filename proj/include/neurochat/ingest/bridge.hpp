#pragma once

// Decoder for the bridge wire protocol (docs/bridge-protocol.md): newline
// delimited UTF-8 JSON objects `{"t":<int ms>,"seq":<uint>,"ch":[4 numbers]}`.
//
// The decoder is total over arbitrary bytes: bad lines are counted and
// skipped. Only a sustained malformed rate (> 5 % of the lines that arrived
// within the trailing 10 s, once that span holds at least 100 lines) aborts
// the stream with ProtocolError.

#include "neurochat/errors.hpp"
#include "neurochat/signal/types.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace neurochat {

struct QualityEvent {
  enum class Kind { kMalformedLine, kSeqGap, kQueueOverflow, kStreamEnded, kSourceError };
  Kind kind;
  double t_ms = 0.0;
  std::uint64_t count = 0;  // missing frames, dropped frames, ...
  std::string detail;
};

inline const char* to_string(QualityEvent::Kind k) {
  switch (k) {
    case QualityEvent::Kind::kMalformedLine: return "malformed_line";
    case QualityEvent::Kind::kSeqGap: return "seq_gap";
    case QualityEvent::Kind::kQueueOverflow: return "queue_overflow";
    case QualityEvent::Kind::kStreamEnded: return "stream_ended";
    case QualityEvent::Kind::kSourceError: return "source_error";
  }
  return "unknown";
}

struct BridgeFrame {
  std::int64_t t = 0;
  std::uint64_t seq = 0;
  std::array<double, kChannels> ch{};
};

// Strict parse of one record (no trailing newline). Returns nullopt when
// the line violates the grammar.
inline std::optional<BridgeFrame> parse_bridge_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto j = nlohmann::json::parse(line.begin(), line.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object() || j.size() != 3) return std::nullopt;

  const auto t = j.find("t");
  const auto seq = j.find("seq");
  const auto ch = j.find("ch");
  if (t == j.end() || seq == j.end() || ch == j.end()) return std::nullopt;
  if (!t->is_number_integer() || !seq->is_number_unsigned()) return std::nullopt;
  if (!ch->is_array() || ch->size() != kChannels) return std::nullopt;

  BridgeFrame f;
  f.t = t->get<std::int64_t>();
  f.seq = seq->get<std::uint64_t>();
  for (std::size_t i = 0; i < kChannels; ++i) {
    const auto& v = (*ch)[i];
    if (!v.is_number()) return std::nullopt;
    f.ch[i] = v.get<double>();
    if (!std::isfinite(f.ch[i])) return std::nullopt;
  }
  return f;
}

class BridgeDecoder {
public:
  struct Stats {
    std::uint64_t lines = 0;
    std::uint64_t frames = 0;
    std::uint64_t malformed = 0;
    std::uint64_t missing = 0;  // frames lost according to seq
  };

  static constexpr std::size_t kMaxLineBytes = 4096;
  static constexpr double kRateSpanMs = 10000.0;
  static constexpr double kMaxMalformedFraction = 0.05;
  static constexpr std::size_t kMinLinesForRate = 100;

  // Feeds raw bytes received at `arrival_ms` (engine monotonic time).
  std::vector<EegFrame> feed(std::string_view bytes, double arrival_ms) {
    std::vector<EegFrame> out;
    for (char c : bytes) {
      if (c == '\n') {
        if (overflow_) {
          overflow_ = false;
          count_line(false, arrival_ms, "line too long");
        } else if (!partial_.empty()) {
          if (auto f = accept(partial_, arrival_ms)) out.push_back(*f);
        }
        partial_.clear();
        continue;
      }
      if (overflow_) continue;
      if (partial_.size() >= kMaxLineBytes) {
        overflow_ = true;
        partial_.clear();
        continue;
      }
      partial_.push_back(c);
    }
    return out;
  }

  // Decodes one complete line (without the newline).
  std::optional<EegFrame> accept(std::string_view line, double arrival_ms) {
    if (line.empty() || line == "\r") return std::nullopt;  // keep-alive
    auto parsed = parse_bridge_line(line);
    if (!parsed) {
      count_line(false, arrival_ms, "grammar");
      return std::nullopt;
    }
    if (have_last_ && parsed->seq <= last_seq_) {
      count_line(false, arrival_ms, "non-increasing seq");
      return std::nullopt;
    }
    if (!offset_) offset_ = arrival_ms - static_cast<double>(parsed->t);
    EegFrame f;
    f.timestamp_ms = static_cast<double>(parsed->t) + *offset_;
    f.channels = parsed->ch;
    if (have_last_ && !(f.timestamp_ms > last_t_)) {
      count_line(false, arrival_ms, "non-increasing t");
      return std::nullopt;
    }
    if (have_last_ && parsed->seq > last_seq_ + 1) {
      const auto missing = parsed->seq - last_seq_ - 1;
      stats_.missing += missing;
      events_.push_back({QualityEvent::Kind::kSeqGap, f.timestamp_ms, missing,
                         "seq " + std::to_string(last_seq_) + " -> " + std::to_string(parsed->seq)});
    }
    have_last_ = true;
    last_seq_ = parsed->seq;
    last_t_ = f.timestamp_ms;
    ++stats_.frames;
    count_line(true, arrival_ms, {});
    return f;
  }

  const Stats& stats() const { return stats_; }

  std::vector<QualityEvent> drain_events() {
    std::vector<QualityEvent> out;
    out.swap(events_);
    return out;
  }

private:
  void count_line(bool ok, double arrival_ms, const char* why) {
    ++stats_.lines;
    recent_.push_back({arrival_ms, ok});
    if (!ok) {
      ++stats_.malformed;
      ++recent_bad_;
      events_.push_back({QualityEvent::Kind::kMalformedLine, arrival_ms, 1, why});
    }
    while (!recent_.empty() && recent_.front().first <= arrival_ms - kRateSpanMs) {
      if (!recent_.front().second) --recent_bad_;
      recent_.pop_front();
    }
    if (!ok && recent_.size() >= kMinLinesForRate &&
        static_cast<double>(recent_bad_) > kMaxMalformedFraction * static_cast<double>(recent_.size())) {
      throw ProtocolError("malformed bridge lines exceed 5% over 10 s (" + std::to_string(recent_bad_) + " of " +
                          std::to_string(recent_.size()) + ")");
    }
  }

  std::string partial_;
  bool overflow_ = false;
  std::optional<double> offset_;
  bool have_last_ = false;
  std::uint64_t last_seq_ = 0;
  double last_t_ = 0.0;
  Stats stats_;
  std::deque<std::pair<double, bool>> recent_;
  std::size_t recent_bad_ = 0;
  std::vector<QualityEvent> events_;
};

// Serializes a frame in the wire grammar (used by test relays).
inline std::string encode_bridge_line(std::int64_t t, std::uint64_t seq, const std::array<double, kChannels>& ch) {
  nlohmann::json j;
  j["t"] = t;
  j["seq"] = seq;
  j["ch"] = ch;
  return j.dump() + "\n";
}

}  // namespace neurochat
