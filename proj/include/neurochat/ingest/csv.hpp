#pragma once

// EEG CSV: header `timestamp_ms,TP9,AF7,AF8,TP10`, LF line endings, '.'
// decimal separator. Numbers are written in shortest round-trip form, so
// export followed by replay reproduces every value exactly.

#include "neurochat/errors.hpp"
#include "neurochat/signal/types.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace neurochat {

inline constexpr std::string_view kEegCsvHeader = "timestamp_ms,TP9,AF7,AF8,TP10";

inline void append_number(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw FormatError("cannot format number");
  out.append(buf, end);
}

inline std::string format_csv_row(const EegFrame& f) {
  std::string row;
  row.reserve(96);
  append_number(row, f.timestamp_ms);
  for (double x : f.channels) {
    row.push_back(',');
    append_number(row, x);
  }
  row.push_back('\n');
  return row;
}

inline void write_csv_header(std::ostream& out) { out << kEegCsvHeader << '\n'; }

inline void write_csv(std::ostream& out, const std::vector<EegFrame>& frames) {
  write_csv_header(out);
  for (const auto& f : frames) out << format_csv_row(f);
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

// Parses one data row; false if the row is malformed.
inline bool parse_csv_row(std::string_view line, EegFrame& f) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::array<std::string_view, kChannels + 1> cells;
  std::size_t n = 0;
  while (true) {
    const auto comma = line.find(',');
    if (n == cells.size()) return false;
    cells[n++] = line.substr(0, comma);
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  if (n != cells.size()) return false;
  if (!parse_double(cells[0], f.timestamp_ms)) return false;
  for (std::size_t ch = 0; ch < kChannels; ++ch) {
    if (!parse_double(cells[ch + 1], f.channels[ch])) return false;
  }
  return true;
}

struct CsvReadResult {
  std::vector<EegFrame> frames;
  std::size_t skipped_rows = 0;
};

// Line-at-a-time reader. Throws FormatError on a bad header.
class CsvFrameReader {
public:
  explicit CsvFrameReader(std::istream& in) : in_(in) {
    std::string header;
    if (!std::getline(in_, header)) throw FormatError("empty CSV: missing header");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (header != kEegCsvHeader) throw FormatError("bad CSV header: expected " + std::string(kEegCsvHeader));
  }

  // Next well-formed frame; non-numeric rows are skipped and counted.
  bool next(EegFrame& f) {
    std::string line;
    while (std::getline(in_, line)) {
      if (line.empty()) continue;
      if (parse_csv_row(line, f)) {
        if (have_last_ && !(f.timestamp_ms > last_t_)) {
          ++skipped_;
          continue;
        }
        have_last_ = true;
        last_t_ = f.timestamp_ms;
        return true;
      }
      ++skipped_;
    }
    return false;
  }

  std::size_t skipped_rows() const { return skipped_; }

private:
  std::istream& in_;
  std::size_t skipped_ = 0;
  bool have_last_ = false;
  double last_t_ = 0.0;
};

inline CsvReadResult read_csv(std::istream& in) {
  CsvFrameReader reader(in);
  CsvReadResult r;
  EegFrame f;
  while (reader.next(f)) r.frames.push_back(f);
  r.skipped_rows = reader.skipped_rows();
  return r;
}

}  // namespace neurochat
