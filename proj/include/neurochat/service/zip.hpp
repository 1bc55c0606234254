#pragma once

// Minimal zip archives: stored entries only (no compression), CRC-32 from
// zlib. Entry timestamps are fixed so identical contents give identical
// archives.

#include "neurochat/errors.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace neurochat::zip {

struct Entry {
  std::string name;
  std::string data;
};

namespace detail {

inline void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

inline void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint16_t get16(std::string_view s, std::size_t at) {
  if (at + 2 > s.size()) throw FormatError("zip: truncated");
  return static_cast<std::uint16_t>(static_cast<unsigned char>(s[at]) | static_cast<unsigned char>(s[at + 1]) << 8);
}

inline std::uint32_t get32(std::string_view s, std::size_t at) {
  if (at + 4 > s.size()) throw FormatError("zip: truncated");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = v << 8 | static_cast<unsigned char>(s[at + static_cast<std::size_t>(i)]);
  return v;
}

inline std::uint32_t crc(std::string_view data) {
  uLong c = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < data.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(data.size() - done, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(data.data() + done), chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(c);
}

constexpr std::uint16_t kDosTime = 0;       // 00:00:00
constexpr std::uint16_t kDosDate = 0x0021;  // 1980-01-01

}  // namespace detail

inline std::string write(const std::vector<Entry>& entries) {
  using namespace detail;
  std::string out;
  std::string central;
  for (const auto& e : entries) {
    if (e.data.size() > 0xfffffffeu || out.size() > 0xfffffffeu) throw FormatError("zip: entry too large");
    const auto offset = static_cast<std::uint32_t>(out.size());
    const auto c = crc(e.data);
    const auto size = static_cast<std::uint32_t>(e.data.size());
    const auto name_len = static_cast<std::uint16_t>(e.name.size());

    put32(out, 0x04034b50);
    put16(out, 20);  // version needed
    put16(out, 0x0800);  // UTF-8 names
    put16(out, 0);   // stored
    put16(out, kDosTime);
    put16(out, kDosDate);
    put32(out, c);
    put32(out, size);
    put32(out, size);
    put16(out, name_len);
    put16(out, 0);
    out += e.name;
    out += e.data;

    put32(central, 0x02014b50);
    put16(central, 20);
    put16(central, 20);
    put16(central, 0x0800);
    put16(central, 0);
    put16(central, kDosTime);
    put16(central, kDosDate);
    put32(central, c);
    put32(central, size);
    put32(central, size);
    put16(central, name_len);
    put16(central, 0);  // extra
    put16(central, 0);  // comment
    put16(central, 0);  // disk
    put16(central, 0);  // internal attrs
    put32(central, 0);  // external attrs
    put32(central, offset);
    central += e.name;
  }
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  out += central;
  put32(out, 0x06054b50);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put16(out, static_cast<std::uint16_t>(entries.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, cd_offset);
  put16(out, 0);
  return out;
}

inline bool looks_like_zip(std::string_view data) { return data.size() >= 4 && data.substr(0, 4) == "PK\x03\x04"; }

// Reads a stored-only archive, verifying CRCs.
inline std::vector<Entry> read(std::string_view data) {
  using namespace detail;
  if (data.size() < 22) throw FormatError("zip: too short");
  std::size_t eocd = std::string_view::npos;
  const std::size_t lowest = data.size() > 22 + 0xffff ? data.size() - 22 - 0xffff : 0;
  for (std::size_t i = data.size() - 22 + 1; i-- > lowest;) {
    if (get32(data, i) == 0x06054b50) {
      eocd = i;
      break;
    }
  }
  if (eocd == std::string_view::npos) throw FormatError("zip: end of central directory not found");
  const auto count = get16(data, eocd + 10);
  std::size_t at = get32(data, eocd + 16);

  std::vector<Entry> entries;
  for (std::uint16_t i = 0; i < count; ++i) {
    if (get32(data, at) != 0x02014b50) throw FormatError("zip: bad central directory");
    const auto method = get16(data, at + 10);
    const auto c = get32(data, at + 16);
    const auto size = get32(data, at + 20);
    const auto name_len = get16(data, at + 28);
    const auto extra_len = get16(data, at + 30);
    const auto comment_len = get16(data, at + 32);
    const auto local = get32(data, at + 42);
    if (at + 46 + name_len > data.size()) throw FormatError("zip: truncated");
    Entry e;
    e.name = std::string(data.substr(at + 46, name_len));
    at += 46u + name_len + extra_len + comment_len;

    if (method != 0) throw FormatError("zip: entry " + e.name + " is compressed; only stored entries are supported");
    if (get32(data, local) != 0x04034b50) throw FormatError("zip: bad local header");
    const std::size_t body = local + 30u + get16(data, local + 26) + get16(data, local + 28);
    if (body + size > data.size()) throw FormatError("zip: truncated entry " + e.name);
    e.data = std::string(data.substr(body, size));
    if (crc(e.data) != c) throw FormatError("zip: CRC mismatch in " + e.name);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace neurochat::zip
