// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 ceutrack contributors
//
// Event stream and annotation I/O.
//
// Events CSV: optional header, then one "t,x,y,p" line per event with
// p in {-1,1} or {0,1} (0 maps to -1).
// Events binary: magic "EVT1", u16 sensor_w, u16 sensor_h, u64 count,
// then 16-byte records (u64 t, u16 x, u16 y, i8 p, 1 pad byte),
// everything little-endian.
// Ground truth: one "x,y,w,h,absent" line per frame. Results: "x,y,w,h".
// Attributes: one "video_id,ATTR1|ATTR2|..." line per video.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ceutrack/errors.hpp"
#include "ceutrack/geometry.hpp"

namespace ceutrack {

struct EventPoint {
  std::uint64_t t = 0;  // microseconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t p = 1;  // polarity, -1 or +1

  friend bool operator==(const EventPoint&, const EventPoint&) = default;
};

/// Time-bounded slice of an event stream; events sorted non-decreasing by t,
/// all timestamps in [t_start, t_end).
struct EventWindow {
  std::vector<EventPoint> events;
  std::uint64_t t_start = 0;
  std::uint64_t t_end = 0;
  std::uint16_t sensor_w = 0;
  std::uint16_t sensor_h = 0;

  std::uint64_t duration() const { return t_end - t_start; }
};

struct TrackAnnotation {
  int frame_idx = 0;
  BBox box;
  bool absent = false;
};

// The 17-attribute vocabulary used for per-attribute evaluation reports.
inline const std::array<std::string, 17>& attribute_vocabulary() {
  static const std::array<std::string, 17> tags = {
      "FOC", "VC",  "ROT", "FM",  "POC", "LI",  "SV",  "BOM", "MB",
      "OE",  "CM",  "DEF", "OV",  "BC",  "ARC", "NMO", "IV"};
  return tags;
}

inline bool is_known_attribute(std::string_view tag) {
  const auto& v = attribute_vocabulary();
  return std::find(v.begin(), v.end(), tag) != v.end();
}

namespace detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, long long byte_offset, long long line) {
  field = trim(field);
  T value{};
  const auto* begin = field.data();
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || field.empty()) {
    throw ParseError("invalid numeric field '" + std::string(field) + "'",
                     byte_offset, line);
  }
  return value;
}

// Splits on ',' keeping empty fields (so "1,,3" is a visible error, not a skip).
inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

/// Throws ValidationError if any event lies outside the declared resolution
/// or carries a polarity other than +/-1.
inline void validate_events(const std::vector<EventPoint>& events,
                            std::uint16_t sensor_w, std::uint16_t sensor_h) {
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.x >= sensor_w || e.y >= sensor_h) {
      throw ValidationError("event " + std::to_string(i) + " at (" +
                            std::to_string(e.x) + "," + std::to_string(e.y) +
                            ") outside declared resolution " +
                            std::to_string(sensor_w) + "x" + std::to_string(sensor_h));
    }
    if (e.p != 1 && e.p != -1) {
      throw ValidationError("event " + std::to_string(i) + " has polarity " +
                            std::to_string(int(e.p)));
    }
  }
}

/// Parses "t,x,y,p" lines. An optional header line (first line starting with a
/// non-numeric character) is skipped. Polarity 0 maps to -1.
inline std::vector<EventPoint> parse_events_csv(std::string_view text) {
  std::vector<EventPoint> events;
  std::size_t offset = 0;
  long long line_no = 0;
  bool first = true;
  while (offset < text.size()) {
    std::size_t eol = text.find('\n', offset);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view raw = text.substr(offset, eol - offset);
    const std::string_view line = detail::trim(raw);
    ++line_no;
    const long long line_offset = static_cast<long long>(offset);
    offset = eol + 1;
    if (line.empty()) continue;
    if (first) {
      first = false;
      const char c = line.front();
      if (!(c >= '0' && c <= '9') && c != '-' && c != '+') continue;  // header
    }
    const auto fields = detail::split_fields(line);
    if (fields.size() != 4) {
      throw ParseError("expected 4 fields 't,x,y,p', got " + std::to_string(fields.size()),
                       line_offset, line_no);
    }
    EventPoint e;
    e.t = detail::parse_number<std::uint64_t>(fields[0], line_offset, line_no);
    e.x = detail::parse_number<std::uint16_t>(fields[1], line_offset, line_no);
    e.y = detail::parse_number<std::uint16_t>(fields[2], line_offset, line_no);
    const int p = detail::parse_number<int>(fields[3], line_offset, line_no);
    if (p != -1 && p != 0 && p != 1) {
      throw ParseError("polarity must be -1, 0 or 1, got " + std::to_string(p),
                       line_offset, line_no);
    }
    e.p = (p == 1) ? std::int8_t(1) : std::int8_t(-1);
    events.push_back(e);
  }
  return events;
}

inline std::string serialize_events_csv(const std::vector<EventPoint>& events) {
  std::string out = "t,x,y,p\n";
  char buf[64];
  for (const auto& e : events) {
    std::snprintf(buf, sizeof(buf), "%llu,%u,%u,%d\n",
                  static_cast<unsigned long long>(e.t), unsigned(e.x), unsigned(e.y), int(e.p));
    out += buf;
  }
  return out;
}

struct BinaryEvents {
  std::vector<EventPoint> events;
  std::uint16_t sensor_w = 0;
  std::uint16_t sensor_h = 0;
};

inline constexpr std::size_t kBinaryHeaderSize = 4 + 2 + 2 + 8;
inline constexpr std::size_t kBinaryRecordSize = 16;

inline std::vector<unsigned char> serialize_events_binary(
    const std::vector<EventPoint>& events, std::uint16_t sensor_w, std::uint16_t sensor_h) {
  validate_events(events, sensor_w, sensor_h);
  std::vector<unsigned char> out;
  out.reserve(kBinaryHeaderSize + events.size() * kBinaryRecordSize);
  out.insert(out.end(), {'E', 'V', 'T', '1'});
  detail::put_u16(out, sensor_w);
  detail::put_u16(out, sensor_h);
  detail::put_u64(out, events.size());
  for (const auto& e : events) {
    detail::put_u64(out, e.t);
    detail::put_u16(out, e.x);
    detail::put_u16(out, e.y);
    out.push_back(static_cast<unsigned char>(e.p));
    out.push_back(0);  // pad to 16 bytes
  }
  return out;
}

inline BinaryEvents parse_events_binary(const unsigned char* data, std::size_t size) {
  if (size < kBinaryHeaderSize) {
    throw ParseError("truncated header, need " + std::to_string(kBinaryHeaderSize) + " bytes",
                     static_cast<long long>(size));
  }
  if (!(data[0] == 'E' && data[1] == 'V' && data[2] == 'T' && data[3] == '1')) {
    throw ParseError("bad magic, expected 'EVT1'", 0);
  }
  BinaryEvents out;
  out.sensor_w = detail::get_u16(data + 4);
  out.sensor_h = detail::get_u16(data + 6);
  const std::uint64_t count = detail::get_u64(data + 8);
  const std::uint64_t need = kBinaryHeaderSize + count * kBinaryRecordSize;
  if (size < need) {
    throw ParseError("truncated stream, header declares " + std::to_string(count) + " records",
                     static_cast<long long>(size));
  }
  out.events.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const unsigned char* r = data + kBinaryHeaderSize + i * kBinaryRecordSize;
    EventPoint& e = out.events[i];
    e.t = detail::get_u64(r);
    e.x = detail::get_u16(r + 8);
    e.y = detail::get_u16(r + 10);
    e.p = static_cast<std::int8_t>(r[12]);
    if (e.p != 1 && e.p != -1) {
      throw ParseError("record " + std::to_string(i) + " has polarity " + std::to_string(int(e.p)),
                       static_cast<long long>(kBinaryHeaderSize + i * kBinaryRecordSize + 12));
    }
  }
  validate_events(out.events, out.sensor_w, out.sensor_h);
  return out;
}

inline BinaryEvents parse_events_binary(const std::vector<unsigned char>& bytes) {
  return parse_events_binary(bytes.data(), bytes.size());
}

/// Events with t0 <= t < t1, order preserved. Input must be sorted by t.
inline EventWindow slice_window(const std::vector<EventPoint>& events,
                                std::uint64_t t0, std::uint64_t t1,
                                std::uint16_t sensor_w, std::uint16_t sensor_h) {
  if (t0 >= t1) throw ValidationError("slice_window requires t0 < t1");
  if (!std::is_sorted(events.begin(), events.end(),
                      [](const EventPoint& a, const EventPoint& b) { return a.t < b.t; })) {
    throw ValidationError("slice_window requires events sorted by timestamp");
  }
  EventWindow w;
  w.t_start = t0;
  w.t_end = t1;
  w.sensor_w = sensor_w;
  w.sensor_h = sensor_h;
  const auto lo = std::lower_bound(events.begin(), events.end(), t0,
                                   [](const EventPoint& e, std::uint64_t t) { return e.t < t; });
  const auto hi = std::lower_bound(lo, events.end(), t1,
                                   [](const EventPoint& e, std::uint64_t t) { return e.t < t; });
  w.events.assign(lo, hi);
  return w;
}

/// Ground truth lines "x,y,w,h,absent"; line i becomes frame i.
inline std::vector<TrackAnnotation> parse_annotations(std::string_view text) {
  std::vector<TrackAnnotation> out;
  std::size_t offset = 0;
  long long line_no = 0;
  while (offset < text.size()) {
    std::size_t eol = text.find('\n', offset);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = detail::trim(text.substr(offset, eol - offset));
    ++line_no;
    offset = eol + 1;
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != 5) {
      throw ParseError("expected 5 fields 'x,y,w,h,absent', got " + std::to_string(fields.size()),
                       -1, line_no);
    }
    TrackAnnotation a;
    a.frame_idx = static_cast<int>(out.size());
    a.box.x = detail::parse_number<double>(fields[0], -1, line_no);
    a.box.y = detail::parse_number<double>(fields[1], -1, line_no);
    a.box.w = detail::parse_number<double>(fields[2], -1, line_no);
    a.box.h = detail::parse_number<double>(fields[3], -1, line_no);
    const int absent = detail::parse_number<int>(fields[4], -1, line_no);
    if (absent != 0 && absent != 1) {
      throw ParseError("absent flag must be 0 or 1", -1, line_no);
    }
    a.absent = absent == 1;
    if (!a.absent && (a.box.w < 0.0 || a.box.h < 0.0)) {
      throw ParseError("negative box size on a non-absent frame", -1, line_no);
    }
    out.push_back(a);
  }
  return out;
}

inline std::string serialize_annotations(const std::vector<TrackAnnotation>& anns) {
  std::string out;
  char buf[128];
  for (const auto& a : anns) {
    std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f,%.4f,%d\n",
                  a.box.x, a.box.y, a.box.w, a.box.h, a.absent ? 1 : 0);
    out += buf;
  }
  return out;
}

/// Tracker result lines "x,y,w,h"; line i is the prediction for frame i.
inline std::vector<BBox> parse_results(std::string_view text) {
  std::vector<BBox> out;
  std::size_t offset = 0;
  long long line_no = 0;
  while (offset < text.size()) {
    std::size_t eol = text.find('\n', offset);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = detail::trim(text.substr(offset, eol - offset));
    ++line_no;
    offset = eol + 1;
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() != 4) {
      throw ParseError("expected 4 fields 'x,y,w,h', got " + std::to_string(fields.size()),
                       -1, line_no);
    }
    BBox b;
    b.x = detail::parse_number<double>(fields[0], -1, line_no);
    b.y = detail::parse_number<double>(fields[1], -1, line_no);
    b.w = detail::parse_number<double>(fields[2], -1, line_no);
    b.h = detail::parse_number<double>(fields[3], -1, line_no);
    if (b.w < 0.0 || b.h < 0.0) {
      throw ParseError("negative box size", -1, line_no);
    }
    out.push_back(b);
  }
  return out;
}

inline std::string serialize_results(const std::vector<BBox>& boxes) {
  std::string out;
  char buf[128];
  for (const auto& b : boxes) {
    std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f,%.4f\n", b.x, b.y, b.w, b.h);
    out += buf;
  }
  return out;
}

/// Attribute lines "video_id,ATTR1|ATTR2|...". Tags must come from the
/// 17-tag vocabulary. The tag list may be empty ("video_id,").
inline std::vector<std::pair<std::string, std::set<std::string>>> parse_attributes(
    std::string_view text) {
  std::vector<std::pair<std::string, std::set<std::string>>> out;
  std::size_t offset = 0;
  long long line_no = 0;
  while (offset < text.size()) {
    std::size_t eol = text.find('\n', offset);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = detail::trim(text.substr(offset, eol - offset));
    ++line_no;
    offset = eol + 1;
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string_view::npos || comma == 0) {
      throw ParseError("expected 'video_id,TAG|TAG|...'", -1, line_no);
    }
    std::pair<std::string, std::set<std::string>> entry;
    entry.first = std::string(line.substr(0, comma));
    std::string_view tags = line.substr(comma + 1);
    while (!tags.empty()) {
      std::size_t bar = tags.find('|');
      std::string_view tag = detail::trim(tags.substr(0, bar));
      if (!tag.empty()) {
        if (!is_known_attribute(tag)) {
          throw ParseError("unknown attribute tag '" + std::string(tag) + "'", -1, line_no);
        }
        entry.second.insert(std::string(tag));
      }
      if (bar == std::string_view::npos) break;
      tags.remove_prefix(bar + 1);
    }
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace ceutrack
