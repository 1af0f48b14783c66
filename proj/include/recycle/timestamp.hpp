#pragma once

// Wall-clock timestamps as seconds since 1970-01-01 00:00:00 with no time
// zone attached, plus calendar-date helpers built on <chrono>.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "recycle/errors.hpp"

namespace recycle {

using Timestamp = std::int64_t;
using Date = std::chrono::sys_days;

inline constexpr std::string_view kDefaultTimestampFormat = "%Y-%m-%d %H:%M:%S";
inline constexpr std::int64_t kSecondsPerDay = 86400;

inline Timestamp floor_div(Timestamp a, Timestamp b) {
  Timestamp q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline Timestamp floor_mod(Timestamp a, Timestamp b) { return a - floor_div(a, b) * b; }

inline Date date_of(Timestamp t) { return Date{std::chrono::days{floor_div(t, kSecondsPerDay)}}; }

inline Timestamp midnight_of(Date d) {
  return static_cast<Timestamp>(d.time_since_epoch().count()) * kSecondsPerDay;
}

namespace detail {

inline bool read_number(std::string_view text, std::size_t& pos, std::size_t max_digits, int& out) {
  std::size_t end = pos;
  while (end < text.size() && end - pos < max_digits && text[end] >= '0' && text[end] <= '9') ++end;
  if (end == pos) return false;
  auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + end, out);
  if (ec != std::errc{}) return false;
  pos = end;
  return true;
}

inline void append_padded(std::string& out, long value, int width) {
  std::string digits = std::to_string(value < 0 ? -value : value);
  if (value < 0) out.push_back('-');
  for (int i = static_cast<int>(digits.size()); i < width; ++i) out.push_back('0');
  out += digits;
}

}  // namespace detail

// Parses `text` with a strftime-like pattern. Supported conversions:
// %Y %m %d %H %M %S and %%. Returns nullopt on any mismatch or invalid date.
inline std::optional<Timestamp> parse_timestamp(std::string_view text,
                                                std::string_view pattern = kDefaultTimestampFormat) {
  int year = 1970, month = 1, day = 1, hour = 0, minute = 0, second = 0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != '%' || i + 1 == pattern.size()) {
      if (pos >= text.size() || text[pos] != pattern[i]) return std::nullopt;
      ++pos;
      continue;
    }
    const char conv = pattern[++i];
    bool ok = true;
    switch (conv) {
      case 'Y': ok = detail::read_number(text, pos, 4, year); break;
      case 'm': ok = detail::read_number(text, pos, 2, month); break;
      case 'd': ok = detail::read_number(text, pos, 2, day); break;
      case 'H': ok = detail::read_number(text, pos, 2, hour); break;
      case 'M': ok = detail::read_number(text, pos, 2, minute); break;
      case 'S': ok = detail::read_number(text, pos, 2, second); break;
      case '%':
        ok = pos < text.size() && text[pos] == '%';
        ++pos;
        break;
      default:
        throw ConfigError(std::string("unsupported timestamp conversion %") + conv);
    }
    if (!ok) return std::nullopt;
  }
  if (pos != text.size()) return std::nullopt;
  if (hour > 23 || minute > 59 || second > 59) return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year{year},
                                        std::chrono::month{static_cast<unsigned>(month)},
                                        std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) return std::nullopt;
  return midnight_of(Date{ymd}) + hour * 3600 + minute * 60 + second;
}

inline std::string format_timestamp(Timestamp t, std::string_view pattern = kDefaultTimestampFormat) {
  const Date d = date_of(t);
  const std::chrono::year_month_day ymd{d};
  const Timestamp secs = t - midnight_of(d);
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != '%' || i + 1 == pattern.size()) {
      out.push_back(pattern[i]);
      continue;
    }
    switch (pattern[++i]) {
      case 'Y': detail::append_padded(out, static_cast<int>(ymd.year()), 4); break;
      case 'm': detail::append_padded(out, static_cast<unsigned>(ymd.month()), 2); break;
      case 'd': detail::append_padded(out, static_cast<unsigned>(ymd.day()), 2); break;
      case 'H': detail::append_padded(out, secs / 3600, 2); break;
      case 'M': detail::append_padded(out, (secs / 60) % 60, 2); break;
      case 'S': detail::append_padded(out, secs % 60, 2); break;
      case '%': out.push_back('%'); break;
      default: throw ConfigError(std::string("unsupported timestamp conversion %") + pattern[i]);
    }
  }
  return out;
}

inline std::optional<Date> parse_date(std::string_view text) {
  auto t = parse_timestamp(text, "%Y-%m-%d");
  if (!t) return std::nullopt;
  return date_of(*t);
}

inline std::string format_date(Date d) { return format_timestamp(midnight_of(d), "%Y-%m-%d"); }

}  // namespace recycle
