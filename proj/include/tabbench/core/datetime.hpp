#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace tabbench::datetime {

// Days since 1970-01-01 for a proleptic Gregorian date (H. Hinnant's algorithm).
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) noexcept {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
  std::int64_t year;
  unsigned month;
  unsigned day;
};

constexpr CivilDate civil_from_days(std::int64_t z) noexcept {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {y + (m <= 2), m, d};
}

namespace detail {

inline bool read_fixed(std::string_view s, std::size_t pos, std::size_t width, int& out) {
  if (pos + width > s.size()) return false;
  for (std::size_t i = pos; i < pos + width; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
  }
  std::from_chars(s.data() + pos, s.data() + pos + width, out);
  return true;
}

constexpr bool leap(std::int64_t y) noexcept { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

constexpr unsigned month_length(std::int64_t y, unsigned m) noexcept {
  constexpr unsigned lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && leap(y) ? 29 : lengths[m - 1];
}

}  // namespace detail

/// Parses ISO-8601 `YYYY-MM-DD[(T| )HH:MM[:SS[.fff]]][Z|(+|-)HH:MM]` into
/// seconds since the Unix epoch (UTC). Returns nullopt for anything else.
inline std::optional<double> parse_iso8601(std::string_view s) {
  int year = 0, month = 0, day = 0;
  if (!detail::read_fixed(s, 0, 4, year) || s.size() < 10 || s[4] != '-' || s[7] != '-' ||
      !detail::read_fixed(s, 5, 2, month) || !detail::read_fixed(s, 8, 2, day)) {
    return std::nullopt;
  }
  if (month < 1 || month > 12 || day < 1 ||
      static_cast<unsigned>(day) > detail::month_length(year, static_cast<unsigned>(month))) {
    return std::nullopt;
  }
  double seconds = static_cast<double>(days_from_civil(year, static_cast<unsigned>(month),
                                                       static_cast<unsigned>(day))) *
                   86400.0;
  std::size_t pos = 10;
  if (pos == s.size()) return seconds;
  if (s[pos] != 'T' && s[pos] != ' ') return std::nullopt;
  ++pos;
  int hh = 0, mm = 0;
  if (!detail::read_fixed(s, pos, 2, hh) || pos + 2 >= s.size() || s[pos + 2] != ':' ||
      !detail::read_fixed(s, pos + 3, 2, mm) || hh > 23 || mm > 59) {
    return std::nullopt;
  }
  seconds += hh * 3600.0 + mm * 60.0;
  pos += 5;
  if (pos < s.size() && s[pos] == ':') {
    int ss = 0;
    if (!detail::read_fixed(s, pos + 1, 2, ss) || ss > 60) return std::nullopt;
    seconds += ss;
    pos += 3;
    if (pos < s.size() && s[pos] == '.') {
      std::size_t end = pos + 1;
      while (end < s.size() && s[end] >= '0' && s[end] <= '9') ++end;
      if (end == pos + 1) return std::nullopt;
      double frac = 0.0;
      std::from_chars(s.data() + pos, s.data() + end, frac);
      seconds += frac;
      pos = end;
    }
  }
  if (pos == s.size()) return seconds;
  if (s[pos] == 'Z' && pos + 1 == s.size()) return seconds;
  if ((s[pos] == '+' || s[pos] == '-') && pos + 6 == s.size() && s[pos + 3] == ':') {
    int oh = 0, om = 0;
    if (!detail::read_fixed(s, pos + 1, 2, oh) || !detail::read_fixed(s, pos + 4, 2, om)) {
      return std::nullopt;
    }
    const double offset = oh * 3600.0 + om * 60.0;
    return s[pos] == '+' ? seconds - offset : seconds + offset;
  }
  return std::nullopt;
}

/// Formats seconds since the epoch as `YYYY-MM-DDTHH:MM:SS[.fraction]`
/// such that parse_iso8601 returns the same value.
inline std::string format_iso8601(double seconds) {
  const double whole = std::floor(seconds);
  const auto total = static_cast<std::int64_t>(whole);
  std::int64_t days = total / 86400;
  std::int64_t rem = total % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const CivilDate date = civil_from_days(days);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lld",
                static_cast<long long>(date.year), date.month, date.day,
                static_cast<long long>(rem / 3600), static_cast<long long>((rem % 3600) / 60),
                static_cast<long long>(rem % 60));
  std::string out = buf;
  const double frac = seconds - whole;
  if (frac > 0.0) {
    char fbuf[32];
    auto res = std::to_chars(fbuf, fbuf + sizeof fbuf, frac);
    std::string f(fbuf, res.ptr);  // "0.xxx" or "1e-05"-style
    if (f.rfind("0.", 0) == 0) {
      out += f.substr(1);
    } else {
      std::snprintf(fbuf, sizeof fbuf, "%.9f", frac);
      out += std::string(fbuf).substr(1);
    }
  }
  return out;
}

}  // namespace tabbench::datetime
