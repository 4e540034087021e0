#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include "pheno/common.hpp"

namespace pheno {

// Days since 1970-01-01 for a proleptic Gregorian date (Howard Hinnant's
// civil-days algorithm).
inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

// Calendar day, stored as days since epoch.
struct Date {
  std::int64_t days = 0;

  auto operator<=>(const Date&) const = default;

  static std::optional<Date> parse(const std::string& s) {
    int y, m, d;
    char tail;
    if (std::sscanf(s.c_str(), "%d-%d-%d%c", &y, &m, &d, &tail) != 3) {
      return std::nullopt;
    }
    if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
    return Date{days_from_civil(y, m, d)};
  }

  std::string str() const {
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
    return buf;
  }
};

// A UTC instant plus the local UTC offset in effect when it was recorded.
// Local wall-clock arithmetic only ever uses the record's own offset.
struct Timestamp {
  std::int64_t epoch_s = 0;   // seconds since epoch, UTC
  std::int32_t offset_s = 0;  // local offset from UTC

  std::int64_t local_s() const { return epoch_s + offset_s; }

  Date local_date() const {
    std::int64_t ls = local_s();
    std::int64_t day = ls >= 0 ? ls / 86400 : (ls - 86399) / 86400;
    return Date{day};
  }

  // Seconds past local midnight, in [0, 86400).
  int local_time_of_day() const {
    std::int64_t ls = local_s() % 86400;
    if (ls < 0) ls += 86400;
    return static_cast<int>(ls);
  }

  double local_hour() const { return local_time_of_day() / 3600.0; }

  auto operator<=>(const Timestamp&) const = default;

  // RFC 3339 with numeric offset or 'Z'. Fractional seconds are accepted
  // and truncated.
  static std::optional<Timestamp> parse(const std::string& s) {
    int y, mo, d, h, mi;
    double sec;
    int n = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%lf%n", &y, &mo, &d, &h, &mi,
                    &sec, &n) != 6) {
      return std::nullopt;
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 ||
        mi > 59 || sec < 0 || sec >= 61) {
      return std::nullopt;
    }
    const char* rest = s.c_str() + n;
    std::int32_t off = 0;
    if (*rest == 'Z' || *rest == 'z') {
      if (rest[1] != '\0') return std::nullopt;
    } else if (*rest == '+' || *rest == '-') {
      int oh, om;
      char tail;
      if (std::sscanf(rest + 1, "%d:%d%c", &oh, &om, &tail) != 2) {
        return std::nullopt;
      }
      if (oh < 0 || oh > 23 || om < 0 || om > 59) return std::nullopt;
      off = (oh * 3600 + om * 60) * (*rest == '-' ? -1 : 1);
    } else {
      return std::nullopt;
    }
    std::int64_t days = days_from_civil(y, mo, d);
    std::int64_t local = days * 86400 + h * 3600 + mi * 60 +
                         static_cast<std::int64_t>(sec);
    return Timestamp{local - off, off};
  }

  std::string str() const {
    std::int64_t ls = local_s();
    std::int64_t day = ls >= 0 ? ls / 86400 : (ls - 86399) / 86400;
    int tod = static_cast<int>(ls - day * 86400);
    int y, m, d;
    civil_from_days(day, y, m, d);
    char buf[40];
    int oh = std::abs(offset_s) / 3600;
    int om = (std::abs(offset_s) % 3600) / 60;
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d%c%02d:%02d",
                  y, m, d, tod / 3600, (tod % 3600) / 60, tod % 60,
                  offset_s < 0 ? '-' : '+', oh, om);
    return buf;
  }
};

}  // namespace pheno
