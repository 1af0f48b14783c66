#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <string_view>

#include "recycle/errors.hpp"
#include "recycle/timestamp.hpp"

namespace recycle {

// Day categories used to pick comparable cycles for profile averaging.
enum class DayCategory { Weekday, Saturday, SunHoliday };

inline constexpr std::size_t kDayCategoryCount = 3;
inline constexpr std::size_t kMetadataWidth = 9;

inline std::string_view to_string(DayCategory c) noexcept {
  switch (c) {
    case DayCategory::Weekday: return "weekday";
    case DayCategory::Saturday: return "saturday";
    case DayCategory::SunHoliday: return "sun_holiday";
  }
  return "?";
}

class HolidayCalendar {
 public:
  HolidayCalendar() = default;
  explicit HolidayCalendar(std::set<Date> dates) : dates_(std::move(dates)) {}

  // One ISO date (YYYY-MM-DD) per line; '#' starts a comment, blank lines are skipped.
  static HolidayCalendar load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open holiday calendar " + path.string());
    HolidayCalendar cal;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto last = line.find_last_not_of(" \t\r");
      const std::string text = line.substr(first, last - first + 1);
      auto d = parse_date(text);
      if (!d) {
        throw InputError(path.string() + ": line " + std::to_string(lineno) + ": invalid date '" +
                         text + "'");
      }
      cal.add(*d);
    }
    return cal;
  }

  void add(Date d) { dates_.insert(d); }
  bool contains(Date d) const { return dates_.count(d) != 0; }
  std::size_t size() const noexcept { return dates_.size(); }
  const std::set<Date>& dates() const noexcept { return dates_; }

 private:
  std::set<Date> dates_;
};

// Monday = 0 ... Sunday = 6.
inline unsigned weekday_index(Date d) noexcept {
  return (std::chrono::weekday{d}.c_encoding() + 6u) % 7u;
}

// Holidays take precedence over Saturdays.
inline DayCategory categorize(Date d, const HolidayCalendar& cal) {
  const unsigned wd = weekday_index(d);
  if (wd == 6 || cal.contains(d)) return DayCategory::SunHoliday;
  if (wd == 5) return DayCategory::Saturday;
  return DayCategory::Weekday;
}

using MetadataVector = std::array<double, kMetadataWidth>;

// One-hot weekday (Monday first), then holiday flags for the day and the next day.
inline MetadataVector metadata(Date d, const HolidayCalendar& cal) {
  MetadataVector m{};
  m[weekday_index(d)] = 1.0;
  m[7] = cal.contains(d) ? 1.0 : 0.0;
  m[8] = cal.contains(d + std::chrono::days{1}) ? 1.0 : 0.0;
  return m;
}

}  // namespace recycle
