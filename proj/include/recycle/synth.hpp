#pragma once

// Synthetic load-like series: a daily sinusoid whose amplitude and level
// depend on the day category, an optional weekday-specific pattern that the
// category profiles cannot represent, an optional linear trend and Gaussian
// noise.

#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "recycle/calendar.hpp"
#include "recycle/errors.hpp"
#include "recycle/series.hpp"
#include "recycle/timestamp.hpp"

namespace recycle {

struct SynthConfig {
  std::string start = "2020-01-06";  // a Monday
  std::size_t days = 1096;
  std::int64_t resolution = 3600;
  double level = 10.0;
  double daily_amplitude = 3.0;
  // Per-category multipliers of the daily amplitude and additive level
  // shifts, in Weekday, Saturday, SunHoliday order.
  std::array<double, kDayCategoryCount> category_amplitude{1.0, 0.7, 0.5};
  std::array<double, kDayCategoryCount> category_offset{0.0, -1.0, -2.0};
  // Amplitude of the weekday pattern (Monday morning peak, Friday afternoon dip).
  double pattern_amplitude = 0.0;
  double trend_per_day = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (days == 0) throw ConfigError("synth: days must be positive");
    if (resolution <= 0 || 86400 % resolution != 0) {
      throw ConfigError("synth: resolution must divide one day, got " + std::to_string(resolution));
    }
    if (!(noise_sigma >= 0.0)) throw ConfigError("synth: noise_sigma must be non-negative");
    first_day();
  }

  Date first_day() const {
    const auto d = parse_date(start);
    if (!d) throw ConfigError("synth: start '" + start + "' is not a YYYY-MM-DD date");
    return *d;
  }
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = {{"start", c.start},
       {"days", c.days},
       {"resolution", c.resolution},
       {"level", c.level},
       {"daily_amplitude", c.daily_amplitude},
       {"category_amplitude", c.category_amplitude},
       {"category_offset", c.category_offset},
       {"pattern_amplitude", c.pattern_amplitude},
       {"trend_per_day", c.trend_per_day},
       {"noise_sigma", c.noise_sigma},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  SynthConfig d;
  c.start = j.value("start", d.start);
  c.days = j.value("days", d.days);
  c.resolution = j.value("resolution", d.resolution);
  c.level = j.value("level", d.level);
  c.daily_amplitude = j.value("daily_amplitude", d.daily_amplitude);
  c.category_amplitude = j.value("category_amplitude", d.category_amplitude);
  c.category_offset = j.value("category_offset", d.category_offset);
  c.pattern_amplitude = j.value("pattern_amplitude", d.pattern_amplitude);
  c.trend_per_day = j.value("trend_per_day", d.trend_per_day);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.seed = j.value("seed", d.seed);
}

// Shape of the weekday pattern at fraction `phase` in [0, 1) of the day.
inline double weekday_pattern(unsigned weekday, double phase) {
  auto bump = [](double centre, double width, double p) {
    const double z = (p - centre) / width;
    return std::exp(-0.5 * z * z);
  };
  switch (weekday) {
    case 0: return bump(0.35, 0.06, phase);   // Monday
    case 4: return -bump(0.65, 0.08, phase);  // Friday
    default: return 0.0;
  }
}

// Noise-free value at step `i`.
inline double synth_clean_value(const SynthConfig& cfg, std::size_t i, const HolidayCalendar& cal) {
  const Date first = cfg.first_day();
  const std::size_t steps_per_day = static_cast<std::size_t>(86400 / cfg.resolution);
  const std::size_t day = i / steps_per_day;
  const double phase = static_cast<double>(i % steps_per_day) / static_cast<double>(steps_per_day);
  const Date date = first + std::chrono::days{static_cast<int>(day)};
  const auto cat = static_cast<std::size_t>(categorize(date, cal));
  const double daily = -std::cos(2.0 * std::numbers::pi * phase);
  return cfg.level + cfg.category_offset[cat] + cfg.daily_amplitude * cfg.category_amplitude[cat] * daily +
         cfg.pattern_amplitude * weekday_pattern(weekday_index(date), phase) +
         cfg.trend_per_day * (static_cast<double>(i) / static_cast<double>(steps_per_day));
}

inline TimeSeries synthesize(const SynthConfig& cfg, const HolidayCalendar& cal = {}) {
  cfg.validate();
  const std::size_t steps_per_day = static_cast<std::size_t>(86400 / cfg.resolution);
  const std::size_t n = cfg.days * steps_per_day;
  TimeSeries ts;
  ts.start = midnight_of(cfg.first_day());
  ts.resolution = cfg.resolution;
  ts.name = "synthetic";
  ts.values.resize(n);
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    ts.values[i] = synth_clean_value(cfg, i, cal);
    if (cfg.noise_sigma > 0.0) ts.values[i] += cfg.noise_sigma * noise(rng);
  }
  return ts;
}

// Expected |noise|, the MAE of a forecaster that knows the clean signal.
inline double noise_floor_mae(const SynthConfig& cfg) {
  return cfg.noise_sigma * std::sqrt(2.0 / std::numbers::pi);
}

}  // namespace recycle
