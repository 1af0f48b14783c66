#pragma once

// Univariate time series on a regular grid: CSV ingestion, resampling,
// gap filling, min-max normalization and temporal train/val/test splits.
//
// Missing values are stored as quiet NaN. Every function here is pure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "recycle/errors.hpp"
#include "recycle/timestamp.hpp"

namespace recycle {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) noexcept { return std::isnan(v); }

struct TimeSeries {
  Timestamp start = 0;         // timestamp of values[0]
  std::int64_t resolution = 0; // grid step in seconds
  std::vector<double> values;
  std::string name;

  std::size_t size() const noexcept { return values.size(); }
  Timestamp timestamp(std::size_t i) const noexcept {
    return start + static_cast<Timestamp>(i) * resolution;
  }
  std::size_t missing_count() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), is_missing));
  }
  // Sub-series [begin, begin + count).
  TimeSeries slice(std::size_t begin, std::size_t count) const {
    TimeSeries out{timestamp(begin), resolution, {}, name};
    out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin),
                      values.begin() + static_cast<std::ptrdiff_t>(begin + count));
    return out;
  }
};

struct NormStats {
  double min = 0.0;
  double max = 1.0;
  std::string fitted_on = "train";

  void validate() const {
    if (!(max > min) || !std::isfinite(min) || !std::isfinite(max)) {
      throw InputError("invalid normalization stats: max must exceed min (min=" +
                       std::to_string(min) + ", max=" + std::to_string(max) + ")");
    }
  }
};

struct SplitSpec {
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;

  void validate() const {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0) {
      throw ConfigError("split fractions must be non-negative");
    }
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-12) {
      throw ConfigError("split fractions must sum to 1");
    }
  }
};

struct CsvOptions {
  std::string time_column = "date";
  std::string value_column = "value";
  std::string timestamp_format = std::string(kDefaultTimestampFormat);
  char delimiter = ',';
};

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, delimiter)) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    std::size_t lead = 0;
    while (lead < field.size() && field[lead] == ' ') ++lead;
    field.erase(0, lead);
    if (field.size() >= 2 && field.front() == '"' && field.back() == '"') {
      field = field.substr(1, field.size() - 2);
    }
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == delimiter) fields.emplace_back();
  return fields;
}

inline std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                                const std::string& path) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw InputError(path + ": column '" + name + "' not found in header");
  return static_cast<std::size_t>(it - header.begin());
}

inline double parse_value(const std::string& text) {
  if (text.empty() || text == "NaN" || text == "nan" || text == "NA" || text == "null") {
    return kMissing;
  }
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw InputError("unparseable value '" + text + "'");
  return v;
}

}  // namespace detail

// Reads one value column of a CSV into a regular grid. The grid step is the
// most frequent difference between consecutive timestamps; grid positions
// without a row become missing values.
inline TimeSeries load_csv(const std::filesystem::path& path, const CsvOptions& options = {}) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  const std::string where = path.string();

  std::string line;
  if (!std::getline(in, line)) throw InputError(where + ": empty file");
  const auto header = detail::split_fields(line, options.delimiter);
  const std::size_t time_col = detail::column_index(header, options.time_column, where);
  const std::size_t value_col = detail::column_index(header, options.value_column, where);

  std::vector<Timestamp> times;
  std::vector<double> values;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_fields(line, options.delimiter);
    if (fields.size() <= std::max(time_col, value_col)) {
      throw InputError(where + ": row " + std::to_string(row) + " has too few fields");
    }
    auto t = parse_timestamp(fields[time_col], options.timestamp_format);
    if (!t) {
      throw InputError(where + ": row " + std::to_string(row) + ": unparseable timestamp '" +
                       fields[time_col] + "'");
    }
    if (!times.empty() && *t == times.back()) {
      throw InputError(where + ": duplicate timestamp " + fields[time_col] + " at row " +
                       std::to_string(row));
    }
    if (!times.empty() && *t < times.back()) {
      throw InputError(where + ": row " + std::to_string(row) + ": timestamp " + fields[time_col] +
                       " is earlier than its predecessor");
    }
    double v = 0;
    try {
      v = detail::parse_value(fields[value_col]);
    } catch (const InputError& e) {
      throw InputError(where + ": row " + std::to_string(row) + ": " + e.what());
    }
    times.push_back(*t);
    values.push_back(v);
  }
  if (times.size() < 2) throw InputError(where + ": need at least 2 data rows");

  std::map<std::int64_t, std::size_t> diff_counts;
  for (std::size_t i = 1; i < times.size(); ++i) ++diff_counts[times[i] - times[i - 1]];
  // ties resolve to the smallest step
  std::int64_t step = 0;
  std::size_t best = 0;
  for (auto [diff, count] : diff_counts) {
    if (count > best) {
      best = count;
      step = diff;
    }
  }

  TimeSeries ts;
  ts.start = times.front();
  ts.resolution = step;
  ts.name = options.value_column;
  ts.values.assign(static_cast<std::size_t>((times.back() - times.front()) / step) + 1, kMissing);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const std::int64_t offset = times[i] - ts.start;
    if (offset % step != 0) {
      throw InputError(where + ": timestamp " + format_timestamp(times[i], options.timestamp_format) +
                       " is off the inferred " + std::to_string(step) + " s grid");
    }
    ts.values[static_cast<std::size_t>(offset / step)] = values[i];
  }
  return ts;
}

// Writes the series with a header `time_column,value_column`; missing values
// are written as empty fields.
inline void write_csv(const TimeSeries& ts, const std::filesystem::path& path,
                      const CsvOptions& options = {}) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(17);
  out << options.time_column << options.delimiter << options.value_column << '\n';
  for (std::size_t i = 0; i < ts.size(); ++i) {
    out << format_timestamp(ts.timestamp(i), options.timestamp_format) << options.delimiter;
    if (!is_missing(ts.values[i])) out << ts.values[i];
    out << '\n';
  }
}

// Aggregates m = target / resolution consecutive steps by their mean,
// ignoring missing members. A trailing partial window is dropped.
inline TimeSeries resample(const TimeSeries& ts, std::int64_t target_resolution) {
  if (target_resolution <= 0 || ts.resolution <= 0 || target_resolution % ts.resolution != 0) {
    throw InputError("resample: target step " + std::to_string(target_resolution) +
                     " s is not an integer multiple of " + std::to_string(ts.resolution) + " s");
  }
  const auto m = static_cast<std::size_t>(target_resolution / ts.resolution);
  TimeSeries out{ts.start, target_resolution, {}, ts.name};
  out.values.reserve(ts.size() / m);
  for (std::size_t w = 0; w + m <= ts.size(); w += m) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t i = w; i < w + m; ++i) {
      if (!is_missing(ts.values[i])) {
        sum += ts.values[i];
        ++n;
      }
    }
    out.values.push_back(n ? sum / static_cast<double>(n) : kMissing);
  }
  return out;
}

// Interior gaps take the mean of the nearest observed values on either side;
// leading and trailing gaps copy the nearest observed value.
inline TimeSeries fill_missing(const TimeSeries& ts) {
  TimeSeries out = ts;
  auto& v = out.values;
  std::optional<std::size_t> prev;
  std::size_t i = 0;
  while (i < v.size()) {
    if (!is_missing(v[i])) {
      prev = i++;
      continue;
    }
    std::size_t next = i;
    while (next < v.size() && is_missing(v[next])) ++next;
    double fill = 0;
    if (prev && next < v.size()) {
      fill = 0.5 * (v[*prev] + v[next]);
    } else if (prev) {
      fill = v[*prev];
    } else if (next < v.size()) {
      fill = v[next];
    } else {
      throw InputError("fill_missing: series '" + ts.name + "' has no observed values");
    }
    std::fill(v.begin() + static_cast<std::ptrdiff_t>(i), v.begin() + static_cast<std::ptrdiff_t>(next),
              fill);
    i = next;
  }
  return out;
}

// Min/max over every observed value of `train`.
inline NormStats fit_norm(const TimeSeries& train) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : train.values) {
    if (is_missing(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) {
    throw InputError("fit_norm: training portion of '" + train.name + "' is constant or empty");
  }
  return NormStats{lo, hi, "train"};
}

// Fits on the leading train_frac share of the series only.
inline NormStats fit_norm(const TimeSeries& ts, const SplitSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(std::floor(spec.train_frac * static_cast<double>(ts.size()) + 1e-9));
  return fit_norm(ts.slice(0, std::min(n, ts.size())));
}

inline double normalize(double v, const NormStats& s) noexcept { return (v - s.min) / (s.max - s.min); }
inline double denormalize(double v, const NormStats& s) noexcept { return v * (s.max - s.min) + s.min; }

inline TimeSeries normalize(const TimeSeries& ts, const NormStats& stats) {
  stats.validate();
  TimeSeries out = ts;
  for (double& v : out.values) v = normalize(v, stats);
  return out;
}

inline TimeSeries denormalize(const TimeSeries& ts, const NormStats& stats) {
  stats.validate();
  TimeSeries out = ts;
  for (double& v : out.values) v = denormalize(v, stats);
  return out;
}

struct SeriesSplit {
  TimeSeries train;
  TimeSeries val;
  TimeSeries test;
};

// Cycle counts per split for a series of `total_cycles` whole cycles.
struct SplitCycles {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

inline SplitCycles split_cycles(std::size_t total_cycles, const SplitSpec& spec) {
  auto share = [&](double frac) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(total_cycles) + 1e-9));
  };
  return {share(spec.train_frac), share(spec.val_frac), share(spec.test_frac)};
}

// Contiguous train/val/test slices of a series whose first step is a cycle
// boundary. Each split is floored to whole cycles of `cycle_length` steps; the
// remainder is dropped at the end. Every split with a non-zero fraction must
// hold at least `min_cycles` cycles.
inline SeriesSplit split(const TimeSeries& ts, const SplitSpec& spec, std::size_t cycle_length,
                         std::size_t min_cycles) {
  spec.validate();
  if (cycle_length == 0) throw ConfigError("split: cycle length must be positive");
  auto feasible = [&](std::size_t cycles) {
    const SplitCycles c = split_cycles(cycles, spec);
    return (spec.train_frac == 0 || c.train >= min_cycles) &&
           (spec.val_frac == 0 || c.val >= min_cycles) && (spec.test_frac == 0 || c.test >= min_cycles);
  };
  const std::size_t total = ts.size() / cycle_length;
  if (!feasible(total)) {
    std::size_t needed = total + 1;
    while (!feasible(needed)) ++needed;
    throw InputError("split: series '" + ts.name + "' has " + std::to_string(ts.size()) +
                     " steps; at least " + std::to_string(needed * cycle_length) + " steps (" +
                     std::to_string(needed) + " cycles) are required so that every split holds " +
                     std::to_string(min_cycles) + " cycles");
  }
  const SplitCycles c = split_cycles(total, spec);
  SeriesSplit out;
  out.train = ts.slice(0, c.train * cycle_length);
  out.val = ts.slice(c.train * cycle_length, c.val * cycle_length);
  out.test = ts.slice((c.train + c.val) * cycle_length, c.test * cycle_length);
  return out;
}

}  // namespace recycle
