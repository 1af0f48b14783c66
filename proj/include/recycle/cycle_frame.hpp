#pragma once

// Primary cycle compression: a univariate series becomes an L x D matrix
// whose rows are whole cycles (days by default). On top of the frame live the
// recent historic profiles (per-category means of the last k cycles), the
// residuals against them, the encoder/decoder window samples and the two
// naive baselines.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "recycle/calendar.hpp"
#include "recycle/errors.hpp"
#include "recycle/matrix.hpp"
#include "recycle/series.hpp"
#include "recycle/timestamp.hpp"

namespace recycle {

struct CycleFrame {
  Matrix values;                // L x D
  std::vector<Date> row_dates;  // calendar date of each row's first step
  Timestamp start = 0;          // timestamp of values(0, 0)
  std::int64_t resolution = 0;  // seconds per step
  std::string name;

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t cycle_length() const noexcept { return values.cols(); }
  Timestamp row_start(std::size_t r) const noexcept {
    return start + static_cast<Timestamp>(r * cycle_length()) * resolution;
  }
  // First row whose date is `d`, or rows() if absent.
  std::size_t row_of(Date d) const {
    auto it = std::lower_bound(row_dates.begin(), row_dates.end(), d);
    if (it == row_dates.end() || *it != d) return rows();
    return static_cast<std::size_t>(it - row_dates.begin());
  }
};

// Index of the first step that starts a cycle. A cycle starts where
// (t - anchor_offset * resolution) is a multiple of cycle_length * resolution,
// i.e. at midnight for daily cycles with a zero offset.
inline std::size_t first_cycle_boundary(const TimeSeries& ts, std::size_t cycle_length,
                                        std::size_t anchor_offset = 0) {
  const std::int64_t period = static_cast<std::int64_t>(cycle_length) * ts.resolution;
  const Timestamp shift = static_cast<Timestamp>(anchor_offset) * ts.resolution;
  for (std::size_t i = 0; i < cycle_length && i < ts.size(); ++i) {
    if (floor_mod(ts.timestamp(i) - shift, period) == 0) return i;
  }
  throw InputError("series '" + ts.name + "' has no cycle boundary within its first " +
                   std::to_string(cycle_length) + " steps");
}

// The part of `ts` covered by whole cycles, starting at a cycle boundary.
inline TimeSeries aligned_span(const TimeSeries& ts, std::size_t cycle_length,
                               std::size_t anchor_offset = 0) {
  const std::size_t lead = first_cycle_boundary(ts, cycle_length, anchor_offset);
  const std::size_t rows = (ts.size() - lead) / cycle_length;
  return ts.slice(lead, rows * cycle_length);
}

inline CycleFrame compress(const TimeSeries& ts, std::size_t cycle_length,
                           std::size_t anchor_offset = 0) {
  if (cycle_length == 0) throw ConfigError("compress: cycle length must be positive");
  if (ts.missing_count() != 0) {
    throw InputError("compress: series '" + ts.name + "' still has missing values");
  }
  if (ts.size() < cycle_length) {
    throw InputError("compress: series '" + ts.name + "' is shorter than one cycle");
  }
  const TimeSeries span = aligned_span(ts, cycle_length, anchor_offset);
  const std::size_t rows = span.size() / cycle_length;
  if (rows == 0) {
    throw InputError("compress: series '" + ts.name + "' holds no complete cycle");
  }
  CycleFrame frame;
  frame.values = Matrix(rows, cycle_length, span.values);
  frame.start = span.start;
  frame.resolution = span.resolution;
  frame.name = span.name;
  frame.row_dates.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) frame.row_dates.push_back(date_of(frame.row_start(r)));
  return frame;
}

inline TimeSeries decompress(const CycleFrame& frame) {
  return TimeSeries{frame.start, frame.resolution, frame.values.data(), frame.name};
}

// Profiles of a frame together with the residuals against them. Rows before
// valid_from lack k prior same-category cycles and hold zeros.
struct ResidualFrame {
  Matrix residuals;
  Matrix profiles;
  std::size_t valid_from = 0;
  std::size_t k = 0;
  // When true the profiles are identically zero and the residuals are the raw
  // rows (residual learning switched off).
  bool zero_profiles = false;
};

namespace detail {

inline std::size_t category_slot(DayCategory c) { return static_cast<std::size_t>(c); }

// First row from which every row has at least k prior rows of its own category.
inline std::size_t warmup_end(const CycleFrame& frame, std::size_t k, const HolidayCalendar& cal) {
  std::array<std::size_t, kDayCategoryCount> seen{};
  std::size_t valid_from = 0;
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    auto& count = seen[category_slot(categorize(frame.row_dates[r], cal))];
    if (count < k) valid_from = r + 1;
    ++count;
  }
  return valid_from;
}

inline void mean_of_rows(const Matrix& m, const std::vector<std::size_t>& rows, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t r : rows) {
    auto src = m.row(r);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += src[c];
  }
  const double n = static_cast<double>(rows.size());
  for (double& v : out) v /= n;
}

// The k most recent rows before `before` sharing `category`, newest first.
inline std::vector<std::size_t> prior_same_category(const CycleFrame& frame, std::size_t before,
                                                    DayCategory category, std::size_t k,
                                                    const HolidayCalendar& cal) {
  std::vector<std::size_t> rows;
  for (std::size_t r = before; r-- > 0 && rows.size() < k;) {
    if (categorize(frame.row_dates[r], cal) == category) rows.push_back(r);
  }
  return rows;
}

}  // namespace detail

// Recent historic profile of `row`: mean of the k most recent strictly-prior
// rows in the same day category.
inline std::vector<double> rhp(const CycleFrame& frame, std::size_t row, std::size_t k,
                               const HolidayCalendar& cal) {
  if (k == 0) throw ConfigError("rhp: k must be positive");
  if (row >= frame.rows()) throw InputError("rhp: row " + std::to_string(row) + " out of range");
  const DayCategory category = categorize(frame.row_dates[row], cal);
  const auto rows = detail::prior_same_category(frame, row, category, k, cal);
  if (rows.size() < k) {
    const std::size_t earliest = detail::warmup_end(frame, k, cal);
    throw WarmupError("rhp: row " + std::to_string(row) + " (" + format_date(frame.row_dates[row]) +
                          ", " + std::string(to_string(category)) + ") has only " +
                          std::to_string(rows.size()) + " prior rows of its category, " +
                          std::to_string(k) + " needed; earliest valid row is " +
                          std::to_string(earliest),
                      earliest);
  }
  std::vector<double> out(frame.cycle_length());
  detail::mean_of_rows(frame.values, rows, out);
  return out;
}

inline ResidualFrame residual_frame(const CycleFrame& frame, std::size_t k, const HolidayCalendar& cal) {
  if (k == 0) throw ConfigError("residual_frame: k must be positive");
  const std::size_t valid_from = detail::warmup_end(frame, k, cal);
  if (valid_from >= frame.rows()) {
    throw WarmupError("residual_frame: frame of " + std::to_string(frame.rows()) +
                          " rows has no row with " + std::to_string(k) +
                          " prior rows of its category in the whole remaining frame",
                      valid_from);
  }
  const std::size_t D = frame.cycle_length();
  ResidualFrame out{Matrix(frame.rows(), D), Matrix(frame.rows(), D), valid_from, k, false};

  std::array<std::deque<std::size_t>, kDayCategoryCount> recent;
  std::vector<std::size_t> members;
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    auto& window = recent[detail::category_slot(categorize(frame.row_dates[r], cal))];
    if (r >= valid_from) {
      members.assign(window.rbegin(), window.rend());  // newest first
      auto profile = out.profiles.row(r);
      detail::mean_of_rows(frame.values, members, profile);
      auto res = out.residuals.row(r);
      auto raw = frame.values.row(r);
      for (std::size_t c = 0; c < D; ++c) res[c] = raw[c] - profile[c];
    }
    window.push_back(r);
    if (window.size() > k) window.pop_front();
  }
  return out;
}

// Residual learning disabled: zero profiles, residuals are the raw rows.
inline ResidualFrame zero_profile_frame(const CycleFrame& frame, std::size_t valid_from) {
  ResidualFrame out{frame.values, Matrix(frame.rows(), frame.cycle_length()), valid_from, 0, true};
  return out;
}

// How the decoder-side profiles of a window are formed.
enum class ProfileHorizon {
  // Each forecast row uses its own recent historic profile, which may average
  // earlier rows inside the forecast window.
  Rolling,
  // Every forecast row uses only rows strictly before the forecast start.
  Anchored,
};

struct WindowOptions {
  std::size_t history = 21;   // H, cycles
  std::size_t horizon = 7;    // F, cycles
  std::size_t stride = 1;     // cycles between consecutive anchors
  ProfileHorizon profile_horizon = ProfileHorizon::Rolling;
};

struct WindowSample {
  Matrix encoder_input;     // H x (D+M): residual row | metadata
  Matrix decoder_input;     // F x (D+M): profile row | metadata
  Matrix target_residuals;  // F x D
  Matrix target_rhp;        // F x D
  Matrix target_raw;        // F x D, normalized ground truth
  std::vector<double> last_observed;  // raw row anchor-1
  std::size_t anchor_row = 0;
  Date anchor_date{};
  Timestamp forecast_start = 0;
  std::int64_t resolution = 0;
};

namespace detail {

inline void write_row(Matrix& dst, std::size_t r, std::span<const double> values, const MetadataVector& meta) {
  auto out = dst.row(r);
  std::copy(values.begin(), values.end(), out.begin());
  std::copy(meta.begin(), meta.end(), out.begin() + static_cast<std::ptrdiff_t>(values.size()));
}

}  // namespace detail

inline Date row_date_or_extrapolated(const CycleFrame& frame, std::size_t r) {
  if (r < frame.rows()) return frame.row_dates[r];
  return frame.row_dates.back() + std::chrono::days{static_cast<int>(r + 1 - frame.rows())};
}

// Profiles for the forecast rows [anchor, anchor + F). Rolling profiles
// average rows strictly before each forecast row; anchored ones only rows
// before the anchor. Rows past the end of the frame fall back to the most
// recent rows available.
inline Matrix forecast_profiles(const CycleFrame& frame, std::size_t anchor, std::size_t horizon,
                                std::size_t k, const HolidayCalendar& cal, ProfileHorizon mode) {
  const std::size_t D = frame.cycle_length();
  Matrix out(horizon, D);
  for (std::size_t j = 0; j < horizon; ++j) {
    const std::size_t r = anchor + j;
    const Date d = row_date_or_extrapolated(frame, r);
    const DayCategory category = categorize(d, cal);
    const std::size_t before = mode == ProfileHorizon::Anchored ? std::min(anchor, frame.rows())
                                                                : std::min(r, frame.rows());
    const auto rows = detail::prior_same_category(frame, before, category, k, cal);
    if (rows.size() < k) {
      throw WarmupError("profile for " + format_date(d) + " lacks " + std::to_string(k) +
                            " prior rows of its category before row " + std::to_string(before),
                        detail::warmup_end(frame, k, cal));
    }
    detail::mean_of_rows(frame.values, rows, out.row(j));
  }
  return out;
}

// Builds the sample whose forecast window starts at `anchor`. With
// `open_horizon` the window may extend past the frame; unknown targets are
// then missing (NaN).
inline WindowSample make_sample(const CycleFrame& frame, const ResidualFrame& res, std::size_t anchor,
                                const HolidayCalendar& cal, const WindowOptions& opt,
                                bool open_horizon = false) {
  const std::size_t D = frame.cycle_length();
  const std::size_t H = opt.history, F = opt.horizon;
  if (anchor < res.valid_from + H) {
    throw WarmupError("anchor row " + std::to_string(anchor) + " has fewer than " + std::to_string(H) +
                          " valid history rows; earliest valid anchor row is " +
                          std::to_string(res.valid_from + H),
                      res.valid_from + H);
  }
  if (anchor > frame.rows() || (!open_horizon && anchor + F > frame.rows())) {
    throw InputError("anchor row " + std::to_string(anchor) + " leaves fewer than " +
                     std::to_string(F) + " forecast rows in a frame of " +
                     std::to_string(frame.rows()) + " rows");
  }
  WindowSample s;
  s.encoder_input = Matrix(H, D + kMetadataWidth);
  s.decoder_input = Matrix(F, D + kMetadataWidth);
  s.target_residuals = Matrix(F, D);
  s.target_rhp = Matrix(F, D);
  s.target_raw = Matrix(F, D);
  s.anchor_row = anchor;
  s.anchor_date = row_date_or_extrapolated(frame, anchor);
  s.forecast_start = frame.row_start(anchor);
  s.resolution = frame.resolution;
  auto last = frame.values.row(anchor - 1);
  s.last_observed.assign(last.begin(), last.end());

  for (std::size_t i = 0; i < H; ++i) {
    const std::size_t r = anchor - H + i;
    detail::write_row(s.encoder_input, i, res.residuals.row(r), metadata(frame.row_dates[r], cal));
  }
  const bool past_end = anchor + F > frame.rows();
  Matrix profiles;
  if (res.zero_profiles) {
    profiles = Matrix(F, D);
  } else if (opt.profile_horizon == ProfileHorizon::Anchored || past_end) {
    profiles = forecast_profiles(frame, anchor, F, res.k, cal, opt.profile_horizon);
  }
  for (std::size_t j = 0; j < F; ++j) {
    const std::size_t r = anchor + j;
    std::span<const double> profile =
        profiles.empty() ? res.profiles.row(r) : std::span<const double>(profiles.row(j));
    detail::write_row(s.decoder_input, j, profile, metadata(row_date_or_extrapolated(frame, r), cal));
    std::copy(profile.begin(), profile.end(), s.target_rhp.row(j).begin());
    if (r >= frame.rows()) {
      std::fill(s.target_raw.row(j).begin(), s.target_raw.row(j).end(), kMissing);
      std::fill(s.target_residuals.row(j).begin(), s.target_residuals.row(j).end(), kMissing);
      continue;
    }
    auto raw = frame.values.row(r);
    std::copy(raw.begin(), raw.end(), s.target_raw.row(j).begin());
    if (profiles.empty() || res.zero_profiles) {
      auto src = res.residuals.row(r);
      std::copy(src.begin(), src.end(), s.target_residuals.row(j).begin());
    } else {
      for (std::size_t c = 0; c < D; ++c) s.target_residuals(j, c) = raw[c] - profile[c];
    }
  }
  return s;
}

// One sample per anchor, anchors advancing by `stride` rows, in anchor order.
inline std::vector<WindowSample> build_samples(const CycleFrame& frame, const ResidualFrame& res,
                                               const HolidayCalendar& cal, const WindowOptions& opt) {
  if (opt.history == 0 || opt.horizon == 0 || opt.stride == 0) {
    throw ConfigError("build_samples: H, F and stride must be positive");
  }
  const std::size_t first = res.valid_from + opt.history;
  std::vector<WindowSample> samples;
  for (std::size_t anchor = first; anchor + opt.horizon <= frame.rows(); anchor += opt.stride) {
    samples.push_back(make_sample(frame, res, anchor, cal, opt));
  }
  if (samples.empty()) {
    throw InputError("build_samples: frame '" + frame.name + "' has " +
                     std::to_string(frame.rows() - std::min(frame.rows(), res.valid_from)) +
                     " rows after warm-up, fewer than H+F=" +
                     std::to_string(opt.history + opt.horizon));
  }
  return samples;
}

// Forecast = profile, i.e. a zero residual.
inline std::vector<Matrix> rhp_baseline(const std::vector<WindowSample>& samples) {
  std::vector<Matrix> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.target_rhp);
  return out;
}

// Every forecast row repeats the last observed cycle before the anchor.
inline std::vector<Matrix> persistence_baseline(const std::vector<WindowSample>& samples) {
  std::vector<Matrix> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    Matrix m(s.target_raw.rows(), s.target_raw.cols());
    for (std::size_t j = 0; j < m.rows(); ++j) {
      std::copy(s.last_observed.begin(), s.last_observed.end(), m.row(j).begin());
    }
    out.push_back(std::move(m));
  }
  return out;
}

// Debug dump: anchor_date,role,row,c0..c{D+M-1}; target rows leave the
// metadata columns empty.
inline void write_sample_dump(const std::vector<WindowSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(17);
  std::size_t width = samples.empty() ? 0 : samples.front().encoder_input.cols();
  out << "anchor_date,role,row";
  for (std::size_t c = 0; c < width; ++c) out << ",c" << c;
  out << '\n';
  auto emit = [&](const WindowSample& s, const char* role, const Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      out << format_date(s.anchor_date) << ',' << role << ',' << r;
      for (std::size_t c = 0; c < width; ++c) {
        out << ',';
        if (c < m.cols()) out << m(r, c);
      }
      out << '\n';
    }
  };
  for (const auto& s : samples) {
    emit(s, "enc", s.encoder_input);
    emit(s, "dec", s.decoder_input);
    emit(s, "target", s.target_raw);
  }
}

}  // namespace recycle
