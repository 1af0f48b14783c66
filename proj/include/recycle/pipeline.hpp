#pragma once

// File-driven workflows: run configuration, data preparation shared by all
// commands, and the command implementations behind the CLI.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "recycle/calendar.hpp"
#include "recycle/cycle_frame.hpp"
#include "recycle/diagnostics.hpp"
#include "recycle/errors.hpp"
#include "recycle/model.hpp"
#include "recycle/series.hpp"
#include "recycle/synth.hpp"
#include "recycle/timestamp.hpp"
#include "recycle/trainer.hpp"

namespace recycle {

inline constexpr int kRunConfigVersion = 1;

struct DatasetConfig {
  std::filesystem::path path;
  std::string time_column = "date";
  std::string value_column = "value";
  std::string timestamp_format{kDefaultTimestampFormat};
  char delimiter = ',';
  std::int64_t resample_seconds = 0;  // 0 keeps the native resolution
};

struct CycleConfig {
  std::size_t length = 24;  // D
  std::size_t anchor_offset = 0;
  std::size_t history = 21;  // H
  std::size_t horizon = 7;   // F
  std::size_t k = 3;
  std::size_t stride = 1;
  ProfileHorizon profile_horizon = ProfileHorizon::Rolling;
};

struct DiagnoseConfig {
  diagnostics::BreakdownGrid grid{};
  diagnostics::ExperimentShape shape{};
  std::size_t multivariate_width = 24;
};

struct BenchConfig {
  std::size_t runs = 3;
  std::size_t max_epochs = 0;  // 0 uses train.max_epochs
};

struct RunConfig {
  int version = kRunConfigVersion;
  DatasetConfig dataset;
  CycleConfig cycle;
  SplitSpec split;
  std::optional<std::filesystem::path> holidays;
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  DiagnoseConfig diagnose;
  BenchConfig bench;
  std::string baseline_kind = "rhp";
  std::string anchor_date;  // predict
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  bool residual = true;

  WindowOptions window_options() const {
    return {cycle.history, cycle.horizon, cycle.stride, cycle.profile_horizon};
  }
  std::filesystem::path checkpoint_path() const { return checkpoint.value_or(output_dir / "model.ckpt.json"); }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& block) {
  if (!j.is_object()) throw ConfigError("config: '" + block + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("config: unknown key '" + key + "' in '" + block + "'");
  }
}

inline std::string profile_horizon_name(ProfileHorizon p) {
  return p == ProfileHorizon::Rolling ? "rolling" : "anchored";
}

inline ProfileHorizon parse_profile_horizon(const std::string& s) {
  if (s == "rolling") return ProfileHorizon::Rolling;
  if (s == "anchored") return ProfileHorizon::Anchored;
  throw ConfigError("config: profile_horizon must be 'rolling' or 'anchored', got '" + s + "'");
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  return (p.is_absolute() ? p : base / p).lexically_normal();
}

}  // namespace detail

// Parses a configuration document; relative paths are taken relative to `base_dir`.
inline RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  using detail::check_keys;
  check_keys(j,
             {"version", "dataset", "cycle", "split", "holidays", "model", "train", "synth", "diagnose", "bench",
              "baseline", "predict", "output_dir", "seed", "residual"},
             "<root>");
  if (!j.contains("version")) throw ConfigError("config: missing 'version'");
  RunConfig c;
  try {
    c.version = j.at("version").get<int>();
    if (c.version != kRunConfigVersion) {
      throw ConfigError("config: unsupported version " + std::to_string(c.version) + " (expected " +
                        std::to_string(kRunConfigVersion) + ")");
    }
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      check_keys(d, {"path", "time_column", "value_column", "timestamp_format", "delimiter", "resample_seconds"},
                 "dataset");
      if (d.contains("path")) c.dataset.path = detail::resolve(base_dir, d.at("path").get<std::string>());
      c.dataset.time_column = d.value("time_column", c.dataset.time_column);
      c.dataset.value_column = d.value("value_column", c.dataset.value_column);
      c.dataset.timestamp_format = d.value("timestamp_format", c.dataset.timestamp_format);
      const std::string delim = d.value("delimiter", std::string(1, c.dataset.delimiter));
      if (delim.size() != 1) throw ConfigError("config: dataset.delimiter must be one character");
      c.dataset.delimiter = delim[0];
      c.dataset.resample_seconds = d.value("resample_seconds", c.dataset.resample_seconds);
    }
    if (j.contains("cycle")) {
      const auto& d = j.at("cycle");
      check_keys(d, {"D", "anchor_offset", "H", "F", "k", "stride", "profile_horizon"}, "cycle");
      c.cycle.length = d.value("D", c.cycle.length);
      c.cycle.anchor_offset = d.value("anchor_offset", c.cycle.anchor_offset);
      c.cycle.history = d.value("H", c.cycle.history);
      c.cycle.horizon = d.value("F", c.cycle.horizon);
      c.cycle.k = d.value("k", c.cycle.k);
      c.cycle.stride = d.value("stride", c.cycle.stride);
      c.cycle.profile_horizon =
          detail::parse_profile_horizon(d.value("profile_horizon", detail::profile_horizon_name(c.cycle.profile_horizon)));
    }
    if (j.contains("split")) {
      const auto& d = j.at("split");
      check_keys(d, {"train", "val", "test"}, "split");
      c.split.train_frac = d.value("train", c.split.train_frac);
      c.split.val_frac = d.value("val", c.split.val_frac);
      c.split.test_frac = d.value("test", c.split.test_frac);
    }
    if (j.contains("holidays") && !j.at("holidays").is_null()) {
      c.holidays = detail::resolve(base_dir, j.at("holidays").get<std::string>());
    }
    if (j.contains("model")) {
      const auto& d = j.at("model");
      check_keys(d,
                 {"d_model", "n_heads", "n_encoder_layers", "n_decoder_layers", "d_ff", "dropout",
                  "positional_encoding", "decoder_self_attention"},
                 "model");
      c.model = d.get<ModelConfig>();
    }
    if (j.contains("train")) {
      const auto& d = j.at("train");
      check_keys(d,
                 {"batch_size", "max_epochs", "early_stop_patience", "lr", "beta1", "beta2", "eps", "loss",
                  "deterministic"},
                 "train");
      c.train = d.get<TrainConfig>();
    }
    if (j.contains("synth")) {
      const auto& d = j.at("synth");
      check_keys(d,
                 {"start", "days", "resolution", "level", "daily_amplitude", "category_amplitude",
                  "category_offset", "pattern_amplitude", "trend_per_day", "noise_sigma"},
                 "synth");
      c.synth = d.get<SynthConfig>();
    }
    if (j.contains("diagnose")) {
      const auto& d = j.at("diagnose");
      check_keys(d, {"activations", "scales", "seeds", "tokens", "key_dim", "bias_scale", "multivariate_width"},
                 "diagnose");
      if (d.contains("activations")) {
        c.diagnose.grid.activations.clear();
        for (const auto& a : d.at("activations")) {
          c.diagnose.grid.activations.push_back(diagnostics::parse_activation(a.get<std::string>()));
        }
      }
      c.diagnose.grid.scales = d.value("scales", c.diagnose.grid.scales);
      c.diagnose.grid.seeds = d.value("seeds", c.diagnose.grid.seeds);
      c.diagnose.shape.tokens = d.value("tokens", c.diagnose.shape.tokens);
      c.diagnose.shape.key_dim = d.value("key_dim", c.diagnose.shape.key_dim);
      c.diagnose.shape.bias_scale = d.value("bias_scale", c.diagnose.shape.bias_scale);
      c.diagnose.multivariate_width = d.value("multivariate_width", c.diagnose.multivariate_width);
    }
    if (j.contains("bench")) {
      const auto& d = j.at("bench");
      check_keys(d, {"runs", "max_epochs"}, "bench");
      c.bench.runs = d.value("runs", c.bench.runs);
      c.bench.max_epochs = d.value("max_epochs", c.bench.max_epochs);
    }
    if (j.contains("baseline")) {
      const auto& d = j.at("baseline");
      check_keys(d, {"kind"}, "baseline");
      c.baseline_kind = d.value("kind", c.baseline_kind);
    }
    if (j.contains("predict")) {
      const auto& d = j.at("predict");
      check_keys(d, {"anchor_date", "checkpoint"}, "predict");
      c.anchor_date = d.value("anchor_date", c.anchor_date);
      if (d.contains("checkpoint") && !d.at("checkpoint").is_null()) {
        c.checkpoint = detail::resolve(base_dir, d.at("checkpoint").get<std::string>());
      }
    }
    c.output_dir = detail::resolve(base_dir, j.value("output_dir", c.output_dir.string()));
    c.seed = j.value("seed", c.seed);
    c.residual = j.value("residual", c.residual);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

// Propagates shared settings into the blocks and checks the whole configuration.
inline void finalize(RunConfig& c) {
  c.model.cycle_length = c.cycle.length;
  c.model.metadata_width = kMetadataWidth;
  c.model.history = c.cycle.history;
  c.model.horizon = c.cycle.horizon;
  c.model.seed = c.seed;
  c.train.seed = c.seed;
  c.synth.seed = c.seed;
  c.diagnose.grid.base_seed = c.seed;
  c.split.validate();
  c.model.validate();
  c.train.validate();
  if (c.cycle.length == 0 || c.cycle.history == 0 || c.cycle.horizon == 0 || c.cycle.k == 0 ||
      c.cycle.stride == 0) {
    throw ConfigError("config: cycle D, H, F, k and stride must be positive");
  }
  if (c.cycle.anchor_offset >= c.cycle.length) throw ConfigError("config: cycle.anchor_offset must be below D");
  if (c.baseline_kind != "rhp" && c.baseline_kind != "persistence") {
    throw ConfigError("config: baseline.kind must be 'rhp' or 'persistence', got '" + c.baseline_kind + "'");
  }
  if (c.bench.runs == 0) throw ConfigError("config: bench.runs must be positive");
  if (c.diagnose.grid.seeds == 0 || c.diagnose.grid.scales.empty() || c.diagnose.grid.activations.empty()) {
    throw ConfigError("config: diagnose grid must be non-empty");
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunConfig c = parse_run_config(j, std::filesystem::absolute(path).parent_path());
  finalize(c);
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json model = c.model;
  for (const char* key : {"D", "M", "H", "F", "seed"}) model.erase(key);
  nlohmann::json train = c.train;
  train.erase("seed");
  nlohmann::json synth = c.synth;
  synth.erase("seed");
  nlohmann::json activations = nlohmann::json::array();
  for (auto a : c.diagnose.grid.activations) activations.push_back(std::string(diagnostics::to_string(a)));
  nlohmann::json j = {
      {"version", c.version},
      {"dataset",
       {{"path", c.dataset.path.string()},
        {"time_column", c.dataset.time_column},
        {"value_column", c.dataset.value_column},
        {"timestamp_format", c.dataset.timestamp_format},
        {"delimiter", std::string(1, c.dataset.delimiter)},
        {"resample_seconds", c.dataset.resample_seconds}}},
      {"cycle",
       {{"D", c.cycle.length},
        {"anchor_offset", c.cycle.anchor_offset},
        {"H", c.cycle.history},
        {"F", c.cycle.horizon},
        {"k", c.cycle.k},
        {"stride", c.cycle.stride},
        {"profile_horizon", detail::profile_horizon_name(c.cycle.profile_horizon)}}},
      {"split", {{"train", c.split.train_frac}, {"val", c.split.val_frac}, {"test", c.split.test_frac}}},
      {"holidays", c.holidays ? nlohmann::json(c.holidays->string()) : nlohmann::json(nullptr)},
      {"model", model},
      {"train", train},
      {"synth", synth},
      {"diagnose",
       {{"activations", activations},
        {"scales", c.diagnose.grid.scales},
        {"seeds", c.diagnose.grid.seeds},
        {"tokens", c.diagnose.shape.tokens},
        {"key_dim", c.diagnose.shape.key_dim},
        {"bias_scale", c.diagnose.shape.bias_scale},
        {"multivariate_width", c.diagnose.multivariate_width}}},
      {"bench", {{"runs", c.bench.runs}, {"max_epochs", c.bench.max_epochs}}},
      {"baseline", {{"kind", c.baseline_kind}}},
      {"predict",
       {{"anchor_date", c.anchor_date},
        {"checkpoint", c.checkpoint ? nlohmann::json(c.checkpoint->string()) : nlohmann::json(nullptr)}}},
      {"output_dir", c.output_dir.string()},
      {"seed", c.seed},
      {"residual", c.residual}};
  return j;
}

// Command-line settings that take precedence over the file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  bool no_residual = false;
  std::optional<std::filesystem::path> out;
  std::optional<std::string> anchor_date;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::string> baseline_kind;
};

inline void apply(RunConfig& c, const Overrides& o) {
  if (o.seed) c.seed = *o.seed;
  if (o.deterministic) c.train.deterministic = true;
  if (o.no_residual) c.residual = false;
  if (o.out) c.output_dir = std::filesystem::absolute(*o.out).lexically_normal();
  if (o.anchor_date) c.anchor_date = *o.anchor_date;
  if (o.checkpoint) c.checkpoint = std::filesystem::absolute(*o.checkpoint).lexically_normal();
  if (o.baseline_kind) c.baseline_kind = *o.baseline_kind;
  finalize(c);
}

// ---------------------------------------------------------------------------
// Data preparation

struct PreparedSplit {
  std::string name;
  CycleFrame frame;
  ResidualFrame residuals;
  std::vector<WindowSample> samples;
};

struct PreparedData {
  TimeSeries series;  // normalized, aligned to the cycle start, all splits
  NormStats stats;
  HolidayCalendar calendar;
  PreparedSplit train;
  PreparedSplit val;
  PreparedSplit test;
};

inline HolidayCalendar load_calendar(const RunConfig& c) {
  return c.holidays ? HolidayCalendar::load(*c.holidays) : HolidayCalendar{};
}

// Loads, resamples and fills the configured dataset, then trims it to whole
// cycles starting at the cycle anchor.
inline TimeSeries load_aligned_series(const RunConfig& c) {
  if (c.dataset.path.empty()) throw ConfigError("config: dataset.path is not set");
  if (!std::filesystem::exists(c.dataset.path)) {
    throw InputError("dataset " + c.dataset.path.string() + " does not exist");
  }
  CsvOptions opts;
  opts.time_column = c.dataset.time_column;
  opts.value_column = c.dataset.value_column;
  opts.timestamp_format = c.dataset.timestamp_format;
  opts.delimiter = c.dataset.delimiter;
  TimeSeries ts = load_csv(c.dataset.path, opts);
  if (c.dataset.resample_seconds != 0 && c.dataset.resample_seconds != ts.resolution) {
    ts = resample(ts, c.dataset.resample_seconds);
  }
  ts = fill_missing(ts);
  if (ts.size() < c.cycle.length) {
    throw InputError("dataset " + c.dataset.path.string() + " holds " + std::to_string(ts.size()) +
                     " steps, fewer than one cycle of " + std::to_string(c.cycle.length));
  }
  return aligned_span(ts, c.cycle.length, c.cycle.anchor_offset);
}

namespace detail {

template <class Fn>
auto with_context(const std::string& context, Fn&& fn) {
  try {
    return fn();
  } catch (const WarmupError& e) {
    throw WarmupError(context + ": " + e.what(), e.earliest_valid_row());
  } catch (const ConfigError& e) {
    throw ConfigError(context + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(context + ": " + e.what());
  }
}

inline PreparedSplit prepare_split(const std::string& name, const TimeSeries& normalized, const RunConfig& c,
                                   const HolidayCalendar& cal) {
  return with_context(name + " split", [&] {
    PreparedSplit s;
    s.name = name;
    s.frame = compress(normalized, c.cycle.length, c.cycle.anchor_offset);
    s.residuals = residual_frame(s.frame, c.cycle.k, cal);
    if (!c.residual) s.residuals = zero_profile_frame(s.frame, s.residuals.valid_from);
    s.samples = build_samples(s.frame, s.residuals, cal, c.window_options());
    return s;
  });
}

}  // namespace detail

// Cycles each split needs to yield at least one window after the warm-up.
inline std::size_t min_split_cycles(const RunConfig& c) {
  return c.cycle.history + c.cycle.horizon + 7 * c.cycle.k;
}

// Splits along time, fits normalization on the training split and builds the
// windows of each split independently, each with its own warm-up.
inline PreparedData prepare_data(const RunConfig& c) {
  PreparedData out;
  out.calendar = load_calendar(c);
  const TimeSeries aligned = load_aligned_series(c);
  const SeriesSplit parts = split(aligned, c.split, c.cycle.length, min_split_cycles(c));
  out.stats = fit_norm(parts.train);
  out.series = normalize(aligned, out.stats);
  out.train = detail::prepare_split("train", normalize(parts.train, out.stats), c, out.calendar);
  out.val = detail::prepare_split("val", normalize(parts.val, out.stats), c, out.calendar);
  out.test = detail::prepare_split("test", normalize(parts.test, out.stats), c, out.calendar);
  return out;
}

// ---------------------------------------------------------------------------
// Artifact writers

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(17);
  return out;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

// date,c0..c{D-1} for rows [first, rows).
inline void write_frame_csv(const std::filesystem::path& path, const CycleFrame& frame, const Matrix& m,
                            std::size_t first) {
  auto out = open_out(path);
  out << "date";
  for (std::size_t c = 0; c < m.cols(); ++c) out << ",c" << c;
  out << '\n';
  for (std::size_t r = first; r < m.rows(); ++r) {
    out << format_date(frame.row_dates[r]);
    for (double v : m.row(r)) out << ',' << v;
    out << '\n';
  }
}

// timestamp,value with one row per step of the F x D forecast.
inline void write_forecast_csv(const std::filesystem::path& path, Timestamp start, std::int64_t resolution,
                               const Matrix& forecast) {
  auto out = open_out(path);
  out << "timestamp,value\n";
  const auto& v = forecast.data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    out << format_timestamp(start + static_cast<Timestamp>(i) * resolution) << ',' << v[i] << '\n';
  }
}

inline void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  auto out = open_out(path);
  out << "epoch,train_loss,val_loss\n";
  for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
}

inline nlohmann::json split_manifest(const PreparedSplit& s) {
  return {{"rows", s.frame.rows()},
          {"first_date", format_date(s.frame.row_dates.front())},
          {"last_date", format_date(s.frame.row_dates.back())},
          {"valid_from", s.residuals.valid_from},
          {"samples", s.samples.size()},
          {"first_anchor", format_date(s.samples.front().anchor_date)},
          {"last_anchor", format_date(s.samples.back().anchor_date)}};
}

inline void write_resolved_config(const RunConfig& c) {
  write_json(c.output_dir / "resolved_config.json", to_json(c));
}

inline std::vector<Matrix> denormalized(const std::vector<Matrix>& normalized, const NormStats& stats) {
  std::vector<Matrix> out = normalized;
  for (auto& m : out) {
    for (double& v : m.data()) v = denormalize(v, stats);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands. Each writes its outputs and the resolved configuration into
// RunConfig::output_dir and reports progress on `log`.

inline PreparedData cmd_prepare(const RunConfig& c, std::ostream& log = std::cout) {
  PreparedData data = prepare_data(c);
  const auto dir = c.output_dir / "prepared";
  detail::ensure_dir(dir);
  detail::write_resolved_config(c);
  write_csv(denormalize(data.series, data.stats), dir / "series_aligned.csv");
  write_csv(data.series, dir / "series_normalized.csv");
  nlohmann::json manifest = {{"norm", {{"min", data.stats.min}, {"max", data.stats.max}, {"fitted_on", "train"}}},
                             {"resolution", data.series.resolution},
                             {"residual", c.residual}};
  for (const PreparedSplit* s : {&data.train, &data.val, &data.test}) {
    detail::write_frame_csv(dir / ("frame_" + s->name + ".csv"), s->frame, s->frame.values, 0);
    detail::write_frame_csv(dir / ("rhp_" + s->name + ".csv"), s->frame, s->residuals.profiles,
                            s->residuals.valid_from);
    detail::write_frame_csv(dir / ("residual_" + s->name + ".csv"), s->frame, s->residuals.residuals,
                            s->residuals.valid_from);
    manifest["splits"][s->name] = detail::split_manifest(*s);
    log << s->name << ": " << s->samples.size() << " samples (" << s->frame.rows() << " cycles, warm-up "
        << s->residuals.valid_from << ")\n";
  }
  detail::write_json(dir / "manifest.json", manifest);
  return data;
}

struct TrainOutcome {
  ForecastModel<double> model;
  TrainResult result;
  MetricsReport train, val, test;
};

inline nlohmann::json train_metrics_json(const TrainOutcome& o, const MetricsReport& baseline) {
  return {{"train", metrics_json(o.train)},
          {"val", metrics_json(o.val)},
          {"test", metrics_json(o.test)},
          {"baseline_rhp_test", metrics_json(baseline)},
          {"best_epoch", o.result.best_epoch},
          {"epochs_run", o.result.epochs_run},
          {"best_val_loss", o.result.best_val_loss},
          {"parameter_count", o.model.parameter_count()}};
}

inline TrainOutcome train_on(const PreparedData& data, const RunConfig& c,
                             const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  TrainOutcome o{build_model<double>(c.model), {}, {}, {}, {}};
  o.result = train(o.model, data.train.samples, data.val.samples, c.train, on_epoch);
  o.train = evaluate(o.model, data.train.samples, data.stats);
  o.val = evaluate(o.model, data.val.samples, data.stats);
  o.test = evaluate(o.model, data.test.samples, data.stats);
  return o;
}

inline TrainOutcome cmd_train(const RunConfig& c, std::ostream& log = std::cout) {
  detail::write_resolved_config(c);
  const auto t0 = std::chrono::steady_clock::now();
  const PreparedData data = prepare_data(c);
  const auto t1 = std::chrono::steady_clock::now();
  TrainOutcome o = train_on(data, c, [&](const EpochRecord& r) {
    log << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_loss " << r.val_loss << '\n';
  });
  const auto t2 = std::chrono::steady_clock::now();
  const MetricsReport baseline = evaluate_forecasts(rhp_baseline(data.test.samples), data.test.samples, data.stats);
  save_model(c.output_dir / "model.ckpt.json", o.model);
  detail::write_json(c.output_dir / "metrics.json", train_metrics_json(o, baseline));
  detail::write_history_csv(c.output_dir / "history.csv", o.result.history);
  auto seconds = [](auto a, auto b) { return std::chrono::duration<double>(b - a).count(); };
  detail::write_json(c.output_dir / "timing.json",
                     {{"prepare_s", seconds(t0, t1)},
                      {"train_s", o.result.train_seconds},
                      {"evaluate_s", seconds(t1, t2) - o.result.train_seconds},
                      {"energy", "unsupported"}});
  log << "best epoch " << o.result.best_epoch << "; test mape " << o.test.mape << "% (rhp baseline "
      << baseline.mape << "%)\n";
  return o;
}

inline MetricsReport cmd_evaluate(const RunConfig& c, std::ostream& log = std::cout) {
  detail::write_resolved_config(c);
  const PreparedData data = prepare_data(c);
  const auto model = load_model<double>(c.checkpoint_path());
  if (model.config.cycle_length != c.cycle.length || model.config.history != c.cycle.history ||
      model.config.horizon != c.cycle.horizon) {
    throw ConfigError("checkpoint " + c.checkpoint_path().string() + " was trained with different D, H or F");
  }
  const MetricsReport val = evaluate(model, data.val.samples, data.stats);
  const MetricsReport test = evaluate(model, data.test.samples, data.stats);
  detail::write_json(c.output_dir / "evaluate_metrics.json", {{"val", metrics_json(val)}, {"test", metrics_json(test)}});
  log << "test mse " << test.mse << " mape " << test.mape << "% mae " << test.mae << '\n';
  return test;
}

inline MetricsReport cmd_baseline(const RunConfig& c, std::ostream& log = std::cout) {
  detail::write_resolved_config(c);
  const PreparedData data = prepare_data(c);
  const auto& samples = data.test.samples;
  const auto forecasts = c.baseline_kind == "rhp" ? rhp_baseline(samples) : persistence_baseline(samples);
  const MetricsReport m = evaluate_forecasts(forecasts, samples, data.stats);
  const auto dir = c.output_dir / ("baseline_" + c.baseline_kind);
  const auto original = detail::denormalized(forecasts, data.stats);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    detail::write_forecast_csv(dir / ("forecast_" + format_date(samples[i].anchor_date) + ".csv"),
                               samples[i].forecast_start, samples[i].resolution, original[i]);
  }
  detail::write_json(dir / "metrics.json", metrics_json(m));
  log << c.baseline_kind << " baseline on test: mse " << m.mse << " mape " << m.mape << "% mae " << m.mae << '\n';
  return m;
}

// Forecast for the F cycles starting at c.anchor_date from the full series.
// The anchor may be the day after the last observed cycle.
inline Matrix cmd_predict(const RunConfig& c, std::ostream& log = std::cout) {
  detail::write_resolved_config(c);
  if (c.anchor_date.empty()) throw ConfigError("predict: no anchor date (set predict.anchor_date or --anchor)");
  const auto anchor_date = parse_date(c.anchor_date);
  if (!anchor_date) throw ConfigError("predict: anchor '" + c.anchor_date + "' is not a YYYY-MM-DD date");
  const auto model = load_model<double>(c.checkpoint_path());
  const HolidayCalendar cal = load_calendar(c);
  const TimeSeries aligned = load_aligned_series(c);
  const NormStats stats = fit_norm(split(aligned, c.split, c.cycle.length, min_split_cycles(c)).train);
  const CycleFrame frame = compress(normalize(aligned, stats), c.cycle.length, c.cycle.anchor_offset);
  std::size_t anchor = frame.row_of(*anchor_date);
  if (anchor == frame.rows() && *anchor_date != frame.row_dates.back() + std::chrono::days{1}) {
    throw InputError("predict: anchor " + c.anchor_date + " lies outside the data (" +
                     format_date(frame.row_dates.front()) + " to " + format_date(frame.row_dates.back()) +
                     " plus one day)");
  }
  ResidualFrame res = residual_frame(frame, c.cycle.k, cal);
  if (!c.residual) res = zero_profile_frame(frame, res.valid_from);
  WindowSample sample;
  try {
    sample = make_sample(frame, res, anchor, cal, c.window_options(), true);
  } catch (const WarmupError& e) {
    const std::size_t earliest = std::min(e.earliest_valid_row(), frame.rows());
    throw WarmupError("predict: anchor " + c.anchor_date + " has insufficient history; earliest valid anchor is " +
                          format_date(row_date_or_extrapolated(frame, earliest)),
                      earliest);
  }
  const Matrix forecast = predict(model, sample, stats);
  const auto path = c.output_dir / ("forecast_" + c.anchor_date + ".csv");
  detail::write_forecast_csv(path, sample.forecast_start, sample.resolution, forecast);
  log << "wrote " << forecast.size() << " steps to " << path.string() << '\n';
  return forecast;
}

inline std::vector<diagnostics::BreakdownReport> cmd_diagnose(const RunConfig& c, std::ostream& log = std::cout) {
  detail::write_resolved_config(c);
  const auto reports = diagnostics::run_grid(c.diagnose.grid, c.diagnose.shape);
  {
    auto out = detail::open_out(c.output_dir / "diagnose.csv");
    out << "activation,scale,seed,rank1_deviation,bias_fit_residual\n";
    for (const auto& r : reports) {
      out << diagnostics::to_string(r.activation) << ',' << r.scale << ',' << r.seed << ',' << r.rank1_deviation
          << ',' << r.bias_fit_residual << '\n';
    }
  }
  nlohmann::json cells = nlohmann::json::array();
  for (auto act : c.diagnose.grid.activations) {
    for (double scale : c.diagnose.grid.scales) {
      std::vector<double> dev, fit;
      for (const auto& r : reports) {
        if (r.activation == act && r.scale == scale) {
          dev.push_back(r.rank1_deviation);
          fit.push_back(r.bias_fit_residual);
        }
      }
      cells.push_back({{"activation", diagnostics::to_string(act)},
                       {"scale", scale},
                       {"median_rank1_deviation", diagnostics::median(dev)},
                       {"median_bias_fit_residual", diagnostics::median(fit)}});
      log << diagnostics::to_string(act) << " scale " << scale << ": median rank-1 deviation "
          << diagnostics::median(dev) << '\n';
    }
  }
  std::vector<double> multi;
  for (std::size_t s = 0; s < c.diagnose.grid.seeds; ++s) {
    multi.push_back(diagnostics::run_multivariate_breakdown(diagnostics::Activation::Tanh, 1.0,
                                                            c.diagnose.multivariate_width,
                                                            c.diagnose.grid.base_seed + s, c.diagnose.shape));
  }
  detail::write_json(c.output_dir / "diagnose_summary.json",
                     {{"cells", cells},
                      {"multivariate",
                       {{"activation", "tanh"},
                        {"scale", 1.0},
                        {"width", c.diagnose.multivariate_width},
                        {"median_rank1_deviation", diagnostics::median(multi)}}}});
  log << "multivariate (width " << c.diagnose.multivariate_width << ") median rank-1 deviation "
      << diagnostics::median(multi) << '\n';
  return reports;
}

struct PhaseTimes {
  double prepare_s = 0, train_s = 0, evaluate_s = 0, total_s = 0;
};

// Times prepare + train + evaluate `bench.runs` times, with residual learning
// and with the zero-profile ablation.
inline nlohmann::json cmd_bench(const RunConfig& c, std::ostream& log = std::cout) {
  detail::write_resolved_config(c);
  nlohmann::json report = {{"energy", "unsupported"}};
  for (bool residual : {true, false}) {
    RunConfig variant = c;
    variant.residual = residual;
    if (c.bench.max_epochs != 0) variant.train.max_epochs = c.bench.max_epochs;
    variant.train.early_stop_patience = std::min(variant.train.early_stop_patience, variant.train.max_epochs);
    std::vector<PhaseTimes> phases;
    const TimingRecord timing = benchmark(
        [&] {
          PhaseTimes p;
          const auto t0 = std::chrono::steady_clock::now();
          const PreparedData data = prepare_data(variant);
          const auto t1 = std::chrono::steady_clock::now();
          ForecastModel<double> model = build_model<double>(variant.model);
          const TrainResult r = train(model, data.train.samples, data.val.samples, variant.train);
          const auto t2 = std::chrono::steady_clock::now();
          evaluate(model, data.test.samples, data.stats);
          const auto t3 = std::chrono::steady_clock::now();
          p.prepare_s = std::chrono::duration<double>(t1 - t0).count();
          p.train_s = std::chrono::duration<double>(t2 - t1).count();
          p.evaluate_s = std::chrono::duration<double>(t3 - t2).count();
          p.total_s = std::chrono::duration<double>(t3 - t0).count();
          phases.push_back(p);
          log << (residual ? "recycle" : "no_residual") << " run " << phases.size() << ": " << p.total_s
              << " s (" << r.epochs_run << " epochs)\n";
        },
        c.bench.runs);
    nlohmann::json runs = nlohmann::json::array();
    PhaseTimes mean;
    for (const auto& p : phases) {
      runs.push_back(
          {{"prepare_s", p.prepare_s}, {"train_s", p.train_s}, {"evaluate_s", p.evaluate_s}, {"total_s", p.total_s}});
      mean.prepare_s += p.prepare_s / static_cast<double>(phases.size());
      mean.train_s += p.train_s / static_cast<double>(phases.size());
      mean.evaluate_s += p.evaluate_s / static_cast<double>(phases.size());
    }
    report[residual ? "recycle" : "no_residual"] = {
        {"runs", runs},
        {"mean_s", timing.mean_seconds},
        {"mean_phase_s", {{"prepare_s", mean.prepare_s}, {"train_s", mean.train_s}, {"evaluate_s", mean.evaluate_s}}},
        {"max_epochs", variant.train.max_epochs}};
  }
  detail::write_json(c.output_dir / "bench.json", report);
  return report;
}

// Writes the synthetic series to dataset.path (the file later commands read).
inline TimeSeries cmd_synth(const RunConfig& c, std::ostream& log = std::cout) {
  detail::write_resolved_config(c);
  if (c.dataset.path.empty()) throw ConfigError("synth: dataset.path is not set");
  const TimeSeries ts = synthesize(c.synth, load_calendar(c));
  detail::ensure_dir(c.dataset.path.parent_path());
  CsvOptions opts;
  opts.time_column = c.dataset.time_column;
  opts.value_column = c.dataset.value_column;
  opts.timestamp_format = c.dataset.timestamp_format;
  opts.delimiter = c.dataset.delimiter;
  write_csv(ts, c.dataset.path, opts);
  log << "wrote " << ts.size() << " steps to " << c.dataset.path.string() << '\n';
  return ts;
}

}  // namespace recycle
