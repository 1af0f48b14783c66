#pragma once

// Mini-batch training on residual targets with validation-based model
// selection, and forecast evaluation in original units.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recycle/cycle_frame.hpp"
#include "recycle/errors.hpp"
#include "recycle/matrix.hpp"
#include "recycle/model.hpp"
#include "recycle/optim.hpp"
#include "recycle/series.hpp"
#include "recycle/tensor.hpp"

namespace recycle {

enum class LossKind { MAE, MSE };

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 10;
  autograd::AdamConfig adam{};
  std::uint64_t seed = 0;
  LossKind loss = LossKind::MAE;
  bool deterministic = true;

  void validate() const {
    if (batch_size == 0) throw ConfigError("train config: batch_size must be at least 1");
    if (early_stop_patience > max_epochs) throw ConfigError("train config: patience exceeds max_epochs");
    if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.eps > 0.0)) {
      throw ConfigError("train config: invalid Adam hyperparameters");
    }
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"max_epochs", c.max_epochs},
       {"early_stop_patience", c.early_stop_patience},
       {"lr", c.adam.lr},
       {"beta1", c.adam.beta1},
       {"beta2", c.adam.beta2},
       {"eps", c.adam.eps},
       {"seed", c.seed},
       {"loss", c.loss == LossKind::MAE ? "mae" : "mse"},
       {"deterministic", c.deterministic}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.batch_size = j.value("batch_size", d.batch_size);
  c.max_epochs = j.value("max_epochs", d.max_epochs);
  c.early_stop_patience = j.value("early_stop_patience", d.early_stop_patience);
  c.adam.lr = j.value("lr", d.adam.lr);
  c.adam.beta1 = j.value("beta1", d.adam.beta1);
  c.adam.beta2 = j.value("beta2", d.adam.beta2);
  c.adam.eps = j.value("eps", d.adam.eps);
  c.seed = j.value("seed", d.seed);
  const std::string loss = j.value("loss", std::string("mae"));
  if (loss == "mae") {
    c.loss = LossKind::MAE;
  } else if (loss == "mse") {
    c.loss = LossKind::MSE;
  } else {
    throw ConfigError("train config: loss must be 'mae' or 'mse', got '" + loss + "'");
  }
  c.deterministic = j.value("deterministic", d.deterministic);
}

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the untrained model
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct MetricsReport {
  double mse = 0.0;   // original units squared
  double mape = 0.0;  // percent
  double mae = 0.0;   // original units
  std::size_t n_samples = 0;
  std::size_t n_elements = 0;
  std::size_t mape_excluded = 0;  // targets with |y| <= mape_epsilon
  std::map<std::string, double> wall_time_s;
  std::vector<EpochRecord> epoch_history;
};

inline constexpr double kMapeEpsilon = 1e-8;

// Wall times are reported by timing_json, not here.
inline nlohmann::json metrics_json(const MetricsReport& m) {
  nlohmann::json j = {{"mse", m.mse},
                      {"mape", m.mape},
                      {"mae", m.mae},
                      {"n_samples", m.n_samples},
                      {"n_elements", m.n_elements},
                      {"mape_excluded", m.mape_excluded}};
  if (!m.epoch_history.empty()) {
    auto& h = j["epoch_history"] = nlohmann::json::array();
    for (const auto& e : m.epoch_history) {
      h.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    }
  }
  return j;
}

// Elementwise metrics over all forecast/target pairs, accumulated in sample
// order. MAPE skips targets with |y| <= mape_epsilon and counts them.
inline MetricsReport compute_metrics(const std::vector<Matrix>& forecasts, const std::vector<Matrix>& targets,
                                     double mape_epsilon = kMapeEpsilon) {
  if (forecasts.size() != targets.size()) {
    throw DimensionError("metrics: " + std::to_string(forecasts.size()) + " forecasts for " +
                         std::to_string(targets.size()) + " targets");
  }
  MetricsReport r;
  r.n_samples = forecasts.size();
  double se = 0, ae = 0, ape = 0;
  std::size_t ape_count = 0;
  for (std::size_t s = 0; s < forecasts.size(); ++s) {
    const auto& f = forecasts[s].data();
    const auto& y = targets[s].data();
    if (f.size() != y.size()) throw DimensionError("metrics: forecast and target sizes differ");
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double err = y[i] - f[i];
      se += err * err;
      ae += std::abs(err);
      if (std::abs(y[i]) > mape_epsilon) {
        ape += std::abs(err) / std::abs(y[i]);
        ++ape_count;
      } else {
        ++r.mape_excluded;
      }
      ++r.n_elements;
    }
  }
  if (r.n_elements == 0) throw MetricError("metrics: no elements to score");
  if (ape_count == 0) throw MetricError("metrics: every target is within mape_epsilon of zero; MAPE undefined");
  const double n = static_cast<double>(r.n_elements);
  r.mse = se / n;
  r.mae = ae / n;
  r.mape = 100.0 * ape / static_cast<double>(ape_count);
  if (!std::isfinite(r.mse) || !std::isfinite(r.mae) || !std::isfinite(r.mape)) {
    throw MetricError("metrics: non-finite result");
  }
  return r;
}

inline std::vector<Matrix> denormalized_targets(const std::vector<WindowSample>& samples, const NormStats& stats) {
  std::vector<Matrix> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    Matrix m = s.target_raw;
    for (double& v : m.data()) v = denormalize(v, stats);
    out.push_back(std::move(m));
  }
  return out;
}

// Scores normalized forecasts (e.g. a baseline) against the samples' targets.
inline MetricsReport evaluate_forecasts(const std::vector<Matrix>& normalized_forecasts,
                                        const std::vector<WindowSample>& samples, const NormStats& stats) {
  std::vector<Matrix> forecasts;
  forecasts.reserve(normalized_forecasts.size());
  for (Matrix m : normalized_forecasts) {
    for (double& v : m.data()) v = denormalize(v, stats);
    forecasts.push_back(std::move(m));
  }
  return compute_metrics(forecasts, denormalized_targets(samples, stats));
}

template <std::floating_point T>
MetricsReport evaluate(const ForecastModel<T>& model, const std::vector<WindowSample>& samples,
                       const NormStats& stats) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<Matrix> forecasts;
  forecasts.reserve(samples.size());
  for (const auto& s : samples) forecasts.push_back(predict(model, s, stats));
  MetricsReport r = compute_metrics(forecasts, denormalized_targets(samples, stats));
  r.wall_time_s["evaluate"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

template <std::floating_point T>
autograd::Tensor<T> sample_loss(const autograd::Tensor<T>& prediction, const WindowSample& sample, LossKind kind) {
  const auto target = to_tensor<T>(sample.target_residuals);
  return kind == LossKind::MAE ? autograd::mae_loss(prediction, target) : autograd::mse_loss(prediction, target);
}

// Mean per-sample loss of the model in inference mode.
template <std::floating_point T>
double dataset_loss(const ForecastModel<T>& model, const std::vector<WindowSample>& samples, LossKind kind) {
  double total = 0;
  for (const auto& s : samples) total += static_cast<double>(sample_loss(forward(model, s, false), s, kind).item());
  return total / static_cast<double>(samples.size());
}

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t epochs_run = 0;
  double train_seconds = 0.0;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Trains in place and leaves the model holding the parameters of the epoch
// with the lowest validation loss (epoch 0 being the untrained model).
template <std::floating_point T>
TrainResult train(ForecastModel<T>& model, const std::vector<WindowSample>& train_samples,
                  const std::vector<WindowSample>& val_samples, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  if (train_samples.empty() || val_samples.empty()) throw InputError("train: empty training or validation set");
  const auto clock_start = std::chrono::steady_clock::now();

  auto params = model.parameters();
  autograd::Adam<T> optimizer(params, cfg.adam);
  auto snapshot = [&] {
    std::vector<std::vector<T>> copy;
    for (const auto& p : params) copy.emplace_back(p.values().begin(), p.values().end());
    return copy;
  };

  TrainResult result;
  EpochRecord initial{0, dataset_loss(model, train_samples, cfg.loss), dataset_loss(model, val_samples, cfg.loss)};
  result.history.push_back(initial);
  if (on_epoch) on_epoch(initial);
  result.best_val_loss = initial.val_loss;
  auto best_params = snapshot();
  std::size_t since_best = 0;

  // A zero loss at epoch 0 is a fixed point: every residual target is already met.
  const bool converged = initial.train_loss == 0.0 && initial.val_loss == 0.0;

  std::vector<std::size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; !converged && epoch <= cfg.max_epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(detail::mix_seed(cfg.seed, 2 * epoch));
    std::mt19937_64 dropout_rng(detail::mix_seed(cfg.seed, 2 * epoch + 1));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const T inv_batch = T(1) / static_cast<T>(end - begin);
      optimizer.zero_grad();
      for (std::size_t i = begin; i < end; ++i) {
        const WindowSample& s = train_samples[order[i]];
        const auto loss = sample_loss(forward(model, s, true, &dropout_rng), s, cfg.loss);
        const double value = static_cast<double>(loss.item());
        if (!std::isfinite(value)) {
          throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_index));
        }
        epoch_loss += value;
        autograd::backward(autograd::scale(loss, inv_batch));
      }
      optimizer.step();
    }

    EpochRecord record{epoch, epoch_loss / static_cast<double>(order.size()),
                       dataset_loss(model, val_samples, cfg.loss)};
    if (!std::isfinite(record.val_loss)) {
      throw TrainingError("training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(record);
    result.epochs_run = epoch;
    if (on_epoch) on_epoch(record);
    if (record.val_loss < result.best_val_loss) {
      result.best_val_loss = record.val_loss;
      result.best_epoch = epoch;
      best_params = snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(best_params[i].begin(), best_params[i].end(), params[i].mutable_values().begin());
  }
  result.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return result;
}

struct TimingRecord {
  std::vector<double> run_seconds;
  double mean_seconds = 0.0;
};

// Runs `run` `runs` times (3 by default) and records each wall time and their mean.
inline TimingRecord benchmark(const std::function<void()>& run, std::size_t runs = 3) {
  if (runs == 0) throw ConfigError("benchmark: need at least one run");
  TimingRecord rec;
  for (std::size_t i = 0; i < runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    run();
    rec.run_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  rec.mean_seconds = std::accumulate(rec.run_seconds.begin(), rec.run_seconds.end(), 0.0) /
                     static_cast<double>(rec.run_seconds.size());
  return rec;
}

inline nlohmann::json timing_json(const TimingRecord& t) {
  return {{"runs", t.run_seconds}, {"mean_s", t.mean_seconds}, {"energy", "unsupported"}};
}

}  // namespace recycle
