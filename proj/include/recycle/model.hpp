#pragma once

// Encoder-decoder transformer over cycle rows. The encoder reads H rows of
// residuals plus metadata, the decoder reads the F profile rows plus metadata
// and attends to the encoder output; all F residual rows come out of a single
// decoder pass. No attention mask is applied anywhere. The output projection
// starts at zero so an untrained model forecasts zero residuals, i.e. exactly
// the profile baseline.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "recycle/calendar.hpp"
#include "recycle/checkpoint.hpp"
#include "recycle/cycle_frame.hpp"
#include "recycle/errors.hpp"
#include "recycle/matrix.hpp"
#include "recycle/series.hpp"
#include "recycle/tensor.hpp"

namespace recycle {

struct ModelConfig {
  std::size_t cycle_length = 24;  // D
  std::size_t metadata_width = kMetadataWidth;  // M
  std::size_t history = 21;  // H, cycles
  std::size_t horizon = 7;   // F, cycles
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_encoder_layers = 1;
  std::size_t n_decoder_layers = 1;
  std::size_t d_ff = 128;
  double dropout = 0.1;
  bool positional_encoding = true;
  bool decoder_self_attention = true;
  std::uint64_t seed = 0;

  std::size_t input_width() const noexcept { return cycle_length + metadata_width; }
  std::size_t head_dim() const noexcept { return d_model / n_heads; }

  void validate() const {
    if (cycle_length == 0 || metadata_width == 0 || history == 0 || horizon == 0 || d_model == 0 ||
        n_heads == 0 || n_encoder_layers == 0 || n_decoder_layers == 0 || d_ff == 0) {
      throw ConfigError("model config: all extents must be positive");
    }
    if (d_model % n_heads != 0) {
      throw ConfigError("model config: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                        std::to_string(n_heads));
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model config: dropout must lie in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"D", c.cycle_length},
       {"M", c.metadata_width},
       {"H", c.history},
       {"F", c.horizon},
       {"d_model", c.d_model},
       {"n_heads", c.n_heads},
       {"n_encoder_layers", c.n_encoder_layers},
       {"n_decoder_layers", c.n_decoder_layers},
       {"d_ff", c.d_ff},
       {"dropout", c.dropout},
       {"positional_encoding", c.positional_encoding},
       {"decoder_self_attention", c.decoder_self_attention},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.cycle_length = j.value("D", d.cycle_length);
  c.metadata_width = j.value("M", d.metadata_width);
  c.history = j.value("H", d.history);
  c.horizon = j.value("F", d.horizon);
  c.d_model = j.value("d_model", d.d_model);
  c.n_heads = j.value("n_heads", d.n_heads);
  c.n_encoder_layers = j.value("n_encoder_layers", d.n_encoder_layers);
  c.n_decoder_layers = j.value("n_decoder_layers", d.n_decoder_layers);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.dropout = j.value("dropout", d.dropout);
  c.positional_encoding = j.value("positional_encoding", d.positional_encoding);
  c.decoder_self_attention = j.value("decoder_self_attention", d.decoder_self_attention);
  c.seed = j.value("seed", d.seed);
}

template <std::floating_point T>
struct LinearParams {
  autograd::Tensor<T> weight;  // [in, out]
  autograd::Tensor<T> bias;    // [out]
};

template <std::floating_point T>
struct NormParams {
  autograd::Tensor<T> gain;
  autograd::Tensor<T> bias;
};

template <std::floating_point T>
struct AttentionParams {
  LinearParams<T> query, key, value, output;
};

template <std::floating_point T>
struct EncoderLayer {
  AttentionParams<T> self_attention;
  NormParams<T> attention_norm;
  LinearParams<T> ff_in, ff_out;
  NormParams<T> ff_norm;
};

template <std::floating_point T>
struct DecoderLayer {
  std::optional<AttentionParams<T>> self_attention;
  std::optional<NormParams<T>> self_attention_norm;
  AttentionParams<T> cross_attention;
  NormParams<T> cross_attention_norm;
  LinearParams<T> ff_in, ff_out;
  NormParams<T> ff_norm;
};

template <std::floating_point T>
struct ForecastModel {
  ModelConfig config;
  LinearParams<T> encoder_embedding;
  LinearParams<T> decoder_embedding;
  std::vector<EncoderLayer<T>> encoder;
  std::vector<DecoderLayer<T>> decoder;
  LinearParams<T> output_projection;

  // Every trainable tensor with a stable dotted name, in a fixed order.
  NamedTensors<T> named_parameters() const {
    NamedTensors<T> out;
    auto linear = [&](const std::string& name, const LinearParams<T>& p) {
      out.emplace_back(name + ".weight", p.weight);
      out.emplace_back(name + ".bias", p.bias);
    };
    auto norm = [&](const std::string& name, const NormParams<T>& p) {
      out.emplace_back(name + ".gain", p.gain);
      out.emplace_back(name + ".bias", p.bias);
    };
    auto attention = [&](const std::string& name, const AttentionParams<T>& p) {
      linear(name + ".query", p.query);
      linear(name + ".key", p.key);
      linear(name + ".value", p.value);
      linear(name + ".output", p.output);
    };
    linear("encoder.embedding", encoder_embedding);
    linear("decoder.embedding", decoder_embedding);
    for (std::size_t i = 0; i < encoder.size(); ++i) {
      const std::string base = "encoder.layers." + std::to_string(i);
      attention(base + ".self_attention", encoder[i].self_attention);
      norm(base + ".attention_norm", encoder[i].attention_norm);
      linear(base + ".ff_in", encoder[i].ff_in);
      linear(base + ".ff_out", encoder[i].ff_out);
      norm(base + ".ff_norm", encoder[i].ff_norm);
    }
    for (std::size_t i = 0; i < decoder.size(); ++i) {
      const std::string base = "decoder.layers." + std::to_string(i);
      if (decoder[i].self_attention) {
        attention(base + ".self_attention", *decoder[i].self_attention);
        norm(base + ".self_attention_norm", *decoder[i].self_attention_norm);
      }
      attention(base + ".cross_attention", decoder[i].cross_attention);
      norm(base + ".cross_attention_norm", decoder[i].cross_attention_norm);
      linear(base + ".ff_in", decoder[i].ff_in);
      linear(base + ".ff_out", decoder[i].ff_out);
      norm(base + ".ff_norm", decoder[i].ff_norm);
    }
    linear("output_projection", output_projection);
    return out;
  }

  std::vector<autograd::Tensor<T>> parameters() const {
    std::vector<autograd::Tensor<T>> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named_parameters()) n += t.numel();
    return n;
  }
};

namespace detail {

template <std::floating_point T>
LinearParams<T> glorot_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<T> w(in * out);
  for (T& v : w) v = static_cast<T>((2.0 * autograd::unit_uniform(rng) - 1.0) * limit);
  return {autograd::Tensor<T>::from({in, out}, std::move(w), true), autograd::Tensor<T>::zeros({out}, true)};
}

template <std::floating_point T>
LinearParams<T> zero_linear(std::size_t in, std::size_t out) {
  return {autograd::Tensor<T>::zeros({in, out}, true), autograd::Tensor<T>::zeros({out}, true)};
}

template <std::floating_point T>
NormParams<T> unit_norm(std::size_t n) {
  return {autograd::Tensor<T>::from({n}, std::vector<T>(n, T(1)), true), autograd::Tensor<T>::zeros({n}, true)};
}

template <std::floating_point T>
AttentionParams<T> glorot_attention(std::size_t d, std::mt19937_64& rng) {
  AttentionParams<T> p;
  p.query = glorot_linear<T>(d, d, rng);
  p.key = glorot_linear<T>(d, d, rng);
  p.value = glorot_linear<T>(d, d, rng);
  p.output = glorot_linear<T>(d, d, rng);
  return p;
}

}  // namespace detail

template <std::floating_point T = double>
ForecastModel<T> build_model(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  ForecastModel<T> m;
  m.config = cfg;
  const std::size_t d = cfg.d_model;
  m.encoder_embedding = detail::glorot_linear<T>(cfg.input_width(), d, rng);
  m.decoder_embedding = detail::glorot_linear<T>(cfg.input_width(), d, rng);
  for (std::size_t i = 0; i < cfg.n_encoder_layers; ++i) {
    EncoderLayer<T> layer;
    layer.self_attention = detail::glorot_attention<T>(d, rng);
    layer.attention_norm = detail::unit_norm<T>(d);
    layer.ff_in = detail::glorot_linear<T>(d, cfg.d_ff, rng);
    layer.ff_out = detail::glorot_linear<T>(cfg.d_ff, d, rng);
    layer.ff_norm = detail::unit_norm<T>(d);
    m.encoder.push_back(std::move(layer));
  }
  for (std::size_t i = 0; i < cfg.n_decoder_layers; ++i) {
    DecoderLayer<T> layer;
    if (cfg.decoder_self_attention) {
      layer.self_attention = detail::glorot_attention<T>(d, rng);
      layer.self_attention_norm = detail::unit_norm<T>(d);
    }
    layer.cross_attention = detail::glorot_attention<T>(d, rng);
    layer.cross_attention_norm = detail::unit_norm<T>(d);
    layer.ff_in = detail::glorot_linear<T>(d, cfg.d_ff, rng);
    layer.ff_out = detail::glorot_linear<T>(cfg.d_ff, d, rng);
    layer.ff_norm = detail::unit_norm<T>(d);
    m.decoder.push_back(std::move(layer));
  }
  m.output_projection = detail::zero_linear<T>(d, cfg.cycle_length);
  return m;
}

template <std::floating_point T>
autograd::Tensor<T> apply(const LinearParams<T>& p, const autograd::Tensor<T>& x) {
  return autograd::linear(x, p.weight, p.bias);
}

template <std::floating_point T>
autograd::Tensor<T> apply(const NormParams<T>& p, const autograd::Tensor<T>& x) {
  return autograd::layer_norm(x, p.gain, p.bias);
}

// Scaled dot-product attention of q_in [S_q, d] over kv_in [S_k, d]. When
// `weights` is given, the per-head attention matrices [S_q, S_k] are appended.
template <std::floating_point T>
autograd::Tensor<T> multi_head_attention(const autograd::Tensor<T>& q_in, const autograd::Tensor<T>& kv_in,
                                         const AttentionParams<T>& p, std::size_t n_heads,
                                         std::vector<autograd::Tensor<T>>* weights = nullptr) {
  using autograd::Tensor;
  const std::size_t d = p.query.weight.dim(1);
  if (q_in.rank() != 2 || kv_in.rank() != 2 || q_in.dim(1) != p.query.weight.dim(0) ||
      kv_in.dim(1) != p.key.weight.dim(0)) {
    throw DimensionError("multi_head_attention: inputs " + autograd::shape_string(q_in.shape()) + " / " +
                         autograd::shape_string(kv_in.shape()) + " do not match model width " +
                         std::to_string(p.query.weight.dim(0)));
  }
  if (n_heads == 0 || d % n_heads != 0) {
    throw ConfigError("multi_head_attention: width " + std::to_string(d) + " not divisible into " +
                      std::to_string(n_heads) + " heads");
  }
  const std::size_t dk = d / n_heads;
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(dk));
  const Tensor<T> q = apply(p.query, q_in);
  const Tensor<T> k = apply(p.key, kv_in);
  const Tensor<T> v = apply(p.value, kv_in);
  std::vector<Tensor<T>> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const Tensor<T> qh = autograd::slice(q, 1, h * dk, (h + 1) * dk);
    const Tensor<T> kh = autograd::slice(k, 1, h * dk, (h + 1) * dk);
    const Tensor<T> vh = autograd::slice(v, 1, h * dk, (h + 1) * dk);
    const Tensor<T> scores = autograd::scale(autograd::matmul(qh, autograd::transpose(kh)), inv_scale);
    const Tensor<T> attn = autograd::softmax(scores, 1);
    if (weights) weights->push_back(attn);
    heads.push_back(autograd::matmul(attn, vh));
  }
  const Tensor<T> merged = n_heads == 1 ? heads.front() : autograd::concat(heads, 1);
  return apply(p.output, merged);
}

// Sinusoidal position codes for positions [first, first + count).
template <std::floating_point T>
autograd::Tensor<T> positional_encoding(std::size_t first, std::size_t count, std::size_t d_model) {
  std::vector<T> pe(count * d_model);
  for (std::size_t pos = 0; pos < count; ++pos) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
      const double angle = static_cast<double>(first + pos) * freq;
      pe[pos * d_model + i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return autograd::Tensor<T>::from({count, d_model}, std::move(pe));
}

template <std::floating_point T>
autograd::Tensor<T> to_tensor(const Matrix& m) {
  std::vector<T> values(m.data().begin(), m.data().end());
  return autograd::Tensor<T>::from({m.rows(), m.cols()}, std::move(values));
}

// Single-pass forward: [H, D+M] encoder rows and [F, D+M] decoder rows to an
// [F, D] residual forecast. `rng` drives dropout and is only used in training.
template <std::floating_point T>
autograd::Tensor<T> forward(const ForecastModel<T>& model, const Matrix& encoder_rows, const Matrix& decoder_rows,
                            bool training, std::mt19937_64* rng = nullptr) {
  using autograd::Tensor;
  const ModelConfig& cfg = model.config;
  if (encoder_rows.rows() != cfg.history || encoder_rows.cols() != cfg.input_width() ||
      decoder_rows.rows() != cfg.horizon || decoder_rows.cols() != cfg.input_width()) {
    throw DimensionError("forward: got encoder " + std::to_string(encoder_rows.rows()) + "x" +
                         std::to_string(encoder_rows.cols()) + " and decoder " +
                         std::to_string(decoder_rows.rows()) + "x" + std::to_string(decoder_rows.cols()) +
                         ", model expects " + std::to_string(cfg.history) + "x" +
                         std::to_string(cfg.input_width()) + " and " + std::to_string(cfg.horizon) + "x" +
                         std::to_string(cfg.input_width()));
  }
  if (training && cfg.dropout > 0.0 && rng == nullptr) {
    throw UsageError("forward: training with dropout needs a random generator");
  }
  std::mt19937_64 unused;
  std::mt19937_64& gen = rng ? *rng : unused;
  auto drop = [&](const Tensor<T>& x) { return autograd::dropout(x, cfg.dropout, training, gen); };

  Tensor<T> x = apply(model.encoder_embedding, to_tensor<T>(encoder_rows));
  Tensor<T> y = apply(model.decoder_embedding, to_tensor<T>(decoder_rows));
  if (cfg.positional_encoding) {
    x = autograd::add(x, positional_encoding<T>(0, cfg.history, cfg.d_model));
    y = autograd::add(y, positional_encoding<T>(cfg.history, cfg.horizon, cfg.d_model));
  }
  x = drop(x);
  y = drop(y);

  for (const auto& layer : model.encoder) {
    x = apply(layer.attention_norm, autograd::add(x, drop(multi_head_attention(x, x, layer.self_attention, cfg.n_heads))));
    const Tensor<T> ff = apply(layer.ff_out, autograd::relu(apply(layer.ff_in, x)));
    x = apply(layer.ff_norm, autograd::add(x, drop(ff)));
  }
  for (const auto& layer : model.decoder) {
    if (layer.self_attention) {
      y = apply(*layer.self_attention_norm,
                autograd::add(y, drop(multi_head_attention(y, y, *layer.self_attention, cfg.n_heads))));
    }
    y = apply(layer.cross_attention_norm,
              autograd::add(y, drop(multi_head_attention(y, x, layer.cross_attention, cfg.n_heads))));
    const Tensor<T> ff = apply(layer.ff_out, autograd::relu(apply(layer.ff_in, y)));
    y = apply(layer.ff_norm, autograd::add(y, drop(ff)));
  }
  return apply(model.output_projection, y);
}

template <std::floating_point T>
autograd::Tensor<T> forward(const ForecastModel<T>& model, const WindowSample& sample, bool training,
                            std::mt19937_64* rng = nullptr) {
  return forward(model, sample.encoder_input, sample.decoder_input, training, rng);
}

// Normalized forecast: profile plus predicted residual.
template <std::floating_point T>
Matrix predict_normalized(const ForecastModel<T>& model, const WindowSample& sample) {
  const auto residual = forward(model, sample, false);
  Matrix out = sample.target_rhp;
  auto r = residual.values();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += static_cast<double>(r[i]);
  return out;
}

// Forecast in original units.
template <std::floating_point T>
Matrix predict(const ForecastModel<T>& model, const WindowSample& sample, const NormStats& stats) {
  Matrix out = predict_normalized(model, sample);
  for (double& v : out.data()) v = denormalize(v, stats);
  return out;
}

template <std::floating_point T>
void save_model(const std::filesystem::path& path, const ForecastModel<T>& model) {
  save_checkpoint<T>(path, model.named_parameters(), nlohmann::json(model.config));
}

// Rebuilds the model from the embedded configuration and restores its values.
template <std::floating_point T>
ForecastModel<T> load_model(const std::filesystem::path& path) {
  const auto doc = read_checkpoint(path);
  ForecastModel<T> model = build_model<T>(doc.at("config").get<ModelConfig>());
  auto params = model.named_parameters();
  restore_parameters<T>(doc, params);
  return model;
}

}  // namespace recycle
