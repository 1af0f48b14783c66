#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "recycle/cycle_frame.hpp"
#include "recycle/model.hpp"
#include "recycle/optim.hpp"
#include "test_util.hpp"

namespace {

using namespace recycle;
using autograd::Tensor;
using recycle::testing::grad_check;
using recycle::testing::random_tensor;
using recycle::testing::Tensor64;

ModelConfig small_config() {
  ModelConfig c;
  c.cycle_length = 4;
  c.history = 3;
  c.horizon = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 16;
  c.dropout = 0.0;
  c.seed = 17;
  return c;
}

std::vector<WindowSample> samples_for(const ModelConfig& c, std::size_t days, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.5, 0.2);
  std::vector<double> v(days * c.cycle_length);
  for (double& x : v) x = n(rng);
  const TimeSeries ts{recycle::testing::at(2021, 1, 4), 86400 / static_cast<std::int64_t>(c.cycle_length), v, "x"};
  const CycleFrame f = compress(ts, c.cycle_length);
  const HolidayCalendar cal;
  const ResidualFrame r = residual_frame(f, 1, cal);
  WindowOptions opt;
  opt.history = c.history;
  opt.horizon = c.horizon;
  return build_samples(f, r, cal, opt);
}

void randomize(const ForecastModel<double>& m, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& [name, t] : m.named_parameters()) {
    auto copy = t;
    for (double& v : copy.mutable_values()) v = n(rng);
  }
}

std::vector<double> vals(const Tensor64& t) { return {t.values().begin(), t.values().end()}; }

// Closed-form count: embeddings, per-layer attention/norm/feed-forward blocks
// and the output projection.
std::size_t expected_parameters(const ModelConfig& c) {
  const std::size_t d = c.d_model, in = c.cycle_length + c.metadata_width;
  const std::size_t linear_dd = d * d + d;
  const std::size_t attention = 4 * linear_dd;
  const std::size_t norm = 2 * d;
  const std::size_t ff = (d * c.d_ff + c.d_ff) + (c.d_ff * d + d);
  const std::size_t enc = attention + norm + ff + norm;
  const std::size_t dec = (c.decoder_self_attention ? attention + norm : 0) + attention + norm + ff + norm;
  return 2 * (in * d + d) + c.n_encoder_layers * enc + c.n_decoder_layers * dec + d * c.cycle_length +
         c.cycle_length;
}

TEST(BuildModel, ParameterCountMatchesClosedForm) {
  const ModelConfig defaults;
  EXPECT_EQ(build_model(defaults).parameter_count(), expected_parameters(defaults));
  EXPECT_EQ(expected_parameters(defaults), 89624u);
  ModelConfig other = small_config();
  other.n_encoder_layers = 2;
  other.n_decoder_layers = 3;
  other.decoder_self_attention = false;
  EXPECT_EQ(build_model(other).parameter_count(), expected_parameters(other));
}

TEST(BuildModel, SameSeedGivesBitwiseIdenticalParameters) {
  const auto a = build_model(small_config()).named_parameters();
  const auto b = build_model(small_config()).named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(vals(a[i].second), vals(b[i].second));
  }
  ModelConfig c = small_config();
  c.seed = 18;
  EXPECT_NE(vals(build_model(c).encoder_embedding.weight), vals(build_model(small_config()).encoder_embedding.weight));
}

TEST(BuildModel, OutputProjectionStartsAtZero) {
  const auto m = build_model(small_config());
  for (double v : m.output_projection.weight.values()) EXPECT_EQ(v, 0.0);
  for (double v : m.output_projection.bias.values()) EXPECT_EQ(v, 0.0);
  const double limit = std::sqrt(6.0 / (13.0 + 8.0));
  for (double v : m.encoder_embedding.weight.values()) EXPECT_LE(std::abs(v), limit);
}

TEST(BuildModel, RejectsIndivisibleHeads) {
  ModelConfig c;
  c.n_heads = 5;
  EXPECT_THROW((void)build_model(c), ConfigError);
  c = ModelConfig{};
  c.d_ff = 0;
  EXPECT_THROW((void)build_model(c), ConfigError);
}

// Straightforward per-head loops over plain vectors.
std::vector<double> naive_attention(const std::vector<double>& q_in, std::size_t sq, const std::vector<double>& kv_in,
                                    std::size_t sk, const AttentionParams<double>& p, std::size_t heads,
                                    std::size_t d) {
  auto project = [d](const std::vector<double>& x, std::size_t rows, const LinearParams<double>& l) {
    std::vector<double> out(rows * d);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        double s = l.bias.values()[j];
        for (std::size_t i = 0; i < d; ++i) s += x[r * d + i] * l.weight.values()[i * d + j];
        out[r * d + j] = s;
      }
    }
    return out;
  };
  const auto q = project(q_in, sq, p.query);
  const auto k = project(kv_in, sk, p.key);
  const auto v = project(kv_in, sk, p.value);
  const std::size_t dk = d / heads;
  std::vector<double> merged(sq * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < sq; ++i) {
      std::vector<double> score(sk);
      for (std::size_t j = 0; j < sk; ++j) {
        double s = 0;
        for (std::size_t c = 0; c < dk; ++c) s += q[i * d + h * dk + c] * k[j * d + h * dk + c];
        score[j] = s / std::sqrt(static_cast<double>(dk));
      }
      const double mx = *std::max_element(score.begin(), score.end());
      double total = 0;
      for (double& s : score) total += (s = std::exp(s - mx));
      for (std::size_t j = 0; j < sk; ++j) {
        for (std::size_t c = 0; c < dk; ++c) merged[i * d + h * dk + c] += score[j] / total * v[j * d + h * dk + c];
      }
    }
  }
  return project(merged, sq, p.output);
}

TEST(MultiHeadAttention, MatchesNaiveLoops) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t d = 8, heads = seed % 2 == 0 ? 2 : 4;
    const auto p = detail::glorot_attention<double>(d, rng);
    for (auto* l : {&p.query, &p.key, &p.value, &p.output}) {
      for (double& b : Tensor64(l->bias).mutable_values()) b = std::normal_distribution<double>(0, 0.1)(rng);
    }
    auto q = random_tensor({5, d}, rng, false), kv = random_tensor({7, d}, rng, false);
    const auto out = multi_head_attention(q, kv, p, heads);
    const auto ref = naive_attention(vals(q), 5, vals(kv), 7, p, heads, d);
    ASSERT_EQ(out.shape(), (autograd::Shape{5, d}));
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.values()[i], ref[i], 1e-12);
  }
}

TEST(MultiHeadAttention, SingleTokenHasUnitWeight) {
  std::mt19937_64 rng(1);
  const auto p = detail::glorot_attention<double>(8, rng);
  auto q = random_tensor({1, 8}, rng, false), kv = random_tensor({1, 8}, rng, false);
  std::vector<Tensor64> weights;
  const auto out = multi_head_attention(q, kv, p, 2, &weights);
  ASSERT_EQ(weights.size(), 2u);
  for (const auto& w : weights) EXPECT_EQ(w.values()[0], 1.0);
  // Output is the value row passed through the output projection.
  const auto expected = autograd::linear(autograd::linear(kv, p.value.weight, p.value.bias), p.output.weight,
                                         p.output.bias);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(out.values()[i], expected.values()[i], 1e-14);
}

TEST(MultiHeadAttention, IdenticalKeysGiveUniformWeights) {
  std::mt19937_64 rng(2);
  const auto p = detail::glorot_attention<double>(8, rng);
  auto q = random_tensor({3, 8}, rng, false);
  auto row = random_tensor({1, 8}, rng, false);
  auto kv = autograd::concat<double>({row, row, row, row}, 0);
  std::vector<Tensor64> weights;
  (void)multi_head_attention(q, kv, p, 4, &weights);
  for (const auto& w : weights) {
    for (double v : w.values()) EXPECT_DOUBLE_EQ(v, 0.25);
  }
}

TEST(MultiHeadAttention, RowsAreProbabilityVectors) {
  std::mt19937_64 rng(3);
  const auto p = detail::glorot_attention<double>(16, rng);
  for (int trial = 0; trial < 10; ++trial) {
    auto q = random_tensor({6, 16}, rng, false, 3.0), kv = random_tensor({9, 16}, rng, false, 3.0);
    std::vector<Tensor64> weights;
    (void)multi_head_attention(q, kv, p, 4, &weights);
    for (const auto& w : weights) {
      for (std::size_t i = 0; i < 6; ++i) {
        double total = 0;
        for (std::size_t j = 0; j < 9; ++j) {
          EXPECT_GE(w.values()[i * 9 + j], 0.0);
          total += w.values()[i * 9 + j];
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
      }
    }
  }
}

TEST(MultiHeadAttention, RejectsMismatchedWidths) {
  std::mt19937_64 rng(4);
  const auto p = detail::glorot_attention<double>(8, rng);
  EXPECT_THROW((void)multi_head_attention(Tensor64::zeros({2, 6}), Tensor64::zeros({2, 8}), p, 2), DimensionError);
  EXPECT_THROW((void)multi_head_attention(Tensor64::zeros({2, 8}), Tensor64::zeros({2, 8}), p, 3), ConfigError);
}

TEST(Forward, FreshModelForecastsExactlyZero) {
  const ModelConfig defaults;
  const auto model = build_model(defaults);
  const auto samples = samples_for(defaults, 40, 5);
  for (std::size_t i = 0; i < samples.size(); i += 5) {
    const auto y = forward(model, samples[i], false);
    EXPECT_EQ(y.shape(), (autograd::Shape{7, 24}));
    for (double v : y.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Forward, ShapeMismatchIsDimensionError) {
  const auto model = build_model(small_config());
  auto s = samples_for(small_config(), 20, 6).front();
  s.encoder_input = Matrix(4, 13);
  EXPECT_THROW((void)forward(model, s, false), DimensionError);
}

TEST(Forward, TrainingWithDropoutNeedsGenerator) {
  ModelConfig c = small_config();
  c.dropout = 0.2;
  const auto model = build_model(c);
  const auto s = samples_for(c, 20, 7).front();
  EXPECT_THROW((void)forward(model, s, true), UsageError);
  std::mt19937_64 a(3), b(3);
  EXPECT_EQ(vals(forward(model, s, true, &a)), vals(forward(model, s, true, &b)));
}

Matrix permuted_rows(const Matrix& m, const std::vector<std::size_t>& order) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(order[r], c);
  }
  return out;
}

TEST(Forward, EncoderOrderMattersOnlyThroughPositions) {
  ModelConfig c = small_config();
  c.history = 5;
  const auto s = samples_for(c, 30, 8).front();
  const std::vector<std::size_t> order{4, 2, 0, 1, 3};
  const Matrix shuffled = permuted_rows(s.encoder_input, order);

  const auto with_pe = build_model(c);
  randomize(with_pe, 1);
  const auto a = vals(forward(with_pe, s.encoder_input, s.decoder_input, false));
  const auto b = vals(forward(with_pe, shuffled, s.decoder_input, false));
  double diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  EXPECT_GT(diff, 1e-6);

  c.positional_encoding = false;
  const auto without_pe = build_model(c);
  randomize(without_pe, 1);
  const auto x = vals(forward(without_pe, s.encoder_input, s.decoder_input, false));
  const auto y = vals(forward(without_pe, shuffled, s.decoder_input, false));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], 1e-12);
}

TEST(Predict, FreshModelEqualsDenormalizedProfile) {
  const ModelConfig defaults;
  const auto model = build_model(defaults);
  const NormStats stats{-3.25, 17.5, "train"};
  for (const auto& s : samples_for(defaults, 40, 9)) {
    const Matrix out = predict(model, s, stats);
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_EQ(out.data()[i], denormalize(s.target_rhp.data()[i], stats));
    }
  }
}

TEST(Predict, ZeroProfileMapsToDenormalizedZero) {
  const auto model = build_model(small_config());
  auto s = samples_for(small_config(), 20, 10).front();
  s.target_rhp = Matrix(2, 4);
  const NormStats stats{5.0, 9.0, "train"};
  const Matrix out = predict(model, s, stats);
  for (double v : out.data()) EXPECT_EQ(v, 5.0);
  const auto fresh = samples_for(small_config(), 20, 10).front();
  const Matrix identity = predict(model, fresh, NormStats{0.0, 1.0, "train"});
  EXPECT_EQ(identity.data(), fresh.target_rhp.data());
}

double mse_to_target(const ForecastModel<double>& m, const WindowSample& s) {
  return autograd::mse_loss(forward(m, s, false), to_tensor<double>(s.target_residuals)).item();
}

TEST(Gradients, EndToEndMatchesCentralDifferences) {
  const ModelConfig c = small_config();
  const auto model = build_model(c);
  randomize(model, 2);
  const auto s = samples_for(c, 20, 11).front();
  const auto r = grad_check(
      [&] { return autograd::mse_loss(forward(model, s, false), to_tensor<double>(s.target_residuals)); },
      model.parameters(), 200, 7, 1e-6);
  EXPECT_EQ(r.coordinates, 200u);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst;
}

TEST(Gradients, FlowReachesEveryParameterAfterOneStep) {
  const ModelConfig c = small_config();
  const auto model = build_model(c);
  const auto s = samples_for(c, 20, 12).front();
  const auto params = model.named_parameters();
  autograd::Adam<double> opt(model.parameters());
  auto loss = [&] { return autograd::mse_loss(forward(model, s, false), to_tensor<double>(s.target_residuals)); };
  auto norm = [](const Tensor64& t) {
    double n = 0;
    if (t.has_grad()) for (double g : t.grad()) n += g * g;
    return n;
  };

  // At initialization the zero output projection blocks every upstream path.
  autograd::backward(loss());
  for (const auto& [name, t] : params) {
    if (name.starts_with("output_projection")) {
      EXPECT_GT(norm(t), 0.0) << name;
    } else {
      EXPECT_EQ(norm(t), 0.0) << name;
    }
  }
  opt.step();
  opt.zero_grad();
  autograd::backward(loss());
  for (const auto& [name, t] : params) EXPECT_GT(norm(t), 0.0) << name;
  EXPECT_GT(mse_to_target(model, s), 0.0);
}

TEST(Checkpoint, ModelRoundTripReproducesForecasts) {
  recycle::testing::TempDir dir("model");
  ModelConfig c = small_config();
  c.decoder_self_attention = false;
  const auto model = build_model(c);
  randomize(model, 3);
  const auto path = dir / "m.json";
  save_model(path, model);
  const auto loaded = load_model<double>(path);
  EXPECT_EQ(loaded.config, c);
  EXPECT_EQ(loaded.parameter_count(), model.parameter_count());
  for (const auto& s : samples_for(c, 20, 13)) {
    EXPECT_EQ(vals(forward(loaded, s, false)), vals(forward(model, s, false)));
  }
}

}  // namespace
