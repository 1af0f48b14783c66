#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "recycle/checkpoint.hpp"
#include "recycle/optim.hpp"
#include "recycle/tensor.hpp"
#include "test_util.hpp"

namespace {

using namespace recycle;
using namespace recycle::autograd;
using recycle::testing::grad_check;
using recycle::testing::random_tensor;
using recycle::testing::Tensor64;

std::vector<double> vals(const Tensor64& t) { return {t.values().begin(), t.values().end()}; }

// Scalar loss <y, w> with a fixed random weighting so every output coordinate
// contributes a distinct amount.
Tensor64 weighted(const Tensor64& y, const Tensor64& w) { return sum(mul(y, w)); }

constexpr int kSeeds = 20;
constexpr double kGradTol = 1e-4;

TEST(TensorOps, MatmulIdentity) {
  auto a = Tensor64::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto eye = Tensor64::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(vals(matmul(a, eye)), vals(a));
  EXPECT_EQ(matmul(a, eye).shape(), (Shape{2, 3}));
}

TEST(TensorOps, MatmulNaiveOracle) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({4, 5}, rng, false);
  auto b = random_tensor({5, 3}, rng, false);
  auto c = matmul(a, b);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 5; ++k) s += a.values()[i * 5 + k] * b.values()[k * 3 + j];
      EXPECT_NEAR(c.values()[i * 3 + j], s, 1e-12);
    }
  }
}

TEST(TensorOps, MatmulRejectsNonConformingShapes) {
  auto a = Tensor64::zeros({2, 3});
  auto b = Tensor64::zeros({2, 3});
  try {
    (void)matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos) << e.what();
  }
}

TEST(TensorOps, BroadcastAddRepeatsOverLeadingAxes) {
  auto a = Tensor64::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = Tensor64::from({3}, {10, 20, 30});
  EXPECT_EQ(vals(add(a, b)), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  EXPECT_EQ(vals(add(b, a)), (std::vector<double>{11, 22, 33, 14, 25, 36}));
  EXPECT_EQ(vals(sub(a, b)), (std::vector<double>{-9, -18, -27, -6, -15, -24}));
  EXPECT_EQ(vals(sub(b, a)), (std::vector<double>{9, 18, 27, 6, 15, 24}));
  EXPECT_EQ(vals(mul(a, b)), (std::vector<double>{10, 40, 90, 40, 100, 180}));
  EXPECT_THROW((void)add(a, Tensor64::zeros({2})), DimensionError);
}

TEST(TensorOps, TransposeAndReshape) {
  auto a = Tensor64::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(vals(transpose(a)), (std::vector<double>{1, 4, 2, 5, 3, 6}));
  EXPECT_EQ(transpose(a).shape(), (Shape{3, 2}));
  auto r = reshape(a, {3, 2});
  EXPECT_EQ(vals(r), vals(a));
  EXPECT_THROW((void)reshape(a, {4, 2}), DimensionError);
  EXPECT_THROW((void)transpose(a, {0, 0}), DimensionError);

  std::mt19937_64 rng(2);
  auto x = random_tensor({2, 3, 4}, rng, false);
  auto y = transpose(x, {2, 0, 1});
  ASSERT_EQ(y.shape(), (Shape{4, 2, 3}));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(y.values()[k * 6 + i * 3 + j], x.values()[i * 12 + j * 4 + k]);
}

TEST(TensorOps, ConcatAndSlice) {
  auto a = Tensor64::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor64::from({2, 1}, {9, 8});
  auto c = concat(a, b, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 3}));
  EXPECT_EQ(vals(c), (std::vector<double>{1, 2, 9, 3, 4, 8}));
  EXPECT_EQ(vals(concat(a, a, 0)), (std::vector<double>{1, 2, 3, 4, 1, 2, 3, 4}));
  EXPECT_THROW((void)concat(a, b, 0), DimensionError);
  EXPECT_EQ(vals(slice(c, 1, 1, 3)), (std::vector<double>{2, 9, 4, 8}));
  EXPECT_EQ(vals(slice(c, 0, 1, 2)), (std::vector<double>{3, 4, 8}));
  EXPECT_THROW((void)slice(c, 1, 2, 2), DimensionError);
  EXPECT_THROW((void)slice(c, 1, 0, 4), DimensionError);
}

TEST(TensorOps, SoftmaxExamples) {
  EXPECT_EQ(vals(softmax(Tensor64::from({2}, {0, 0}), 0)), (std::vector<double>{0.5, 0.5}));
  auto big = softmax(Tensor64::from({2}, {1000, 0}), 0);
  EXPECT_EQ(big.values()[0], 1.0);
  EXPECT_EQ(big.values()[1], 0.0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW((void)softmax(Tensor64::from({2}, {nan, 0}), 0), NumericError);
}

TEST(TensorOps, SoftmaxRowsArePositiveAndSumToOne) {
  std::mt19937_64 rng(3);
  for (int seed = 0; seed < kSeeds; ++seed) {
    auto x = random_tensor({3, 4, 5}, rng, false, 5.0);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      auto y = softmax(x, axis);
      const auto v = autograd::detail::axis_view(x.shape(), axis);
      for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t in = 0; in < v.inner; ++in) {
          double total = 0;
          for (std::size_t e = 0; e < v.extent; ++e) {
            const double p = y.values()[o * v.extent * v.inner + e * v.inner + in];
            EXPECT_GE(p, 0.0);
            total += p;
          }
          EXPECT_NEAR(total, 1.0, 1e-12);
        }
      }
    }
  }
}

TEST(TensorOps, LayerNormOfConstantRowIsBias) {
  auto x = Tensor64::from({2, 4}, std::vector<double>(8, 3.5));
  auto g = Tensor64::from({4}, {1, 2, 3, 4});
  auto b = Tensor64::from({4}, {0.1, 0.2, 0.3, 0.4});
  EXPECT_EQ(vals(layer_norm(x, g, b)), (std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.1, 0.2, 0.3, 0.4}));
  EXPECT_THROW((void)layer_norm(x, Tensor64::zeros({3}), b), DimensionError);
}

TEST(TensorOps, LayerNormStandardizesRows) {
  std::mt19937_64 rng(4);
  auto x = random_tensor({5, 16}, rng, false, 3.0);
  auto y = layer_norm(x, Tensor64::from({16}, std::vector<double>(16, 1.0)), Tensor64::zeros({16}), 0.0);
  for (std::size_t r = 0; r < 5; ++r) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 16; ++i) m += y.values()[r * 16 + i];
    m /= 16;
    for (std::size_t i = 0; i < 16; ++i) v += std::pow(y.values()[r * 16 + i] - m, 2);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 16, 1.0, 1e-12);
  }
}

TEST(TensorOps, ReluTanhScale) {
  auto x = Tensor64::from({4}, {-2, -0.0, 0.5, 3});
  EXPECT_EQ(vals(relu(x)), (std::vector<double>{0, 0, 0.5, 3}));
  EXPECT_EQ(vals(scale(x, 2.0)), (std::vector<double>{-4, 0, 1, 6}));
  EXPECT_DOUBLE_EQ(tanh(x).values()[3], std::tanh(3.0));
}

TEST(TensorOps, DropoutInferenceIsIdentity) {
  std::mt19937_64 rng(5);
  auto x = random_tensor({3, 7}, rng, false);
  std::mt19937_64 drop_rng(9);
  auto y = dropout(x, 0.5, false, drop_rng);
  EXPECT_EQ(vals(y), vals(x));
  EXPECT_EQ(vals(dropout(x, 0.0, true, drop_rng)), vals(x));
  EXPECT_THROW((void)dropout(x, 1.0, true, drop_rng), ConfigError);
  EXPECT_THROW((void)dropout(x, -0.1, false, drop_rng), ConfigError);
}

TEST(TensorOps, DropoutTrainingZeroesOrRescales) {
  auto x = Tensor64::from({1000}, std::vector<double>(1000, 1.0));
  std::mt19937_64 rng(6);
  auto y = dropout(x, 0.25, true, rng);
  std::size_t dropped = 0;
  for (double v : y.values()) {
    if (v == 0.0) {
      ++dropped;
    } else {
      EXPECT_DOUBLE_EQ(v, 1.0 / 0.75);
    }
  }
  EXPECT_GT(dropped, 180u);
  EXPECT_LT(dropped, 320u);
  std::mt19937_64 again(6);
  EXPECT_EQ(vals(dropout(x, 0.25, true, again)), vals(y));
}

TEST(TensorOps, LossExamples) {
  auto p = Tensor64::from({2}, {0, 2});
  auto t = Tensor64::from({2}, {1, 1});
  EXPECT_EQ(mae_loss(p, t).item(), 1.0);
  EXPECT_EQ(mse_loss(p, t).item(), 1.0);
  EXPECT_THROW((void)mae_loss(p, Tensor64::zeros({3})), DimensionError);
  EXPECT_THROW((void)mse_loss(p, Tensor64::zeros({2, 1})), DimensionError);
}

TEST(Autograd, BackwardNeedsScalarLoss) {
  auto x = Tensor64::from({2}, {1, 2}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), UsageError);
  EXPECT_THROW(backward(sum(Tensor64::from({2}, {1, 2}))), UsageError);
}

TEST(Autograd, RepeatedBackwardAccumulatesIntoLeaves) {
  std::mt19937_64 rng(7);
  auto x = random_tensor({3, 4}, rng);
  auto w = random_tensor({4, 2}, rng);
  auto loss = sum(matmul(x, w));
  backward(loss);
  const std::vector<double> once(x.grad().begin(), x.grad().end());
  backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * once[i]);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST(Autograd, LinearGradientClosedForm) {
  // d/dx sum(x W + b) = row sums of W for every row of x.
  auto x = Tensor64::from({2, 2}, {1, 2, 3, 4}, true);
  auto w = Tensor64::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  auto b = Tensor64::from({3}, {0, 0, 0}, true);
  backward(sum(linear(x, w, b)));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{6, 15, 6, 15}));
  EXPECT_EQ(std::vector<double>(b.grad().begin(), b.grad().end()), (std::vector<double>{2, 2, 2}));
  EXPECT_EQ(std::vector<double>(w.grad().begin(), w.grad().end()), (std::vector<double>{4, 4, 4, 6, 6, 6}));
}

TEST(Autograd, OpsDoNotMutateInputs) {
  std::mt19937_64 rng(8);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4}, rng);
  auto m = random_tensor({4, 3}, rng);
  const auto a0 = vals(a), b0 = vals(b), m0 = vals(m);
  std::mt19937_64 drop(1);
  auto y = add(sum(mul(softmax(add(a, b), 1), relu(sub(a, b)))), sum(matmul(layer_norm(a, b, b), m)));
  y = add(y, sum(dropout(tanh(concat(a, a, 0)), 0.3, true, drop)));
  y = add(y, mse_loss(slice(a, 0, 0, 1), reshape(b, {1, 4})));
  backward(y);
  EXPECT_EQ(vals(a), a0);
  EXPECT_EQ(vals(b), b0);
  EXPECT_EQ(vals(m), m0);
}

// Every differentiable op is checked against central differences on random
// inputs for a range of seeds.
class GradCheck : public ::testing::TestWithParam<int> {
 protected:
  std::mt19937_64 rng{static_cast<std::uint64_t>(GetParam()) * 7919 + 11};
};

#define EXPECT_GRAD_OK(result, tol) \
  EXPECT_LT((result).max_relative_error, (tol)) << (result).worst << " over " << (result).coordinates << " coords"

TEST_P(GradCheck, Matmul) {
  auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
  auto w = random_tensor({3, 5}, rng, false);
  auto r = grad_check([&] { return weighted(matmul(a, b), w); }, {a, b});
  EXPECT_GRAD_OK(r, 1e-6);
}

TEST_P(GradCheck, BroadcastElementwise) {
  auto a = random_tensor({3, 4}, rng), b = random_tensor({4}, rng);
  auto w = random_tensor({3, 4}, rng, false);
  EXPECT_GRAD_OK(grad_check([&] { return weighted(add(a, b), w); }, {a, b}), kGradTol);
  EXPECT_GRAD_OK(grad_check([&] { return weighted(sub(b, a), w); }, {a, b}), kGradTol);
  EXPECT_GRAD_OK(grad_check([&] { return weighted(mul(a, b), w); }, {a, b}), kGradTol);
  EXPECT_GRAD_OK(grad_check([&] { return weighted(scale(a, -1.7), w); }, {a}), kGradTol);
}

TEST_P(GradCheck, ShapeOps) {
  auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 2, 4}, rng);
  auto w1 = random_tensor({4, 2, 3}, rng, false);
  EXPECT_GRAD_OK(grad_check([&] { return weighted(transpose(a, {2, 0, 1}), w1); }, {a}), kGradTol);
  auto w2 = random_tensor({6, 4}, rng, false);
  EXPECT_GRAD_OK(grad_check([&] { return weighted(reshape(a, {6, 4}), w2); }, {a}), kGradTol);
  auto w3 = random_tensor({2, 5, 4}, rng, false);
  EXPECT_GRAD_OK(grad_check([&] { return weighted(concat(a, b, 1), w3); }, {a, b}), kGradTol);
  auto w4 = random_tensor({2, 2, 4}, rng, false);
  EXPECT_GRAD_OK(grad_check([&] { return weighted(slice(a, 1, 1, 3), w4); }, {a}), kGradTol);
}

TEST_P(GradCheck, Softmax) {
  auto a = random_tensor({3, 4, 5}, rng, true, 2.0);
  auto w = random_tensor({3, 4, 5}, rng, false);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    EXPECT_GRAD_OK(grad_check([&] { return weighted(softmax(a, axis), w); }, {a}), kGradTol);
  }
}

TEST_P(GradCheck, LayerNorm) {
  auto a = random_tensor({4, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
  auto w = random_tensor({4, 6}, rng, false);
  EXPECT_GRAD_OK(grad_check([&] { return weighted(layer_norm(a, g, b), w); }, {a, g, b}), kGradTol);
}

TEST_P(GradCheck, Activations) {
  auto a = random_tensor({5, 4}, rng);
  // Keep ReLU inputs away from the kink so the finite difference is smooth.
  for (double& v : a.mutable_values()) {
    if (std::abs(v) < 1e-3) v = 0.5;
  }
  auto w = random_tensor({5, 4}, rng, false);
  EXPECT_GRAD_OK(grad_check([&] { return weighted(relu(a), w); }, {a}), kGradTol);
  EXPECT_GRAD_OK(grad_check([&] { return weighted(tanh(a), w); }, {a}), kGradTol);
}

TEST_P(GradCheck, Dropout) {
  auto a = random_tensor({5, 4}, rng);
  auto w = random_tensor({5, 4}, rng, false);
  const std::uint64_t mask_seed = rng();
  auto r = grad_check(
      [&] {
        std::mt19937_64 drop(mask_seed);
        return weighted(dropout(a, 0.4, true, drop), w);
      },
      {a});
  EXPECT_GRAD_OK(r, kGradTol);
}

TEST_P(GradCheck, Losses) {
  auto p = random_tensor({3, 4}, rng), t = random_tensor({3, 4}, rng);
  EXPECT_GRAD_OK(grad_check([&] { return mae_loss(p, t); }, {p, t}), kGradTol);
  EXPECT_GRAD_OK(grad_check([&] { return mse_loss(p, t); }, {p, t}), kGradTol);
  EXPECT_GRAD_OK(grad_check([&] { return mean(p); }, {p}), kGradTol);
}

TEST_P(GradCheck, Composite) {
  auto x = random_tensor({4, 6}, rng), wq = random_tensor({6, 6}, rng, true, 0.4);
  auto g = random_tensor({6}, rng), b = random_tensor({6}, rng);
  auto w = random_tensor({4, 6}, rng, false);
  auto r = grad_check(
      [&] {
        auto q = matmul(x, wq);
        auto att = softmax(matmul(q, transpose(x)), 1);
        return weighted(layer_norm(add(x, matmul(att, x)), g, b), w);
      },
      {x, wq, g, b});
  EXPECT_GRAD_OK(r, kGradTol);
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradCheck, ::testing::Range(0, kSeeds));

TEST(Adam, SingleStepMovesByLearningRate) {
  auto p = Tensor64::from({1}, {0.0}, true);
  p.mutable_grad()[0] = 1.0;
  Adam<double> opt({p});
  opt.step();
  EXPECT_NEAR(p.values()[0], -1e-3 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(opt.state().t, 1u);
}

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
  auto p = Tensor64::from({2}, {0.3, -0.7}, true);
  p.mutable_grad();
  Adam<double> opt({p});
  opt.step();
  EXPECT_EQ(vals(p), (std::vector<double>{0.3, -0.7}));
}

TEST(Adam, StepWithoutGradientsIsAnError) {
  auto p = Tensor64::from({2}, {0.3, -0.7}, true);
  Adam<double> opt({p});
  EXPECT_THROW(opt.step(), UsageError);
}

TEST(Adam, MatchesHandRolledUpdateOverSeveralSteps) {
  std::mt19937_64 rng(10);
  auto p = random_tensor({5}, rng);
  std::vector<double> theta = vals(p), m(5, 0.0), v(5, 0.0);
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam<double> opt({p}, cfg);
  std::normal_distribution<double> n;
  for (int t = 1; t <= 6; ++t) {
    opt.zero_grad();
    auto g = p.mutable_grad();
    for (std::size_t i = 0; i < 5; ++i) {
      g[i] = n(rng);
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      theta[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    opt.step();
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p.values()[i], theta[i], 1e-14);
  }
}

TEST(Adam, MinimizesAQuadraticDeterministically) {
  auto run = [] {
    auto x = Tensor64::from({3}, {2.0, -1.0, 0.5}, true);
    auto target = Tensor64::from({3}, {0.1, 0.2, 0.3});
    AdamConfig cfg;
    cfg.lr = 0.05;
    Adam<double> opt({x}, cfg);
    for (int i = 0; i < 400; ++i) {
      opt.zero_grad();
      backward(mse_loss(x, target));
      opt.step();
    }
    return vals(x);
  };
  const auto a = run();
  EXPECT_EQ(a, run());
  EXPECT_NEAR(a[0], 0.1, 1e-2);
  EXPECT_NEAR(a[1], 0.2, 1e-2);
  EXPECT_NEAR(a[2], 0.3, 1e-2);
}

TEST(Checkpoint, Base64RoundTrip) {
  std::mt19937_64 rng(11);
  for (std::size_t len = 0; len < 40; ++len) {
    std::vector<std::uint8_t> bytes(len);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    EXPECT_EQ(recycle::detail::base64_decode(recycle::detail::base64_encode(bytes)), bytes);
  }
  EXPECT_EQ(recycle::detail::base64_encode({'M', 'a', 'n'}), "TWFu");
  EXPECT_EQ(recycle::detail::base64_encode({'M', 'a'}), "TWE=");
  EXPECT_THROW((void)recycle::detail::base64_decode("T?Fu"), InputError);
}

TEST(Checkpoint, SaveRestoreIsBitwise) {
  recycle::testing::TempDir dir("ckpt");
  std::mt19937_64 rng(12);
  NamedTensors<double> params{{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({7}, rng)}};
  params[0].second.mutable_values()[0] = 1.0 / 3.0;
  params[1].second.mutable_values()[0] = -0.0;
  const auto path = dir.path() / "ck.json";
  save_checkpoint(path, params, {{"d_model", 4}});
  NamedTensors<double> restored{{"a", Tensor64::zeros({3, 4}, true)}, {"b", Tensor64::zeros({7}, true)}};
  const auto doc = read_checkpoint(path);
  EXPECT_EQ(doc.at("config").at("d_model"), 4);
  restore_parameters(doc, restored);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto x = vals(params[i].second), y = vals(restored[i].second);
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      EXPECT_EQ(std::signbit(x[j]), std::signbit(y[j]));
      EXPECT_EQ(x[j], y[j]);
    }
  }
}

TEST(Checkpoint, RejectsMismatches) {
  recycle::testing::TempDir dir("ckpt");
  NamedTensors<double> params{{"a", Tensor64::zeros({2, 2}, true)}};
  const auto path = dir.path() / "ck.json";
  save_checkpoint(path, params, nlohmann::json::object());
  const auto doc = read_checkpoint(path);

  NamedTensors<double> renamed{{"z", Tensor64::zeros({2, 2}, true)}};
  EXPECT_THROW(restore_parameters(doc, renamed), InputError);
  NamedTensors<double> reshaped{{"a", Tensor64::zeros({4}, true)}};
  EXPECT_THROW(restore_parameters(doc, reshaped), InputError);
  NamedTensors<double> extra{{"a", Tensor64::zeros({2, 2}, true)}, {"b", Tensor64::zeros({1}, true)}};
  EXPECT_THROW(restore_parameters(doc, extra), InputError);
  NamedTensors<float> single{{"a", autograd::Tensor<float>::zeros({2, 2}, true)}};
  EXPECT_THROW(restore_parameters(doc, single), InputError);

  auto bumped = doc;
  bumped["format_version"] = 99;
  recycle::testing::write_text(dir.path() / "v.json", bumped.dump());
  EXPECT_THROW((void)read_checkpoint(dir.path() / "v.json"), InputError);
  recycle::testing::write_text(dir.path() / "bad.json", "{not json");
  EXPECT_THROW((void)read_checkpoint(dir.path() / "bad.json"), InputError);
  EXPECT_THROW((void)read_checkpoint(dir.path() / "missing.json"), InputError);
}

TEST(TensorFloat, SinglePrecisionOpsAgreeWithDouble) {
  std::mt19937_64 rng(13);
  auto a = random_tensor({3, 4}, rng, false), b = random_tensor({4, 2}, rng, false);
  auto af = autograd::Tensor<float>::from({3, 4}, std::vector<float>(a.values().begin(), a.values().end()), true);
  auto bf = autograd::Tensor<float>::from({4, 2}, std::vector<float>(b.values().begin(), b.values().end()));
  auto c = softmax(matmul(a, b), 1);
  auto cf = softmax(matmul(af, bf), 1);
  for (std::size_t i = 0; i < c.numel(); ++i) EXPECT_NEAR(cf.values()[i], c.values()[i], 1e-5);
  backward(sum(cf));
  EXPECT_TRUE(af.has_grad());
}

}  // namespace
