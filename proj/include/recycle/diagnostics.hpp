#pragma once

// Numerical probes of the "scalar breakdown" of dot-product attention: with
// one feature per token the pre-softmax attention matrix collapses towards
// the outer product x x^T (plus terms that never couple x_i with x_j), so it
// cannot encode pairwise similarity.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "recycle/errors.hpp"

namespace recycle::diagnostics {

enum class Activation { Linear, Tanh, Relu };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
  }
  return "?";
}

inline Activation parse_activation(std::string_view name) {
  if (name == "linear" || name == "identity") return Activation::Linear;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

inline double activate(Activation a, double v) {
  switch (a) {
    case Activation::Linear: return v;
    case Activation::Tanh: return std::tanh(v);
    case Activation::Relu: return v > 0.0 ? v : 0.0;
  }
  return v;
}

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A[i][j] = sigma(Q x_i + b_Q) . sigma(K x_j + b_K) / sqrt(d_k) for scalar
// tokens x_i; Q, K, b_Q, b_K are d_k-vectors.
inline Matrix attention_prelogits(const Vector& x, const Vector& query, const Vector& key,
                                  const Vector& query_bias, const Vector& key_bias, Activation act) {
  const Eigen::Index dk = query.size();
  if (key.size() != dk || query_bias.size() != dk || key_bias.size() != dk) {
    throw DimensionError("attention_prelogits: query/key/bias lengths differ");
  }
  const Eigen::Index S = x.size();
  Matrix q(S, dk), k(S, dk);
  for (Eigen::Index i = 0; i < S; ++i) {
    for (Eigen::Index c = 0; c < dk; ++c) {
      q(i, c) = activate(act, query(c) * x(i) + query_bias(c));
      k(i, c) = activate(act, key(c) * x(i) + key_bias(c));
    }
  }
  return q * k.transpose() / std::sqrt(static_cast<double>(dk));
}

// Multivariate tokens: rows of `tokens` are D-dimensional, projections are
// d_k x D matrices.
inline Matrix attention_prelogits(const Matrix& tokens, const Matrix& query, const Matrix& key, Activation act) {
  if (query.cols() != tokens.cols() || key.cols() != tokens.cols() || query.rows() != key.rows()) {
    throw DimensionError("attention_prelogits: projection shapes do not match token width");
  }
  const Matrix q = (tokens * query.transpose()).unaryExpr([act](double v) { return activate(act, v); });
  const Matrix k = (tokens * key.transpose()).unaryExpr([act](double v) { return activate(act, v); });
  return q * k.transpose() / std::sqrt(static_cast<double>(query.rows()));
}

// Relative Frobenius distance of A from its best rank-1 approximation,
// sqrt(sum_{i>=2} s_i^2) / sqrt(sum_i s_i^2).
inline double rank1_deviation(const Matrix& a) {
  const Eigen::JacobiSVD<Matrix> svd(a);
  const Vector s = svd.singularValues();
  const double total = s.squaredNorm();
  if (!(total > 0.0)) throw NumericError("rank1_deviation: matrix is zero");
  const double tail = s.size() > 1 ? s.tail(s.size() - 1).squaredNorm() : 0.0;
  return std::min(1.0, std::sqrt(tail / total));
}

struct BiasFit {
  std::array<double, 4> coefficients{};  // x x^T, x 1^T, 1 x^T, 1 1^T
  double relative_residual = 0.0;
};

// Least-squares fit A ~ c1 x x^T + c2 x 1^T + c3 1 x^T + c4 1 1^T.
inline BiasFit bias_term_fit(const Matrix& a, const Vector& x) {
  const Eigen::Index S = x.size();
  if (a.rows() != S || a.cols() != S) throw DimensionError("bias_term_fit: A must be S x S for |x| = S");
  std::set<double> distinct(x.data(), x.data() + S);
  if (distinct.size() < 3) {
    throw NumericError("bias_term_fit: need at least 3 distinct token values, got " +
                       std::to_string(distinct.size()));
  }
  Matrix design(S * S, 4);
  Vector target(S * S);
  for (Eigen::Index i = 0; i < S; ++i) {
    for (Eigen::Index j = 0; j < S; ++j) {
      const Eigen::Index row = i * S + j;
      design(row, 0) = x(i) * x(j);
      design(row, 1) = x(i);
      design(row, 2) = x(j);
      design(row, 3) = 1.0;
      target(row) = a(i, j);
    }
  }
  const Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (qr.rank() < 4) throw NumericError("bias_term_fit: design matrix is rank deficient");
  const Vector c = qr.solve(target);
  BiasFit fit;
  for (int i = 0; i < 4; ++i) fit.coefficients[static_cast<std::size_t>(i)] = c(i);
  const double norm = a.norm();
  if (!(norm > 0.0)) throw NumericError("bias_term_fit: matrix is zero");
  fit.relative_residual = (design * c - target).norm() / norm;
  return fit;
}

struct QuadrantReport {
  // [sign(x_i) >= 0 ? 0 : 1][sign(x_j) >= 0 ? 0 : 1]; zero tokens are skipped.
  double constant[2][2]{};
  double spread[2][2]{};    // max - min of A_ij / (x_i x_j) within the quadrant
  std::size_t count[2][2]{};
};

// ReLU with zero biases: A_ij / (x_i x_j) is constant within each sign quadrant.
inline QuadrantReport relu_quadrant_analysis(const Vector& x, const Vector& query, const Vector& key) {
  const bool has_pos = (x.array() > 0.0).any();
  const bool has_neg = (x.array() < 0.0).any();
  if (!(has_pos && has_neg)) {
    throw InputError("relu_quadrant_analysis: tokens must contain both signs");
  }
  const Vector zero = Vector::Zero(query.size());
  const Matrix a = attention_prelogits(x, query, key, zero, zero, Activation::Relu);
  QuadrantReport report;
  double lo[2][2], hi[2][2];
  for (int p = 0; p < 2; ++p) {
    for (int q = 0; q < 2; ++q) {
      lo[p][q] = std::numeric_limits<double>::infinity();
      hi[p][q] = -std::numeric_limits<double>::infinity();
    }
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      if (x(i) == 0.0 || x(j) == 0.0) continue;
      const int p = x(i) > 0.0 ? 0 : 1;
      const int q = x(j) > 0.0 ? 0 : 1;
      const double ratio = a(i, j) / (x(i) * x(j));
      lo[p][q] = std::min(lo[p][q], ratio);
      hi[p][q] = std::max(hi[p][q], ratio);
      report.constant[p][q] += ratio;
      ++report.count[p][q];
    }
  }
  for (int p = 0; p < 2; ++p) {
    for (int q = 0; q < 2; ++q) {
      if (report.count[p][q] == 0) continue;
      report.constant[p][q] /= static_cast<double>(report.count[p][q]);
      report.spread[p][q] = hi[p][q] - lo[p][q];
    }
  }
  return report;
}

// One cell of the breakdown experiment.
struct BreakdownReport {
  Activation activation = Activation::Linear;
  double scale = 0.0;
  std::uint64_t seed = 0;
  double rank1_deviation = 0.0;    // zero biases
  double bias_fit_residual = 0.0;  // small random biases
};

struct ExperimentShape {
  std::size_t tokens = 24;    // S
  std::size_t key_dim = 16;   // d_k
  double bias_scale = 0.1;    // std-dev of the random biases in the fit experiment
};

// Draws tokens x ~ U(-scale, scale), projections ~ N(0, 1) and biases
// ~ N(0, bias_scale^2), all from `seed`.
inline BreakdownReport run_breakdown(Activation act, double scale, std::uint64_t seed,
                                     const ExperimentShape& shape = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-scale, scale);
  const auto S = static_cast<Eigen::Index>(shape.tokens);
  const auto dk = static_cast<Eigen::Index>(shape.key_dim);
  Vector x(S), q(dk), k(dk), bq(dk), bk(dk);
  for (Eigen::Index i = 0; i < S; ++i) x(i) = uniform(rng);
  for (Eigen::Index i = 0; i < dk; ++i) q(i) = normal(rng);
  for (Eigen::Index i = 0; i < dk; ++i) k(i) = normal(rng);
  for (Eigen::Index i = 0; i < dk; ++i) bq(i) = shape.bias_scale * normal(rng);
  for (Eigen::Index i = 0; i < dk; ++i) bk(i) = shape.bias_scale * normal(rng);
  const Vector zero = Vector::Zero(dk);

  BreakdownReport r;
  r.activation = act;
  r.scale = scale;
  r.seed = seed;
  r.rank1_deviation = rank1_deviation(attention_prelogits(x, q, k, zero, zero, act));
  r.bias_fit_residual = bias_term_fit(attention_prelogits(x, q, k, bq, bk, act), x).relative_residual;
  return r;
}

// Same experiment with D-dimensional tokens (rank-1 deviation only).
inline double run_multivariate_breakdown(Activation act, double scale, std::size_t width, std::uint64_t seed,
                                         const ExperimentShape& shape = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-scale, scale);
  const auto S = static_cast<Eigen::Index>(shape.tokens);
  const auto dk = static_cast<Eigen::Index>(shape.key_dim);
  const auto D = static_cast<Eigen::Index>(width);
  Matrix tokens(S, D), q(dk, D), k(dk, D);
  for (Eigen::Index i = 0; i < tokens.size(); ++i) tokens.data()[i] = uniform(rng);
  for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = normal(rng);
  return rank1_deviation(attention_prelogits(tokens, q, k, act));
}

struct BreakdownGrid {
  std::vector<Activation> activations{Activation::Linear, Activation::Tanh};
  std::vector<double> scales{0.01, 0.1, 1.0, 10.0};
  std::size_t seeds = 20;
  std::uint64_t base_seed = 0;
};

// Cells in activation-major, then scale, then seed order.
inline std::vector<BreakdownReport> run_grid(const BreakdownGrid& grid, const ExperimentShape& shape = {}) {
  std::vector<BreakdownReport> out;
  for (Activation act : grid.activations) {
    for (double scale : grid.scales) {
      for (std::size_t s = 0; s < grid.seeds; ++s) out.push_back(run_breakdown(act, scale, grid.base_seed + s, shape));
    }
  }
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw InputError("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace recycle::diagnostics
