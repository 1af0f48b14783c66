#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <vector>

#include "recycle/errors.hpp"
#include "recycle/tensor.hpp"

namespace recycle::autograd {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <std::floating_point T>
struct AdamState {
  std::vector<std::vector<T>> m;  // first moments, one per parameter
  std::vector<std::vector<T>> v;  // second moments
  std::size_t t = 0;              // completed steps
};

// Bias-corrected Adam with a constant learning rate.
template <std::floating_point T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig config = {}) : params_(std::move(params)), config_(config) {
    for (const auto& p : params_) {
      state_.m.emplace_back(p.numel(), T(0));
      state_.v.emplace_back(p.numel(), T(0));
    }
  }

  // Parameters that received no gradient since the last zero_grad() are left
  // untouched, moments included.
  void step() {
    const bool any = std::any_of(params_.begin(), params_.end(), [](const Tensor<T>& p) { return p.has_grad(); });
    if (!any) throw UsageError("adam step: no parameter has a populated gradient");
    ++state_.t;
    const double t = static_cast<double>(state_.t);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) continue;
      auto theta = p.mutable_values();
      auto g = p.grad();
      auto& m = state_.m[i];
      auto& v = state_.v[i];
      for (std::size_t j = 0; j < theta.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        const double m_hat = static_cast<double>(m[j]) / c1;
        const double v_hat = static_cast<double>(v[j]) / c2;
        theta[j] -= static_cast<T>(config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps));
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  const AdamState<T>& state() const noexcept { return state_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamConfig config_;
  AdamState<T> state_;
};

}  // namespace recycle::autograd
