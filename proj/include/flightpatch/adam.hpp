#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "flightpatch/errors.hpp"
#include "flightpatch/layers.hpp"

namespace flightpatch {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers are created lazily on the first
/// step and are matched to parameters by position in the store.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {
    if (!(options_.lr > 0.0)) throw ConfigError("Adam learning rate must be positive");
  }

  void step(ParameterStore& store) {
    auto& params = store.entries();
    if (first_moment_.empty()) {
      for (const auto& p : params) {
        first_moment_.emplace_back(p.value.numel(), 0.0);
        second_moment_.emplace_back(p.value.numel(), 0.0);
      }
    }
    if (first_moment_.size() != params.size()) throw UsageError("parameter set changed between Adam steps");
    for (const auto& p : params) {
      if (!p.value.has_grad()) throw UsageError("parameter '" + p.name + "' has no gradient");
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto value = params[k].value.mutable_data();
      auto grad = params[k].value.grad();
      auto& m = first_moment_[k];
      auto& v = second_moment_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
        v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        value[i] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.epsilon);
      }
    }
  }

  std::uint64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<std::vector<double>>& first_moment() const { return first_moment_; }
  const std::vector<std::vector<double>>& second_moment() const { return second_moment_; }

 private:
  AdamOptions options_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
};

}  // namespace flightpatch
