#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mapspell/error.hpp"
#include "mapspell/tensor.hpp"

namespace mapspell {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Only the tensors passed in are ever updated,
/// which is how frozen parameters stay untouched.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.lr > 0.0)) throw ConfigError("adam: lr must be > 0");
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  /// Allocates zero grads for every parameter, reached by backward or not.
  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    for (const auto& p : params_)
      if (!p.has_grad()) throw ContractError("adam: parameter without grad; call zero_grad before backward");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& w = params_[k].data();
      const auto& g = params_[k].grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        w[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
      }
    }
  }

  std::int64_t t() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace mapspell
