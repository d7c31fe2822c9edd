#pragma once

#include <cmath>
#include <vector>

#include "p3m/nn/layers.hpp"

namespace p3m {

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

// Adam over every parameter of a store; moments are kept in registration order.
template <class T>
class Adam {
 public:
  Adam(nn::ParameterStore<T>& store, AdamConfig cfg) : store_(&store), cfg_(cfg) {
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    for (const auto& p : store.parameters()) {
      m_.push_back(nn::Tensor<T>::zeros_like(p.var.value()));
      v_.push_back(nn::Tensor<T>::zeros_like(p.var.value()));
    }
  }

  void step() {
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_)), c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const auto& params = store_->parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto var = params[k].var;
      if (!var.has_grad()) continue;
      auto& w = var.mutable_value();
      const auto& g = var.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        m[i] = static_cast<T>(b1 * m[i] + (1 - b1) * gi);
        v[i] = static_cast<T>(b2 * v[i] + (1 - b2) * gi * gi);
        const double mh = m[i] / c1, vh = v[i] / c2;
        w[i] = static_cast<T>(w[i] - cfg_.learning_rate * mh / (std::sqrt(vh) + cfg_.eps));
      }
    }
  }

  long long steps() const { return t_; }
  void set_steps(long long t) { t_ = t; }
  std::vector<nn::Tensor<T>>& first_moments() { return m_; }
  std::vector<nn::Tensor<T>>& second_moments() { return v_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  nn::ParameterStore<T>* store_;
  AdamConfig cfg_;
  std::vector<nn::Tensor<T>> m_, v_;
  long long t_ = 0;
};

}  // namespace p3m
