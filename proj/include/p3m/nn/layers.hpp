#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "p3m/nn/ops.hpp"

namespace p3m::nn {

using Rng = std::mt19937_64;

struct Mode {
  bool training = false;
  bool update_running_stats = true;
};

template <class T>
struct NamedVar {
  std::string name;
  Var<T> var;
};

// Owns every learnable parameter and persistent buffer of a model, in
// registration order. Names are dotted module paths.
template <class T>
class ParameterStore {
 public:
  Var<T> add_parameter(const std::string& name, Tensor<T> init) {
    Var<T> v(std::move(init), true);
    parameters_.push_back({name, v});
    return v;
  }
  Var<T> add_buffer(const std::string& name, Tensor<T> init) {
    Var<T> v(std::move(init), false);
    buffers_.push_back({name, v});
    return v;
  }

  const std::vector<NamedVar<T>>& parameters() const { return parameters_; }
  const std::vector<NamedVar<T>>& buffers() const { return buffers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters_) n += p.var.value().size();
    return n;
  }
  void zero_grad() {
    for (auto& p : parameters_) p.var.zero_grad();
  }
  Var<T> find(const std::string& name) const {
    for (const auto& p : parameters_)
      if (p.name == name) return p.var;
    for (const auto& b : buffers_)
      if (b.name == name) return b.var;
    throw StateError("no parameter named " + name);
  }

 private:
  std::vector<NamedVar<T>> parameters_;
  std::vector<NamedVar<T>> buffers_;
};

namespace init {

template <class T>
Tensor<T> kaiming(int cout, int cin, int k, Rng& rng) {
  Tensor<T> t(cout, cin, k, k);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (cin * k * k)));
  for (auto& v : t.span()) v = static_cast<T>(dist(rng));
  return t;
}

// Normal(0, std) truncated to +-2 std.
template <class T>
Tensor<T> trunc_normal(int n, int c, int h, int w, double std, Rng& rng) {
  Tensor<T> t(n, c, h, w);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.span()) {
    double z;
    do z = dist(rng);
    while (std::abs(z) > 2.0);
    v = static_cast<T>(z * std);
  }
  return t;
}

}  // namespace init

enum class WeightInit { kKaiming, kTruncNormal };

template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore<T>& store, const std::string& name, int cin, int cout, int k, bool bias, Rng& rng,
         WeightInit wi = WeightInit::kKaiming)
      : cin_(cin), cout_(cout), k_(k) {
    if (cin < 1 || cout < 1 || k < 1 || k % 2 == 0) throw ConfigError("conv " + name + ": bad geometry");
    weight_ = store.add_parameter(name + ".weight", wi == WeightInit::kKaiming
                                                        ? init::kaiming<T>(cout, cin, k, rng)
                                                        : init::trunc_normal<T>(cout, cin, k, k, 0.02, rng));
    if (bias) bias_ = store.add_parameter(name + ".bias", Tensor<T>(1, cout, 1, 1));
  }

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight_, bias_); }

  Var<T>& weight() { return weight_; }
  Var<T>& bias() { return bias_; }
  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }

 private:
  int cin_ = 0, cout_ = 0, k_ = 0;
  Var<T> weight_, bias_;
};

template <class T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParameterStore<T>& store, const std::string& name, int channels) {
    gamma_ = store.add_parameter(name + ".gamma", Tensor<T>(1, channels, 1, 1, T(1)));
    beta_ = store.add_parameter(name + ".beta", Tensor<T>(1, channels, 1, 1));
    mean_ = store.add_buffer(name + ".running_mean", Tensor<T>(1, channels, 1, 1));
    var_ = store.add_buffer(name + ".running_var", Tensor<T>(1, channels, 1, 1, T(1)));
  }

  Var<T> operator()(const Var<T>& x, const Mode& mode) const {
    return batch_norm(x, gamma_, beta_, mean_.node()->value, var_.node()->value, mode.training,
                      mode.update_running_stats);
  }

  Var<T>& gamma() { return gamma_; }
  Var<T>& beta() { return beta_; }
  Var<T>& running_mean() { return mean_; }
  Var<T>& running_var() { return var_; }

 private:
  Var<T> gamma_, beta_, mean_, var_;
};

template <class T>
class LayerNorm2d {
 public:
  LayerNorm2d() = default;
  LayerNorm2d(ParameterStore<T>& store, const std::string& name, int channels) {
    gamma_ = store.add_parameter(name + ".gamma", Tensor<T>(1, channels, 1, 1, T(1)));
    beta_ = store.add_parameter(name + ".beta", Tensor<T>(1, channels, 1, 1));
  }
  Var<T> operator()(const Var<T>& x) const { return layer_norm_channels(x, gamma_, beta_); }

  Var<T>& gamma() { return gamma_; }
  Var<T>& beta() { return beta_; }

 private:
  Var<T> gamma_, beta_;
};

// conv3x3 (no bias) -> BN -> ReLU, the workhorse of decoders and integration blocks.
template <class T>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(ParameterStore<T>& store, const std::string& name, int cin, int cout, Rng& rng, int k = 3)
      : conv_(store, name + ".conv", cin, cout, k, false, rng), bn_(store, name + ".bn", cout) {}

  Var<T> operator()(const Var<T>& x, const Mode& mode) const { return relu(bn_(conv_(x), mode)); }

  Conv2d<T>& conv() { return conv_; }
  BatchNorm2d<T>& bn() { return bn_; }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
};

// Sets a parameter tensor to zero in place.
template <class T>
void zero_fill(Var<T>& v) {
  v.mutable_value().fill(T(0));
}

}  // namespace p3m::nn
