#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pyrsal/autograd.hpp"
#include "pyrsal/nn_ops.hpp"
#include "pyrsal/rng.hpp"

namespace pyrsal {

// flat registry of named parameters and running-stat buffers, rebuilt on
// demand so layers can live by value inside their owners
template <typename T>
struct ParamStore {
  std::vector<std::pair<std::string, Var<T>>> params;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers;

  void add_param(const std::string& name, const Var<T>& v) {
    params.emplace_back(name, v);
  }
  void add_buffer(const std::string& name, Tensor<T>* t) {
    buffers.emplace_back(name, t);
  }
  Var<T> find(const std::string& name) const {
    for (const auto& kv : params)
      if (kv.first == name) return kv.second;
    return nullptr;
  }
};

template <typename T>
Var<T> he_weight(int cout, int cin, int k, Pcg32& rng) {
  Tensor<T> w(cout, cin, k, k);
  double sd = std::sqrt(2.0 / (static_cast<double>(cin) * k * k));
  for (auto& v : w.data) v = static_cast<T>(rng.normal() * sd);
  return make_var(std::move(w), true);
}

template <typename T>
struct Conv2d {
  Var<T> weight, bias;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(int cin, int cout, int k, int stride_, int pad_, bool with_bias,
         Pcg32& rng)
      : weight(he_weight<T>(cout, cin, k, rng)), stride(stride_), pad(pad_) {
    if (with_bias) bias = make_var(Tensor<T>(1, cout, 1, 1, T(0)), true);
  }
  Var<T> operator()(const Var<T>& x) const {
    return ag::conv2d(x, weight, bias, stride, pad);
  }
  void collect(const std::string& prefix, ParamStore<T>& st) {
    st.add_param(prefix + ".weight", weight);
    if (bias) st.add_param(prefix + ".bias", bias);
  }
};

template <typename T>
struct BatchNorm2d {
  Var<T> gamma, beta;
  Tensor<T> running_mean, running_var;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int c)
      : gamma(make_var(Tensor<T>(1, c, 1, 1, T(1)), true)),
        beta(make_var(Tensor<T>(1, c, 1, 1, T(0)), true)),
        running_mean(1, c, 1, 1, T(0)),
        running_var(1, c, 1, 1, T(1)) {}
  Var<T> operator()(const Var<T>& x, bool training) {
    return ag::batchnorm(x, gamma, beta, &running_mean, &running_var,
                         training);
  }
  void collect(const std::string& prefix, ParamStore<T>& st) {
    st.add_param(prefix + ".gamma", gamma);
    st.add_param(prefix + ".beta", beta);
    st.add_buffer(prefix + ".running_mean", &running_mean);
    st.add_buffer(prefix + ".running_var", &running_var);
  }
};

// conv (no bias) -> batch norm -> relu
template <typename T>
struct ConvBlock {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;

  ConvBlock() = default;
  ConvBlock(int cin, int cout, int k, int stride, int pad, Pcg32& rng)
      : conv(cin, cout, k, stride, pad, false, rng), bn(cout) {}
  Var<T> operator()(const Var<T>& x, bool training) {
    return ag::relu(bn(conv(x), training));
  }
  void collect(const std::string& prefix, ParamStore<T>& st) {
    conv.collect(prefix + ".conv", st);
    bn.collect(prefix + ".bn", st);
  }
};

}  // namespace pyrsal
