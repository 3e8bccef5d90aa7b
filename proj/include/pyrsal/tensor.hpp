#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pyrsal {

// Dense NCHW tensor. Saliency/GT maps are (N,1,H,W); single images (1,C,H,W).
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0)) : n(n_), c(c_), h(h_), w(w_) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
      throw std::invalid_argument("Tensor: negative dimension");
    data.assign(std::size_t(n_) * c_ * h_ * w_, fill);
  }

  static Tensor map2d(int h, int w, T fill = T(0)) { return Tensor(1, 1, h, w, fill); }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  std::size_t idx(int in, int ic, int iy, int ix) const {
    return ((std::size_t(in) * c + ic) * h + iy) * w + ix;
  }
  T& at(int in, int ic, int iy, int ix) { return data[idx(in, ic, iy, ix)]; }
  const T& at(int in, int ic, int iy, int ix) const { return data[idx(in, ic, iy, ix)]; }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  std::string shape_str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
           "," + std::to_string(w) + ")";
  }

  void fill(T v) { data.assign(data.size(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(n, c, h, w);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* who) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
}

}  // namespace pyrsal
