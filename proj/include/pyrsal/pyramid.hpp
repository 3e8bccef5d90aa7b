#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pyrsal/nn_ops.hpp"

namespace pyrsal {

// Separable Gaussian kernel for the pyramid operators. The 1-D taps are
// sampled from exp(-m^2 / 2 sigma^2) and then rescaled so that the even-offset
// taps sum to exactly 1/2 and the odd-offset taps sum to exactly 1/2. That
// equal-contribution balance is what makes the x4-gain zero-interleave
// upsampler map constant inputs to the same constant (each output pixel sees
// one parity class per axis), and it keeps the downsampler normalized. A
// plainly normalized Gaussian would leave a parity ripple of a few percent.
struct GaussianKernel2D {
  int size = 0;
  double sigma = 0.0;
  std::vector<double> taps;    // 1-D, length size, sums to 1
  Tensor<double> weights;      // 2-D outer product, (1,1,size,size)
};

inline GaussianKernel2D make_gaussian_kernel(int size, double sigma) {
  if (size < 3 || size % 2 == 0)
    throw std::invalid_argument("make_gaussian_kernel: size must be odd and >= 3");
  if (!(sigma > 0.0))
    throw std::invalid_argument("make_gaussian_kernel: sigma must be positive");
  GaussianKernel2D k;
  k.size = size;
  k.sigma = sigma;
  k.taps.resize(size);
  int c = size / 2;
  double se = 0.0, so = 0.0;
  for (int t = 0; t < size; ++t) {
    int m = t - c;
    double v = std::exp(-0.5 * double(m) * double(m) / (sigma * sigma));
    k.taps[t] = v;
    (m % 2 == 0 ? se : so) += v;
  }
  for (int t = 0; t < size; ++t) {
    int m = t - c;
    k.taps[t] *= 0.5 / (m % 2 == 0 ? se : so);
  }
  k.weights = Tensor<double>(1, 1, size, size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) k.weights.at(0, 0, i, j) = k.taps[i] * k.taps[j];
  return k;
}

template <typename T>
std::vector<T> kernel_taps(const GaussianKernel2D& k, T gain = T(1)) {
  if (k.size < 3 || k.taps.size() != std::size_t(k.size))
    throw std::invalid_argument("kernel_taps: kernel is uninitialized");
  std::vector<T> t(k.taps.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(k.taps[i]) * gain;
  return t;
}

namespace ag {

// Gaussian-filter then keep even indices; output ceil-halved. Reflect padding.
template <typename T>
Var<T> reduce_op(Var<T> x, const GaussianKernel2D& k) {
  if (x->value.h < 2 || x->value.w < 2)
    throw std::invalid_argument("reduce: input dimensions must be >= 2");
  int r = k.size / 2;
  auto taps = kernel_taps<T>(k);
  return decimate2(conv1d_w(conv1d_h(reflect_pad2d(x, r), taps), taps));
}

// Zero-interleave upsample then filter with x4 gain (x2 per separable pass).
// Output exactly doubles.
template <typename T>
Var<T> expand_op(Var<T> x, const GaussianKernel2D& k) {
  int r = k.size / 2;
  auto taps = kernel_taps<T>(k, T(2));
  return conv1d_w(conv1d_h(reflect_pad2d(interleave2(x), r), taps), taps);
}

}  // namespace ag

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, const GaussianKernel2D& k) {
  NoGradGuard ng;
  return ag::reduce_op(make_var(x), k)->value;
}

template <typename T>
Tensor<T> expand(const Tensor<T>& x, const GaussianKernel2D& k) {
  NoGradGuard ng;
  return ag::expand_op(make_var(x), k)->value;
}

// Detail maps finest-first plus the coarsest Gaussian-reduced base.
template <typename T>
struct LaplacianDecomposition {
  std::vector<Tensor<T>> levels;
  Tensor<T> base;
};

template <typename T>
LaplacianDecomposition<T> decompose(const Tensor<T>& x, int levels,
                                    const GaussianKernel2D& k) {
  if (levels < 1) throw std::invalid_argument("decompose: levels must be >= 1");
  {
    int h = x.h, w = x.w;
    for (int j = 0; j < levels; ++j) {
      if (h < 2 || w < 2)
        throw std::invalid_argument("decompose: too many levels for input size");
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
  }
  NoGradGuard ng;
  LaplacianDecomposition<T> d;
  Tensor<T> cur = x;
  for (int j = 0; j < levels; ++j) {
    Tensor<T> red = reduce(cur, k);
    auto up = ag::expand_op(make_var(red), k);
    up = ag::crop2d(up, cur.h, cur.w);
    Tensor<T> detail(cur.n, cur.c, cur.h, cur.w);
    for (std::size_t i = 0; i < detail.size(); ++i)
      detail.data[i] = cur.data[i] - up->value.data[i];
    d.levels.push_back(std::move(detail));
    cur = std::move(red);
  }
  d.base = std::move(cur);
  return d;
}

template <typename T>
Tensor<T> reconstruct(const LaplacianDecomposition<T>& d, const GaussianKernel2D& k) {
  NoGradGuard ng;
  Tensor<T> cur = d.base;
  for (int j = int(d.levels.size()) - 1; j >= 0; --j) {
    const Tensor<T>& detail = d.levels[std::size_t(j)];
    auto up = ag::expand_op(make_var(cur), k);
    int dh = up->value.h - detail.h, dw = up->value.w - detail.w;
    if (dh < 0 || dh > 1 || dw < 0 || dw > 1)
      throw std::invalid_argument("reconstruct: level dimensions inconsistent");
    up = ag::crop2d(up, detail.h, detail.w);
    cur = Tensor<T>(detail.n, detail.c, detail.h, detail.w);
    for (std::size_t i = 0; i < cur.size(); ++i)
      cur.data[i] = up->value.data[i] + detail.data[i];
  }
  return cur;
}

}  // namespace pyrsal
