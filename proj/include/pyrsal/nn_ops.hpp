#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "pyrsal/autograd.hpp"

namespace pyrsal {

// reflect-101 fold (edge pixel not repeated), multi-fold for tiny sizes
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// column buffer rows are (ci*kh + ky)*kw + kx, columns are (oy - r0)*Wo + ox
template <typename T>
void im2col_tile(const Tensor<T>& x, int in, int kh, int kw, int stride, int pad,
                 int Wo, int r0, int r1, T* col) {
  const int H = x.h, W = x.w, Cin = x.c;
  const int tile = (r1 - r0) * Wo;
  for (int ci = 0; ci < Cin; ++ci) {
    const T* xc = x.ptr() + x.idx(in, ci, 0, 0);
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col + (std::size_t(ci) * kh * kw + ky * kw + kx) * tile;
        // valid ox range for this kx
        int lo = std::max(0, (pad - kx + stride - 1) / stride);
        int hi = std::min(Wo, (W - kx + pad + stride - 1) / stride);
        if (hi < lo) hi = lo;
        for (int oy = r0; oy < r1; ++oy) {
          T* dst = row + std::size_t(oy - r0) * Wo;
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) {
            std::memset(dst, 0, sizeof(T) * Wo);
            continue;
          }
          const T* src = xc + std::size_t(iy) * W;
          for (int ox = 0; ox < lo; ++ox) dst[ox] = T(0);
          if (stride == 1) {
            if (hi > lo) std::memcpy(dst + lo, src + lo + kx - pad, sizeof(T) * (hi - lo));
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride + kx - pad];
          }
          for (int ox = hi; ox < Wo; ++ox) dst[ox] = T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im_tile(const T* col, int in, int kh, int kw, int stride, int pad, int Wo,
                 int r0, int r1, Tensor<T>& dx) {
  const int H = dx.h, W = dx.w, Cin = dx.c;
  const int tile = (r1 - r0) * Wo;
  for (int ci = 0; ci < Cin; ++ci) {
    T* xc = dx.ptr() + dx.idx(in, ci, 0, 0);
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col + (std::size_t(ci) * kh * kw + ky * kw + kx) * tile;
        int lo = std::max(0, (pad - kx + stride - 1) / stride);
        int hi = std::min(Wo, (W - kx + pad + stride - 1) / stride);
        if (hi < lo) hi = lo;
        for (int oy = r0; oy < r1; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          const T* src = row + std::size_t(oy - r0) * Wo;
          T* dst = xc + std::size_t(iy) * W;
          for (int ox = lo; ox < hi; ++ox) dst[ox * stride + kx - pad] += src[ox];
        }
      }
    }
  }
}

// column-buffer cap; tests shrink it to force the multi-tile path
inline std::size_t& conv_col_budget() {
  static std::size_t bytes = std::size_t(48) << 20;
  return bytes;
}

inline int conv_tile_rows(std::size_t K, int Wo, std::size_t elem, int Ho) {
  std::size_t per_row = K * std::size_t(Wo) * elem;
  int rows = per_row == 0
                 ? Ho
                 : int(std::max<std::size_t>(1, conv_col_budget() / per_row));
  return std::min(rows, Ho);
}

template <typename T>
void bilinear_taps(int out, int in, std::vector<int>& i0, std::vector<int>& i1,
                   std::vector<T>& f) {
  i0.resize(out);
  i1.resize(out);
  f.resize(out);
  double scale = double(in) / double(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    int lo = int(std::floor(src));
    double fr = src - lo;
    int a = std::min(in - 1, std::max(0, lo));
    int b = std::min(in - 1, std::max(0, lo + 1));
    i0[o] = a;
    i1[o] = b;
    f[o] = T(fr);
  }
}

}  // namespace detail

// plain (no-tape) bilinear resize, align-corners=false
template <typename T>
Tensor<T> bilinear_plain(const Tensor<T>& x, int Ho, int Wo) {
  if (Ho < 1 || Wo < 1) throw std::invalid_argument("bilinear: bad target");
  if (x.h == Ho && x.w == Wo) return x;
  Tensor<T> y(x.n, x.c, Ho, Wo);
  std::vector<int> y0, y1, x0, x1;
  std::vector<T> fy, fx;
  detail::bilinear_taps<T>(Ho, x.h, y0, y1, fy);
  detail::bilinear_taps<T>(Wo, x.w, x0, x1, fx);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c) {
      const T* src = x.ptr() + x.idx(n, c, 0, 0);
      T* dst = y.ptr() + y.idx(n, c, 0, 0);
      for (int oy = 0; oy < Ho; ++oy) {
        const T* r0 = src + std::size_t(y0[oy]) * x.w;
        const T* r1 = src + std::size_t(y1[oy]) * x.w;
        T wy = fy[oy];
        for (int ox = 0; ox < Wo; ++ox) {
          T a = r0[x0[ox]] * (T(1) - fx[ox]) + r0[x1[ox]] * fx[ox];
          T b = r1[x0[ox]] * (T(1) - fx[ox]) + r1[x1[ox]] * fx[ox];
          dst[std::size_t(oy) * Wo + ox] = a * (T(1) - wy) + b * wy;
        }
      }
    }
  return y;
}

namespace ag {

// 2-D convolution (zero padding), im2col + GEMM, row-tiled.
// weight (Cout, Cin, kh, kw); bias (1, Cout, 1, 1) or null.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, int stride, int pad) {
  const int N = x->value.n, Cin = x->value.c, H = x->value.h, W = x->value.w;
  const int Cout = weight->value.n, kh = weight->value.h, kw = weight->value.w;
  if (weight->value.c != Cin) throw std::invalid_argument("conv2d: channel mismatch");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho < 1 || Wo < 1) throw std::invalid_argument("conv2d: output collapses");
  const std::size_t K = std::size_t(Cin) * kh * kw;

  Tensor<T> y(N, Cout, Ho, Wo);
  {
    const int tile_rows = detail::conv_tile_rows(K, Wo, sizeof(T), Ho);
    std::vector<T> col(K * std::size_t(tile_rows) * Wo);
    detail::CMapMat<T> Wm(weight->value.ptr(), Cout, Eigen::Index(K));
    for (int n = 0; n < N; ++n) {
      for (int r0 = 0; r0 < Ho; r0 += tile_rows) {
        int r1 = std::min(Ho, r0 + tile_rows);
        int M = (r1 - r0) * Wo;
        detail::im2col_tile(x->value, n, kh, kw, stride, pad, Wo, r0, r1, col.data());
        detail::CMapMat<T> Cm(col.data(), Eigen::Index(K), M);
        // y rows are strided by Ho*Wo per channel, not M, so emit per channel
        for (int co = 0; co < Cout; ++co) {
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> yrow(
              y.ptr() + y.idx(n, co, 0, 0) + std::size_t(r0) * Wo, M);
          yrow.noalias() = Wm.row(co) * Cm;
        }
      }
      if (bias) {
        for (int co = 0; co < Cout; ++co) {
          T b = bias->value.data[co];
          T* yp = y.ptr() + y.idx(n, co, 0, 0);
          for (int i = 0; i < Ho * Wo; ++i) yp[i] += b;
        }
      }
    }
  }

  std::vector<Var<T>> parents = bias ? std::vector<Var<T>>{x, weight, bias}
                                     : std::vector<Var<T>>{x, weight};
  return attach<T>(std::move(y), std::move(parents),
                   [x, weight, bias, stride, pad, Ho, Wo, K](Node<T>& o) {
    const int N = x->value.n, Cin = x->value.c;
    const int Cout = weight->value.n, kh = weight->value.h, kw = weight->value.w;
    const int tile_rows = detail::conv_tile_rows(K, Wo, sizeof(T), Ho);
    std::vector<T> col(K * std::size_t(tile_rows) * Wo);
    std::vector<T> dcol;
    if (x->requires_grad) dcol.resize(col.size());
    detail::CMapMat<T> Wm(weight->value.ptr(), Cout, Eigen::Index(K));
    for (int n = 0; n < N; ++n) {
      for (int r0 = 0; r0 < Ho; r0 += tile_rows) {
        int r1 = std::min(Ho, r0 + tile_rows);
        int M = (r1 - r0) * Wo;
        if (weight->requires_grad || x->requires_grad)
          detail::im2col_tile(x->value, n, kh, kw, stride, pad, Wo, r0, r1, col.data());
        detail::CMapMat<T> Cm(col.data(), Eigen::Index(K), M);
        if (weight->requires_grad) {
          auto& gw = weight->ensure_grad();
          detail::MapMat<T> Gw(gw.ptr(), Cout, Eigen::Index(K));
          for (int co = 0; co < Cout; ++co) {
            Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> grow(
                o.grad.ptr() + o.grad.idx(n, co, 0, 0) + std::size_t(r0) * Wo, M);
            Gw.row(co).noalias() += grow * Cm.transpose();
          }
        }
        if (x->requires_grad) {
          detail::MapMat<T> Dc(dcol.data(), Eigen::Index(K), M);
          Dc.setZero();
          for (int co = 0; co < Cout; ++co) {
            Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> grow(
                o.grad.ptr() + o.grad.idx(n, co, 0, 0) + std::size_t(r0) * Wo, M);
            Dc.noalias() += Wm.row(co).transpose() * grow;
          }
          auto& gx = x->ensure_grad();
          detail::col2im_tile(dcol.data(), n, kh, kw, stride, pad, Wo, r0, r1, gx);
        }
      }
      if (bias && bias->requires_grad) {
        auto& gb = bias->ensure_grad();
        for (int co = 0; co < Cout; ++co) {
          const T* gp = o.grad.ptr() + o.grad.idx(n, co, 0, 0);
          T acc = T(0);
          for (int i = 0; i < Ho * Wo; ++i) acc += gp[i];
          gb.data[co] += acc;
        }
      }
    }
  });
}

// Batch normalization over (N,H,W) per channel. gamma/beta are (1,C,1,1).
// Running stats live in module-owned tensors and are updated in training mode
// (biased variance normalizes, unbiased updates the running value).
template <typename T>
Var<T> batchnorm(Var<T> x, Var<T> gamma, Var<T> beta, Tensor<T>* rmean, Tensor<T>* rvar,
                 bool training, T momentum = T(0.1), T eps = T(1e-5)) {
  const int N = x->value.n, C = x->value.c, H = x->value.h, W = x->value.w;
  const std::size_t M = std::size_t(N) * H * W;
  if (gamma->value.c != C || beta->value.c != C)
    throw std::invalid_argument("batchnorm: affine shape mismatch");

  auto mu = std::make_shared<std::vector<T>>(C, T(0));
  auto si = std::make_shared<std::vector<T>>(C, T(0));  // 1/sqrt(var+eps)
  if (training) {
    for (int c = 0; c < C; ++c) {
      T acc = T(0);
      for (int n = 0; n < N; ++n) {
        const T* p = x->value.ptr() + x->value.idx(n, c, 0, 0);
        for (int i = 0; i < H * W; ++i) acc += p[i];
      }
      T m = acc / T(M);
      T vacc = T(0);
      for (int n = 0; n < N; ++n) {
        const T* p = x->value.ptr() + x->value.idx(n, c, 0, 0);
        for (int i = 0; i < H * W; ++i) {
          T d = p[i] - m;
          vacc += d * d;
        }
      }
      T var = vacc / T(M);
      (*mu)[c] = m;
      (*si)[c] = T(1) / std::sqrt(var + eps);
      if (rmean && rvar) {
        T unbiased = M > 1 ? vacc / T(M - 1) : var;
        rmean->data[c] = (T(1) - momentum) * rmean->data[c] + momentum * m;
        rvar->data[c] = (T(1) - momentum) * rvar->data[c] + momentum * unbiased;
      }
    }
  } else {
    if (!rmean || !rvar) throw std::invalid_argument("batchnorm: eval needs running stats");
    for (int c = 0; c < C; ++c) {
      (*mu)[c] = rmean->data[c];
      (*si)[c] = T(1) / std::sqrt(rvar->data[c] + eps);
    }
  }

  Tensor<T> y(N, C, H, W);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* p = x->value.ptr() + x->value.idx(n, c, 0, 0);
      T* q = y.ptr() + y.idx(n, c, 0, 0);
      T g = gamma->value.data[c], b = beta->value.data[c];
      T m = (*mu)[c], s = (*si)[c];
      for (int i = 0; i < H * W; ++i) q[i] = g * ((p[i] - m) * s) + b;
    }

  return attach<T>(std::move(y), {x, gamma, beta},
                   [x, gamma, beta, mu, si, training](Node<T>& o) {
    const int N = x->value.n, C = x->value.c, H = x->value.h, W = x->value.w;
    const std::size_t M = std::size_t(N) * H * W;
    for (int c = 0; c < C; ++c) {
      T m = (*mu)[c], s = (*si)[c];
      T sum_dy = T(0), sum_dy_xhat = T(0);
      for (int n = 0; n < N; ++n) {
        const T* gp = o.grad.ptr() + o.grad.idx(n, c, 0, 0);
        const T* xp = x->value.ptr() + x->value.idx(n, c, 0, 0);
        for (int i = 0; i < H * W; ++i) {
          sum_dy += gp[i];
          sum_dy_xhat += gp[i] * (xp[i] - m) * s;
        }
      }
      if (gamma->requires_grad) gamma->ensure_grad().data[c] += sum_dy_xhat;
      if (beta->requires_grad) beta->ensure_grad().data[c] += sum_dy;
      if (x->requires_grad) {
        auto& gx = x->ensure_grad();
        T g = gamma->value.data[c];
        T mean_dy = sum_dy / T(M), mean_dy_xhat = sum_dy_xhat / T(M);
        for (int n = 0; n < N; ++n) {
          const T* gp = o.grad.ptr() + o.grad.idx(n, c, 0, 0);
          const T* xp = x->value.ptr() + x->value.idx(n, c, 0, 0);
          T* dp = gx.ptr() + gx.idx(n, c, 0, 0);
          if (training) {
            for (int i = 0; i < H * W; ++i) {
              T xhat = (xp[i] - m) * s;
              dp[i] += g * s * (gp[i] - mean_dy - xhat * mean_dy_xhat);
            }
          } else {
            for (int i = 0; i < H * W; ++i) dp[i] += g * s * gp[i];
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> bilinear_resize(Var<T> x, int Ho, int Wo) {
  if (x->value.h == Ho && x->value.w == Wo) return x;
  Tensor<T> y = bilinear_plain(x->value, Ho, Wo);
  const int Hi = x->value.h, Wi = x->value.w;
  return attach<T>(std::move(y), {x}, [x, Ho, Wo, Hi, Wi](Node<T>& o) {
    std::vector<int> y0, y1, x0, x1;
    std::vector<T> fy, fx;
    detail::bilinear_taps<T>(Ho, Hi, y0, y1, fy);
    detail::bilinear_taps<T>(Wo, Wi, x0, x1, fx);
    auto& gx = x->ensure_grad();
    for (int n = 0; n < o.grad.n; ++n)
      for (int c = 0; c < o.grad.c; ++c) {
        const T* gp = o.grad.ptr() + o.grad.idx(n, c, 0, 0);
        T* dp = gx.ptr() + gx.idx(n, c, 0, 0);
        for (int oy = 0; oy < Ho; ++oy) {
          T wy = fy[oy];
          for (int ox = 0; ox < Wo; ++ox) {
            T g = gp[std::size_t(oy) * Wo + ox];
            T wx = fx[ox];
            dp[std::size_t(y0[oy]) * Wi + x0[ox]] += g * (T(1) - wy) * (T(1) - wx);
            dp[std::size_t(y0[oy]) * Wi + x1[ox]] += g * (T(1) - wy) * wx;
            dp[std::size_t(y1[oy]) * Wi + x0[ox]] += g * wy * (T(1) - wx);
            dp[std::size_t(y1[oy]) * Wi + x1[ox]] += g * wy * wx;
          }
        }
      }
  });
}

template <typename T>
Var<T> reflect_pad2d(Var<T> x, int p) {
  const int H = x->value.h, W = x->value.w;
  Tensor<T> y(x->value.n, x->value.c, H + 2 * p, W + 2 * p);
  std::vector<int> fy(H + 2 * p), fx(W + 2 * p);
  for (int i = 0; i < H + 2 * p; ++i) fy[i] = reflect_index(i - p, H);
  for (int i = 0; i < W + 2 * p; ++i) fx[i] = reflect_index(i - p, W);
  for (int n = 0; n < x->value.n; ++n)
    for (int c = 0; c < x->value.c; ++c) {
      const T* sp = x->value.ptr() + x->value.idx(n, c, 0, 0);
      T* dp = y.ptr() + y.idx(n, c, 0, 0);
      for (int oy = 0; oy < H + 2 * p; ++oy) {
        const T* row = sp + std::size_t(fy[oy]) * W;
        for (int ox = 0; ox < W + 2 * p; ++ox)
          dp[std::size_t(oy) * (W + 2 * p) + ox] = row[fx[ox]];
      }
    }
  return attach<T>(std::move(y), {x}, [x, p, H, W](Node<T>& o) {
    auto& gx = x->ensure_grad();
    const int Hp = H + 2 * p, Wp = W + 2 * p;
    for (int n = 0; n < gx.n; ++n)
      for (int c = 0; c < gx.c; ++c) {
        const T* gp = o.grad.ptr() + o.grad.idx(n, c, 0, 0);
        T* dp = gx.ptr() + gx.idx(n, c, 0, 0);
        for (int oy = 0; oy < Hp; ++oy) {
          int iy = reflect_index(oy - p, H);
          for (int ox = 0; ox < Wp; ++ox)
            dp[std::size_t(iy) * W + reflect_index(ox - p, W)] +=
                gp[std::size_t(oy) * Wp + ox];
        }
      }
  });
}

// 1-D correlation along height, valid region, fixed (non-learnable) taps
template <typename T>
Var<T> conv1d_h(Var<T> x, std::vector<T> taps) {
  const int k = int(taps.size());
  const int H = x->value.h, W = x->value.w;
  if (H < k) throw std::invalid_argument("conv1d_h: input shorter than kernel");
  Tensor<T> y(x->value.n, x->value.c, H - k + 1, W);
  for (int n = 0; n < x->value.n; ++n)
    for (int c = 0; c < x->value.c; ++c) {
      const T* sp = x->value.ptr() + x->value.idx(n, c, 0, 0);
      T* dp = y.ptr() + y.idx(n, c, 0, 0);
      for (int oy = 0; oy < H - k + 1; ++oy)
        for (int t = 0; t < k; ++t) {
          const T* row = sp + std::size_t(oy + t) * W;
          T tap = taps[t];
          T* out = dp + std::size_t(oy) * W;
          for (int ox = 0; ox < W; ++ox) out[ox] += tap * row[ox];
        }
    }
  auto tp = std::make_shared<std::vector<T>>(std::move(taps));
  return attach<T>(std::move(y), {x}, [x, tp, k, W](Node<T>& o) {
    auto& gx = x->ensure_grad();
    for (int n = 0; n < gx.n; ++n)
      for (int c = 0; c < gx.c; ++c) {
        const T* gp = o.grad.ptr() + o.grad.idx(n, c, 0, 0);
        T* dp = gx.ptr() + gx.idx(n, c, 0, 0);
        for (int oy = 0; oy < o.grad.h; ++oy)
          for (int t = 0; t < k; ++t) {
            T tap = (*tp)[t];
            const T* gr = gp + std::size_t(oy) * W;
            T* dr = dp + std::size_t(oy + t) * W;
            for (int ox = 0; ox < W; ++ox) dr[ox] += tap * gr[ox];
          }
      }
  });
}

// 1-D correlation along width, valid region
template <typename T>
Var<T> conv1d_w(Var<T> x, std::vector<T> taps) {
  const int k = int(taps.size());
  const int H = x->value.h, W = x->value.w;
  if (W < k) throw std::invalid_argument("conv1d_w: input narrower than kernel");
  const int Wo = W - k + 1;
  Tensor<T> y(x->value.n, x->value.c, H, Wo);
  for (int n = 0; n < x->value.n; ++n)
    for (int c = 0; c < x->value.c; ++c) {
      const T* sp = x->value.ptr() + x->value.idx(n, c, 0, 0);
      T* dp = y.ptr() + y.idx(n, c, 0, 0);
      for (int oy = 0; oy < H; ++oy) {
        const T* row = sp + std::size_t(oy) * W;
        T* out = dp + std::size_t(oy) * Wo;
        for (int ox = 0; ox < Wo; ++ox) {
          T acc = T(0);
          for (int t = 0; t < k; ++t) acc += taps[t] * row[ox + t];
          out[ox] = acc;
        }
      }
    }
  auto tp = std::make_shared<std::vector<T>>(std::move(taps));
  return attach<T>(std::move(y), {x}, [x, tp, k, W, Wo](Node<T>& o) {
    auto& gx = x->ensure_grad();
    for (int n = 0; n < gx.n; ++n)
      for (int c = 0; c < gx.c; ++c) {
        const T* gp = o.grad.ptr() + o.grad.idx(n, c, 0, 0);
        T* dp = gx.ptr() + gx.idx(n, c, 0, 0);
        for (int oy = 0; oy < o.grad.h; ++oy) {
          const T* gr = gp + std::size_t(oy) * Wo;
          T* dr = dp + std::size_t(oy) * W;
          for (int ox = 0; ox < Wo; ++ox)
            for (int t = 0; t < k; ++t) dr[ox + t] += (*tp)[t] * gr[ox];
        }
      }
  });
}

// keep even rows/cols; output ceil-halved
template <typename T>
Var<T> decimate2(Var<T> x) {
  const int H = x->value.h, W = x->value.w;
  const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  Tensor<T> y(x->value.n, x->value.c, Ho, Wo);
  for (int n = 0; n < x->value.n; ++n)
    for (int c = 0; c < x->value.c; ++c)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox)
          y.at(n, c, oy, ox) = x->value.at(n, c, 2 * oy, 2 * ox);
  return attach<T>(std::move(y), {x}, [x](Node<T>& o) {
    auto& gx = x->ensure_grad();
    for (int n = 0; n < o.grad.n; ++n)
      for (int c = 0; c < o.grad.c; ++c)
        for (int oy = 0; oy < o.grad.h; ++oy)
          for (int ox = 0; ox < o.grad.w; ++ox)
            gx.at(n, c, 2 * oy, 2 * ox) += o.grad.at(n, c, oy, ox);
  });
}

// zero-interleave upsampling: x(i,j) lands at (2i,2j)
template <typename T>
Var<T> interleave2(Var<T> x) {
  const int H = x->value.h, W = x->value.w;
  Tensor<T> y(x->value.n, x->value.c, 2 * H, 2 * W);
  for (int n = 0; n < x->value.n; ++n)
    for (int c = 0; c < x->value.c; ++c)
      for (int iy = 0; iy < H; ++iy)
        for (int ix = 0; ix < W; ++ix)
          y.at(n, c, 2 * iy, 2 * ix) = x->value.at(n, c, iy, ix);
  return attach<T>(std::move(y), {x}, [x](Node<T>& o) {
    auto& gx = x->ensure_grad();
    for (int n = 0; n < gx.n; ++n)
      for (int c = 0; c < gx.c; ++c)
        for (int iy = 0; iy < gx.h; ++iy)
          for (int ix = 0; ix < gx.w; ++ix)
            gx.at(n, c, iy, ix) += o.grad.at(n, c, 2 * iy, 2 * ix);
  });
}

// top-left crop
template <typename T>
Var<T> crop2d(Var<T> x, int Ho, int Wo) {
  if (Ho > x->value.h || Wo > x->value.w) throw std::invalid_argument("crop2d: grows");
  if (Ho == x->value.h && Wo == x->value.w) return x;
  Tensor<T> y(x->value.n, x->value.c, Ho, Wo);
  for (int n = 0; n < x->value.n; ++n)
    for (int c = 0; c < x->value.c; ++c)
      for (int oy = 0; oy < Ho; ++oy)
        std::memcpy(y.ptr() + y.idx(n, c, oy, 0),
                    x->value.ptr() + x->value.idx(n, c, oy, 0), sizeof(T) * Wo);
  return attach<T>(std::move(y), {x}, [x, Ho, Wo](Node<T>& o) {
    auto& gx = x->ensure_grad();
    for (int n = 0; n < o.grad.n; ++n)
      for (int c = 0; c < o.grad.c; ++c)
        for (int oy = 0; oy < Ho; ++oy)
          for (int ox = 0; ox < Wo; ++ox)
            gx.at(n, c, oy, ox) += o.grad.at(n, c, oy, ox);
  });
}

template <typename T>
Var<T> concat_channels(std::vector<Var<T>> xs) {
  if (xs.empty()) throw std::invalid_argument("concat: empty");
  int N = xs[0]->value.n, H = xs[0]->value.h, W = xs[0]->value.w, C = 0;
  for (auto& v : xs) {
    if (v->value.n != N || v->value.h != H || v->value.w != W)
      throw std::invalid_argument("concat: spatial/batch mismatch");
    C += v->value.c;
  }
  Tensor<T> y(N, C, H, W);
  for (int n = 0; n < N; ++n) {
    int co = 0;
    for (auto& v : xs) {
      std::memcpy(y.ptr() + y.idx(n, co, 0, 0), v->value.ptr() + v->value.idx(n, 0, 0, 0),
                  sizeof(T) * v->value.c * H * W);
      co += v->value.c;
    }
  }
  return attach<T>(std::move(y), xs, [xs, N, H, W](Node<T>& o) {
    for (int n = 0; n < N; ++n) {
      int co = 0;
      for (auto& v : xs) {
        if (v->requires_grad) {
          auto& g = v->ensure_grad();
          const T* gp = o.grad.ptr() + o.grad.idx(n, co, 0, 0);
          T* dp = g.ptr() + g.idx(n, 0, 0, 0);
          for (std::size_t i = 0; i < std::size_t(v->value.c) * H * W; ++i) dp[i] += gp[i];
        }
        co += v->value.c;
      }
    }
  });
}

// softmax over the channel axis, per pixel
template <typename T>
Var<T> softmax_channels(Var<T> x) {
  const int N = x->value.n, C = x->value.c, H = x->value.h, W = x->value.w;
  Tensor<T> y(N, C, H, W);
  const std::size_t plane = std::size_t(H) * W;
  for (int n = 0; n < N; ++n) {
    const T* xp = x->value.ptr() + x->value.idx(n, 0, 0, 0);
    T* yp = y.ptr() + y.idx(n, 0, 0, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      T mx = xp[i];
      for (int c = 1; c < C; ++c) mx = std::max(mx, xp[c * plane + i]);
      T denom = T(0);
      for (int c = 0; c < C; ++c) {
        T e = std::exp(xp[c * plane + i] - mx);
        yp[c * plane + i] = e;
        denom += e;
      }
      for (int c = 0; c < C; ++c) yp[c * plane + i] /= denom;
    }
  }
  return attach<T>(std::move(y), {x}, [x, C](Node<T>& o) {
    auto& gx = x->ensure_grad();
    const std::size_t plane = std::size_t(o.value.h) * o.value.w;
    for (int n = 0; n < o.value.n; ++n) {
      const T* yp = o.value.ptr() + o.value.idx(n, 0, 0, 0);
      const T* gp = o.grad.ptr() + o.grad.idx(n, 0, 0, 0);
      T* dp = gx.ptr() + gx.idx(n, 0, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        T dot = T(0);
        for (int c = 0; c < C; ++c) dot += gp[c * plane + i] * yp[c * plane + i];
        for (int c = 0; c < C; ++c)
          dp[c * plane + i] += yp[c * plane + i] * (gp[c * plane + i] - dot);
      }
    }
  });
}

// f[n,c,k] = sum_{y,x} weights[n,k,y,x] * feats[n,c,y,x]; output (N,C,K,1)
template <typename T>
Var<T> region_pool(Var<T> weights, Var<T> feats) {
  const int N = feats->value.n, C = feats->value.c;
  const int K = weights->value.c;
  const int H = feats->value.h, W = feats->value.w;
  if (weights->value.n != N || weights->value.h != H || weights->value.w != W)
    throw std::invalid_argument("region_pool: shape mismatch");
  const Eigen::Index M = Eigen::Index(H) * W;
  Tensor<T> f(N, C, K, 1);
  for (int n = 0; n < N; ++n) {
    detail::CMapMat<T> X(feats->value.ptr() + feats->value.idx(n, 0, 0, 0), C, M);
    detail::CMapMat<T> Cw(weights->value.ptr() + weights->value.idx(n, 0, 0, 0), K, M);
    detail::MapMat<T> F(f.ptr() + f.idx(n, 0, 0, 0), C, K);
    F.noalias() = X * Cw.transpose();
  }
  return attach<T>(std::move(f), {weights, feats}, [weights, feats, C, K, M](Node<T>& o) {
    for (int n = 0; n < feats->value.n; ++n) {
      detail::CMapMat<T> X(feats->value.ptr() + feats->value.idx(n, 0, 0, 0), C, M);
      detail::CMapMat<T> Cw(weights->value.ptr() + weights->value.idx(n, 0, 0, 0), K, M);
      detail::CMapMat<T> G(o.grad.ptr() + o.grad.idx(n, 0, 0, 0), C, K);
      if (feats->requires_grad) {
        auto& gf = feats->ensure_grad();
        detail::MapMat<T> Gx(gf.ptr() + gf.idx(n, 0, 0, 0), C, M);
        Gx.noalias() += G * Cw;
      }
      if (weights->requires_grad) {
        auto& gw = weights->ensure_grad();
        detail::MapMat<T> Gc(gw.ptr() + gw.idx(n, 0, 0, 0), K, M);
        Gc.noalias() += G.transpose() * X;
      }
    }
  });
}

// scores[n,k,y,x] = sum_c xt[n,c,y,x] * ft[n,c,k]; ft is (N,C,K,1)
template <typename T>
Var<T> attn_scores(Var<T> xt, Var<T> ft) {
  const int N = xt->value.n, C = xt->value.c, H = xt->value.h, W = xt->value.w;
  const int K = ft->value.h;
  if (ft->value.n != N || ft->value.c != C)
    throw std::invalid_argument("attn_scores: shape mismatch");
  const Eigen::Index M = Eigen::Index(H) * W;
  Tensor<T> s(N, K, H, W);
  for (int n = 0; n < N; ++n) {
    detail::CMapMat<T> X(xt->value.ptr() + xt->value.idx(n, 0, 0, 0), C, M);
    detail::CMapMat<T> F(ft->value.ptr() + ft->value.idx(n, 0, 0, 0), C, K);
    detail::MapMat<T> S(s.ptr() + s.idx(n, 0, 0, 0), K, M);
    S.noalias() = F.transpose() * X;
  }
  return attach<T>(std::move(s), {xt, ft}, [xt, ft, C, K, M](Node<T>& o) {
    for (int n = 0; n < xt->value.n; ++n) {
      detail::CMapMat<T> X(xt->value.ptr() + xt->value.idx(n, 0, 0, 0), C, M);
      detail::CMapMat<T> F(ft->value.ptr() + ft->value.idx(n, 0, 0, 0), C, K);
      detail::CMapMat<T> G(o.grad.ptr() + o.grad.idx(n, 0, 0, 0), K, M);
      if (xt->requires_grad) {
        auto& gx = xt->ensure_grad();
        detail::MapMat<T> Gx(gx.ptr() + gx.idx(n, 0, 0, 0), C, M);
        Gx.noalias() += F * G;
      }
      if (ft->requires_grad) {
        auto& gf = ft->ensure_grad();
        detail::MapMat<T> Gf(gf.ptr() + gf.idx(n, 0, 0, 0), C, K);
        Gf.noalias() += X * G.transpose();
      }
    }
  });
}

// y[n,c,y,x] = sum_k w[n,k,y,x] * fp[n,c,k]; fp is (N,C,K,1)
template <typename T>
Var<T> mix_regions(Var<T> w, Var<T> fp) {
  const int N = w->value.n, K = w->value.c, H = w->value.h, W = w->value.w;
  const int C = fp->value.c;
  if (fp->value.n != N || fp->value.h != K)
    throw std::invalid_argument("mix_regions: shape mismatch");
  const Eigen::Index M = Eigen::Index(H) * W;
  Tensor<T> y(N, C, H, W);
  for (int n = 0; n < N; ++n) {
    detail::CMapMat<T> Wm(w->value.ptr() + w->value.idx(n, 0, 0, 0), K, M);
    detail::CMapMat<T> F(fp->value.ptr() + fp->value.idx(n, 0, 0, 0), C, K);
    detail::MapMat<T> Y(y.ptr() + y.idx(n, 0, 0, 0), C, M);
    Y.noalias() = F * Wm;
  }
  return attach<T>(std::move(y), {w, fp}, [w, fp, C, K, M](Node<T>& o) {
    for (int n = 0; n < w->value.n; ++n) {
      detail::CMapMat<T> Wm(w->value.ptr() + w->value.idx(n, 0, 0, 0), K, M);
      detail::CMapMat<T> F(fp->value.ptr() + fp->value.idx(n, 0, 0, 0), C, K);
      detail::CMapMat<T> G(o.grad.ptr() + o.grad.idx(n, 0, 0, 0), C, M);
      if (fp->requires_grad) {
        auto& gf = fp->ensure_grad();
        detail::MapMat<T> Gf(gf.ptr() + gf.idx(n, 0, 0, 0), C, K);
        Gf.noalias() += G * Wm.transpose();
      }
      if (w->requires_grad) {
        auto& gw = w->ensure_grad();
        detail::MapMat<T> Gw(gw.ptr() + gw.idx(n, 0, 0, 0), K, M);
        Gw.noalias() += F.transpose() * G;
      }
    }
  });
}

}  // namespace ag
}  // namespace pyrsal
