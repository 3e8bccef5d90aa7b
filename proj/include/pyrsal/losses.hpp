#pragma once

#include <array>
#include <stdexcept>

#include "pyrsal/model.hpp"
#include "pyrsal/pyramid.hpp"

namespace pyrsal {

struct LossWeights {
  double eta = 1e-4;
  std::array<double, 4> lambda{1.0, 4.0, 16.0, 64.0};  // 4^j per stage
};

struct LossFlags {
  bool pc_loss = true;       // penalize cross-stage inconsistency
  bool gt_pyramid = true;    // false: plain bilinear shrink of the full GT
  bool pc_normalize = true;  // divide each consistency term by pixel count
};

template <typename T>
struct GroundTruthPyramid {
  Tensor<T> g0, g1, g2, g3;
  const Tensor<T>& stage(int j) const {
    switch (j) {
      case 0: return g0;
      case 1: return g1;
      case 2: return g2;
      default: return g3;
    }
  }
};

template <typename T>
GroundTruthPyramid<T> build_gt_pyramid(const Tensor<T>& g,
                                       const GaussianKernel2D& k,
                                       bool by_reduce = true) {
  if (g.h % 8 || g.w % 8)
    throw std::invalid_argument("build_gt_pyramid: dims must be divisible by 8");
  GroundTruthPyramid<T> p;
  p.g0 = g;
  if (by_reduce) {
    p.g1 = reduce(p.g0, k);
    p.g2 = reduce(p.g1, k);
    p.g3 = reduce(p.g2, k);
  } else {
    p.g1 = bilinear_plain(g, g.h / 2, g.w / 2);
    p.g2 = bilinear_plain(g, g.h / 4, g.w / 4);
    p.g3 = bilinear_plain(g, g.h / 8, g.w / 8);
  }
  return p;
}

// mean filter with mirrored borders, used for the boundary-emphasis weights
template <typename T>
Tensor<T> boxmean(const Tensor<T>& x, int ksize) {
  const int r = ksize / 2;
  Tensor<T> tmp(x.n, x.c, x.h, x.w), y(x.n, x.c, x.h, x.w);
  const double inv = 1.0 / ksize;
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c) {
      for (int iy = 0; iy < x.h; ++iy)
        for (int ix = 0; ix < x.w; ++ix) {
          double acc = 0.0;
          for (int t = -r; t <= r; ++t)
            acc += x.at(n, c, iy, reflect_index(ix + t, x.w));
          tmp.at(n, c, iy, ix) = static_cast<T>(acc * inv);
        }
      for (int iy = 0; iy < x.h; ++iy)
        for (int ix = 0; ix < x.w; ++ix) {
          double acc = 0.0;
          for (int t = -r; t <= r; ++t)
            acc += tmp.at(n, c, reflect_index(iy + t, x.h), ix);
          y.at(n, c, iy, ix) = static_cast<T>(acc * inv);
        }
    }
  return y;
}

// boundary-weighted cross entropy: w = 1 + 5|boxmean_31(G) - G|, then
// sum(w * bce) / sum(w)
template <typename T>
Var<T> wbce(const Var<T>& s, const Tensor<T>& g) {
  check_same_shape(s->value, g, "wbce");
  auto bm = boxmean(g, 31);
  Tensor<T> w(g.n, g.c, g.h, g.w);
  double wsum = 0.0;
  for (size_t i = 0; i < g.size(); ++i) {
    w.data[i] = static_cast<T>(
        1.0 + 5.0 * std::abs(double(bm.data[i]) - double(g.data[i])));
    wsum += w.data[i];
  }
  auto weighted = ag::mul_const(ag::bce_map(s, g), std::move(w));
  return ag::mul_scalar(ag::sum_all(weighted), static_cast<T>(1.0 / wsum));
}

// L1 gap between a stage and the downsampled next-finer stage
template <typename T>
Var<T> pyramidal_consistency(const Var<T>& s_j, const Var<T>& s_fine,
                             const GaussianKernel2D& k,
                             bool normalize = true) {
  const auto& a = s_j->value;
  const auto& b = s_fine->value;
  if (a.n != b.n || a.c != b.c || a.h != (b.h + 1) / 2 ||
      a.w != (b.w + 1) / 2)
    throw std::invalid_argument("pyramidal_consistency: stage shape mismatch");
  auto gap = ag::sum_all(ag::absval(ag::sub(s_j, ag::reduce_op(s_fine, k))));
  if (normalize)
    gap = ag::mul_scalar(gap, static_cast<T>(1.0 / (double(a.h) * a.w * a.n)));
  return gap;
}

template <typename T>
struct LossBreakdown {
  Var<T> total;
  std::array<Var<T>, 4> wbce_stage{};  // finest to coarsest
  std::array<Var<T>, 3> pc_pair{};     // (S1,S0), (S2,S1), (S3,S2)
};

template <typename T>
LossBreakdown<T> total_loss(const SaliencyPyramid<T>& pred,
                            const GroundTruthPyramid<T>& gt,
                            const GaussianKernel2D& k,
                            const LossWeights& lw = {},
                            const LossFlags& flags = {}) {
  LossBreakdown<T> out;
  const Var<T>* maps[4] = {&pred.s0, &pred.s1, &pred.s2, &pred.s3};
  Var<T> total;
  for (int j = 0; j < 4; ++j) {
    out.wbce_stage[j] = wbce(*maps[j], gt.stage(j));
    auto term =
        ag::mul_scalar(out.wbce_stage[j], static_cast<T>(lw.lambda[j]));
    total = total ? ag::add(total, term) : term;
  }
  if (flags.pc_loss) {
    for (int kk = 0; kk < 3; ++kk) {
      out.pc_pair[kk] = pyramidal_consistency(*maps[kk + 1], *maps[kk], k,
                                              flags.pc_normalize);
      total = ag::add(total,
                      ag::mul_scalar(out.pc_pair[kk],
                                     static_cast<T>(lw.eta * lw.lambda[kk])));
    }
  }
  out.total = total;
  return out;
}

}  // namespace pyrsal
