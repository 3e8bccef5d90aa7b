#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pyrsal/context_attention.hpp"
#include "pyrsal/module.hpp"
#include "pyrsal/pyramid.hpp"

namespace pyrsal {

struct ModelConfig {
  std::vector<int> widths{16, 32, 64, 128};  // encoder widths, strides 4..32
  int decoder_width = 16;
  int train_h = 384, train_w = 384;
  bool pred_pyramid = true;  // compose each map on the upsampled coarser one
  bool stop_grad = true;     // detach coarser maps feeding each stage
  bool scale_scores = true;
};

template <typename T>
struct EncoderFeatures {
  Var<T> f4, f8, f16, f32;
};

// prediction-side pyramid: saliency at strides 8/4/2/1, residuals at 4/2/1
template <typename T>
struct SaliencyPyramid {
  Var<T> s3, s2, s1, s0;
  Var<T> u2, u1, u0;
};

// Coarse-to-fine saliency model: a small strided encoder feeds an initial
// eighth-resolution prediction, which three attention stages refine by
// doubling resolution and adding a learned residual in logit space.
template <typename T>
struct PyramidSaliencyNet {
  ModelConfig cfg;
  GaussianKernel2D kernel;

  ConvBlock<T> stem1, stem2, refine4;
  ConvBlock<T> down8, refine8, down16, refine16, down32, refine32;
  ConvBlock<T> red4, red8, red16, red32;
  ConvBlock<T> dec1, dec2;
  Conv2d<T> dec_out;
  ContextAttention<T> att2, att1, att0;

  PyramidSaliencyNet(const ModelConfig& c, uint64_t seed)
      : cfg(c), kernel(make_gaussian_kernel(7, 1.0)) {
    if (cfg.widths.size() != 4)
      throw std::invalid_argument("model: need one width per encoder stage");
    Pcg32 rng(seed, 0);
    const int w4 = cfg.widths[0], w8 = cfg.widths[1], w16 = cfg.widths[2],
              w32 = cfg.widths[3];
    const int dw = cfg.decoder_width;
    stem1 = ConvBlock<T>(3, w4, 3, 2, 1, rng);
    stem2 = ConvBlock<T>(w4, w4, 3, 2, 1, rng);
    refine4 = ConvBlock<T>(w4, w4, 3, 1, 1, rng);
    down8 = ConvBlock<T>(w4, w8, 3, 2, 1, rng);
    refine8 = ConvBlock<T>(w8, w8, 3, 1, 1, rng);
    down16 = ConvBlock<T>(w8, w16, 3, 2, 1, rng);
    refine16 = ConvBlock<T>(w16, w16, 3, 1, 1, rng);
    down32 = ConvBlock<T>(w16, w32, 3, 2, 1, rng);
    refine32 = ConvBlock<T>(w32, w32, 3, 1, 1, rng);
    red4 = ConvBlock<T>(w4, dw, 1, 1, 0, rng);
    red8 = ConvBlock<T>(w8, dw, 1, 1, 0, rng);
    red16 = ConvBlock<T>(w16, dw, 1, 1, 0, rng);
    red32 = ConvBlock<T>(w32, dw, 1, 1, 0, rng);
    dec1 = ConvBlock<T>(3 * dw, dw, 3, 1, 1, rng);
    dec2 = ConvBlock<T>(dw, dw, 3, 1, 1, rng);
    dec_out = Conv2d<T>(dw, 1, 3, 1, 1, true, rng);
    att2 = ContextAttention<T>(stage_cfg(2, 4), rng);
    att1 = ContextAttention<T>(stage_cfg(1, 2), rng);
    att0 = ContextAttention<T>(stage_cfg(0, 1), rng);
  }

  AttentionConfig stage_cfg(int stage, int stride) const {
    AttentionConfig a;
    a.stage = stage;
    a.stride = stride;
    a.channels = cfg.decoder_width;
    a.train_h = cfg.train_h;
    a.train_w = cfg.train_w;
    a.scale_scores = cfg.scale_scores;
    return a;
  }

  EncoderFeatures<T> encode(const Var<T>& img, bool training) {
    if (img->value.h % 32 || img->value.w % 32)
      throw std::invalid_argument("encode: dims must be divisible by 32");
    EncoderFeatures<T> f;
    f.f4 = refine4(stem2(stem1(img, training), training), training);
    f.f8 = refine8(down8(f.f4, training), training);
    f.f16 = refine16(down16(f.f8, training), training);
    f.f32 = refine32(down32(f.f16, training), training);
    return f;
  }

  EncoderFeatures<T> reduce_channels(const EncoderFeatures<T>& f,
                                     bool training) {
    EncoderFeatures<T> r;
    r.f4 = red4(f.f4, training);
    r.f8 = red8(f.f8, training);
    r.f16 = red16(f.f16, training);
    r.f32 = red32(f.f32, training);
    return r;
  }

  // one-channel map on the stride-8 grid from the three coarsest features
  Var<T> initial_decode(const EncoderFeatures<T>& r, bool training) {
    const int h8 = r.f8->value.h, w8 = r.f8->value.w;
    auto cat = ag::concat_channels(std::vector<Var<T>>{
        r.f8, ag::bilinear_resize(r.f16, h8, w8),
        ag::bilinear_resize(r.f32, h8, w8)});
    return ag::sigmoid(dec_out(dec2(dec1(cat, training), training)));
  }

  SaliencyPyramid<T> forward(const Var<T>& img, bool training) {
    auto red = reduce_channels(encode(img, training), training);
    const int h = img->value.h, w = img->value.w;

    SaliencyPyramid<T> out;
    out.s3 = initial_decode(red, training);

    auto sg = [&](const Var<T>& v) {
      return cfg.stop_grad ? ag::detach(v) : v;
    };
    ContextAttention<T>* heads[3] = {&att2, &att1, &att0};
    Var<T> feats[3] = {red.f4, ag::bilinear_resize(red.f4, h / 2, w / 2),
                       ag::bilinear_resize(red.f4, h, w)};
    Var<T>*us[3] = {&out.u2, &out.u1, &out.u0};
    Var<T>*ss[3] = {&out.s2, &out.s1, &out.s0};

    Var<T> s_prev = out.s3, u_prev = nullptr;
    for (int i = 0; i < 3; ++i) {
      const int fh = feats[i]->value.h, fw = feats[i]->value.w;
      auto sc = sg(ag::bilinear_resize(s_prev, fh, fw));
      Var<T> uc = u_prev ? sg(ag::bilinear_resize(u_prev, fh, fw)) : nullptr;
      auto u = heads[i]->forward(feats[i], sc, uc, training);
      Var<T> s;
      if (cfg.pred_pyramid) {
        auto slog =
            ag::logit(ag::clampv(s_prev, T(1e-4), T(1.0 - 1e-4)));
        auto se = ag::crop2d(ag::expand_op(sg(slog), kernel), fh, fw);
        s = ag::sigmoid(ag::add(se, u));
      } else {
        s = ag::sigmoid(u);
      }
      *us[i] = u;
      *ss[i] = s;
      s_prev = s;
      u_prev = u;
    }
    return out;
  }

  void collect(ParamStore<T>& st) {
    stem1.collect("enc.stem1", st);
    stem2.collect("enc.stem2", st);
    refine4.collect("enc.refine4", st);
    down8.collect("enc.down8", st);
    refine8.collect("enc.refine8", st);
    down16.collect("enc.down16", st);
    refine16.collect("enc.refine16", st);
    down32.collect("enc.down32", st);
    refine32.collect("enc.refine32", st);
    red4.collect("red4", st);
    red8.collect("red8", st);
    red16.collect("red16", st);
    red32.collect("red32", st);
    dec1.collect("dec.block1", st);
    dec2.collect("dec.block2", st);
    dec_out.collect("dec.out", st);
    att2.collect("att2", st);
    att1.collect("att1", st);
    att0.collect("att0", st);
  }
};

}  // namespace pyrsal
