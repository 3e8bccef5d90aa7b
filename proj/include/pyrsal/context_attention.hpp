#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pyrsal/module.hpp"

namespace pyrsal {

struct AttentionConfig {
  int stage = 2;      // 2 is coarsest of the three attention stages
  int stride = 4;     // input pixels per feature cell
  int channels = 16;  // feature width C
  int train_h = 384, train_w = 384;
  bool scale_scores = true;  // divide attention logits by sqrt(C)

  int num_context() const { return stage == 2 ? 3 : 5; }
  int grid_h() const { return train_h / stride; }
  int grid_w() const { return train_w / stride; }
};

// Per-stage attention decoder. Pools region descriptors on the fixed
// training-time grid so the K x C representation is independent of the
// input resolution, then redistributes them with a per-pixel softmax and
// emits a one-channel residual map.
template <typename T>
struct ContextAttention {
  AttentionConfig cfg;
  Var<T> theta_s, theta_u;                  // theta_u absent at stage 2
  ConvBlock<T> tx, tf, tfp, ty;             // 1x1 transforms, width C
  ConvBlock<T> head1, head2;                // 3x3 blocks after concat
  Conv2d<T> out;                            // 3x3 -> 1 channel, no squash

  ContextAttention() = default;
  ContextAttention(const AttentionConfig& c, Pcg32& rng)
      : cfg(c),
        theta_s(make_var(Tensor<T>(1, 1, 1, 1, T(0.5)), true)),
        tx(c.channels, c.channels, 1, 1, 0, rng),
        tf(c.channels, c.channels, 1, 1, 0, rng),
        tfp(c.channels, c.channels, 1, 1, 0, rng),
        ty(c.channels, c.channels, 1, 1, 0, rng),
        head1(2 * c.channels, c.channels, 3, 1, 1, rng),
        head2(c.channels, c.channels, 3, 1, 1, rng),
        out(c.channels, 1, 3, 1, 1, true, rng) {
    if (c.train_h % c.stride || c.train_w % c.stride)
      throw std::invalid_argument(
          "ContextAttention: training shape not divisible by stride");
    if (c.stage != 2) theta_u = make_var(Tensor<T>(1, 1, 1, 1, T(0.5)), true);
  }

  // K nonnegative weight maps from the coarser-stage saliency (and, past the
  // first stage, its residual): fg/bg split about theta_s plus a band around
  // it, then the same split of the residual about theta_u
  Var<T> context_maps(const Var<T>& s, const Var<T>& u) const {
    if (cfg.stage == 2 && u)
      throw std::invalid_argument("context_maps: residual input at stage 2");
    if (cfg.stage != 2 && !u)
      throw std::invalid_argument("context_maps: residual input missing");
    auto sf = ag::relu(ag::bsub(s, theta_s));
    auto sb = ag::relu(ag::brsub(theta_s, s));
    auto su = ag::relu(ag::brsub(theta_s, ag::absval(ag::bsub(s, theta_s))));
    std::vector<Var<T>> maps{sf, sb, su};
    if (u) {
      maps.push_back(ag::relu(ag::bsub(u, theta_u)));
      maps.push_back(ag::relu(ag::brsub(theta_u, u)));
    }
    return ag::concat_channels(maps);
  }

  // (N, C, K, 1) descriptor matrix, pooled at the training-time grid
  Var<T> region_representation(const Var<T>& x, const Var<T>& c) const {
    auto xr = ag::bilinear_resize(x, cfg.grid_h(), cfg.grid_w());
    auto cr = ag::bilinear_resize(c, cfg.grid_h(), cfg.grid_w());
    return ag::region_pool(cr, xr);
  }

  // per-pixel softmax over the K regions
  Var<T> attention(const Var<T>& x, const Var<T>& f, bool training) {
    auto scores = ag::attn_scores(tx(x, training), tf(f, training));
    if (cfg.scale_scores)
      scores = ag::mul_scalar(
          scores, static_cast<T>(1.0 / std::sqrt((double)cfg.channels)));
    return ag::softmax_channels(scores);
  }

  Var<T> enhance(const Var<T>& x, const Var<T>& w, const Var<T>& f,
                 bool training) {
    auto y = ty(ag::mix_regions(w, tfp(f, training)), training);
    auto cat = ag::concat_channels(std::vector<Var<T>>{x, y});
    return out(head2(head1(cat, training), training));
  }

  // features + resized coarser maps -> residual saliency map at feature size
  Var<T> forward(const Var<T>& x, const Var<T>& s_coarse,
                 const Var<T>& u_coarse, bool training) {
    if (s_coarse->value.h != x->value.h || s_coarse->value.w != x->value.w)
      throw std::invalid_argument("ContextAttention: saliency/feature size");
    if (u_coarse &&
        (u_coarse->value.h != x->value.h || u_coarse->value.w != x->value.w))
      throw std::invalid_argument("ContextAttention: residual/feature size");
    auto c = context_maps(s_coarse, u_coarse);
    auto f = region_representation(x, c);
    auto w = attention(x, f, training);
    return enhance(x, w, f, training);
  }

  void collect(const std::string& prefix, ParamStore<T>& st) {
    st.add_param(prefix + ".theta_s", theta_s);
    if (theta_u) st.add_param(prefix + ".theta_u", theta_u);
    tx.collect(prefix + ".tx", st);
    tf.collect(prefix + ".tf", st);
    tfp.collect(prefix + ".tfp", st);
    ty.collect(prefix + ".ty", st);
    head1.collect(prefix + ".head1", st);
    head2.collect(prefix + ".head2", st);
    out.collect(prefix + ".out", st);
  }
};

}  // namespace pyrsal
