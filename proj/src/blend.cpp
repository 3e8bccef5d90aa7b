#include "pyrsal/blend.hpp"

#include <cmath>
#include <stdexcept>

namespace pyrsal {

namespace {

int round32(double v) {
  int m = int(std::floor(v / 32.0 + 0.5));
  return std::max(1, m) * 32;
}

Tensor<float> crop_to(const Tensor<float>& x, int h, int w) {
  if (x.h == h && x.w == w) return x;
  Tensor<float> y(x.n, x.c, h, w);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int iy = 0; iy < h; ++iy)
        for (int ix = 0; ix < w; ++ix) y.at(n, c, iy, ix) = x.at(n, c, iy, ix);
  return y;
}

Tensor<float> logit_clamped(const Tensor<float>& s) {
  Tensor<float> y(s.n, s.c, s.h, s.w);
  for (std::size_t i = 0; i < s.size(); ++i) {
    float v = std::min(std::max(s.data[i], 1e-4f), 1.0f - 1e-4f);
    y.data[i] = std::log(v / (1.0f - v));
  }
  return y;
}

Tensor<float> sigmoid_map(const Tensor<float>& x) {
  Tensor<float> y(x.n, x.c, x.h, x.w);
  for (std::size_t i = 0; i < x.size(); ++i)
    y.data[i] = 1.0f / (1.0f + std::exp(-x.data[i]));
  return y;
}

}  // namespace

ResizeTarget plan_resize(int h, int w, const ResizePolicy& policy) {
  if (h < 1 || w < 1) throw std::invalid_argument("plan_resize: empty input");
  ResizeTarget t;
  int shorter = std::min(h, w);
  if (shorter < policy.skip_below) {
    t.skip = true;
    return t;
  }
  double factor = double(std::min(policy.L, shorter)) / shorter;
  t.pre_h = h * factor;
  t.pre_w = w * factor;
  t.h = round32(t.pre_h);
  t.w = round32(t.pre_w);
  return t;
}

Tensor<float> plain_saliency(PyramidSaliencyNet<float>& model,
                             const Tensor<float>& image,
                             const ResizePolicy& policy) {
  auto lr = bilinear_plain(image, policy.train_h, policy.train_w);
  auto pyr = model.forward(make_var(lr), false);
  return bilinear_plain(pyr.s0->value, image.h, image.w);
}

Tensor<float> blend_pyramids(const BlendInputs& in, const GaussianKernel2D& k,
                             const TransitionSchedule& sched, int out_h,
                             int out_w) {
  // seed the reconstruction on the detail pass's coarsest refinement grid
  auto r = bilinear_plain(in.s0_lr, (in.u2.h + 1) / 2, (in.u2.w + 1) / 2);
  const Tensor<float>* stages[3] = {&in.u2, &in.u1, &in.u0};
  for (int i = 0; i < 3; ++i) {
    const auto& u = *stages[i];
    auto re = crop_to(expand(logit_clamped(r), k), u.h, u.w);
    auto t = transition_mask(sigmoid_map(re), sched.ksize[2 - i]);
    for (std::size_t p = 0; p < re.size(); ++p)
      re.data[p] += t.data[p] * u.data[p];
    r = sigmoid_map(re);
  }
  return bilinear_plain(r, out_h, out_w);
}

Tensor<float> blend(PyramidSaliencyNet<float>& model,
                    const Tensor<float>& image, const ResizePolicy& policy,
                    const TransitionSchedule& sched, const GaussianKernel2D& k) {
  auto plan = plan_resize(image.h, image.w, policy);
  if (plan.skip) return plain_saliency(model, image, policy);

  auto lr = bilinear_plain(image, policy.train_h, policy.train_w);
  auto lr_pyr = model.forward(make_var(lr), false);

  auto hr = bilinear_plain(image, plan.h, plan.w);
  auto hr_pyr = model.forward(make_var(hr), false);

  BlendInputs in{lr_pyr.s0->value, hr_pyr.u2->value, hr_pyr.u1->value,
                 hr_pyr.u0->value};
  return blend_pyramids(in, k, sched, image.h, image.w);
}

}  // namespace pyrsal
