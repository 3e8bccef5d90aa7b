#pragma once

#include "pyrsal/model.hpp"
#include "pyrsal/morphology.hpp"
#include "pyrsal/pyramid.hpp"

namespace pyrsal {

struct ResizePolicy {
  int L = 1280;          // cap on the shorter side of the detail pass
  int skip_below = 512;  // inputs shorter than this take the plain path
  int train_h = 384, train_w = 384;
};

struct TransitionSchedule {
  int ksize[3] = {17, 9, 5};  // indexed by stage: finer stages band wider
};

struct ResizeTarget {
  int h = 0, w = 0;            // final dims, multiples of 32
  double pre_h = 0, pre_w = 0;  // aspect-preserving dims before rounding
  bool skip = false;
};

ResizeTarget plan_resize(int h, int w, const ResizePolicy& policy);

// everything the blended reconstruction may consume: the plain-path map plus
// the three detail stages; the detail pass's own coarse map has no slot here
struct BlendInputs {
  Tensor<float> s0_lr;
  Tensor<float> u2, u1, u0;
};

Tensor<float> plain_saliency(PyramidSaliencyNet<float>& model,
                             const Tensor<float>& image,
                             const ResizePolicy& policy);

Tensor<float> blend_pyramids(const BlendInputs& in, const GaussianKernel2D& k,
                             const TransitionSchedule& sched, int out_h,
                             int out_w);

Tensor<float> blend(PyramidSaliencyNet<float>& model,
                    const Tensor<float>& image, const ResizePolicy& policy,
                    const TransitionSchedule& sched, const GaussianKernel2D& k);

}  // namespace pyrsal
