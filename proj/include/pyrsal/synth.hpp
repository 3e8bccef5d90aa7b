#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pyrsal/rng.hpp"
#include "pyrsal/tensor.hpp"

namespace pyrsal {

enum class ShapeKind { disk, rounded_rect, star, blob };

struct SynthSpec {
  int n_images = 8;
  int size = 128;  // square, multiple of 32
  int min_shapes = 1, max_shapes = 3;
  bool textured_background = true;
  uint64_t seed = 0;
  std::vector<ShapeKind> kinds{ShapeKind::disk, ShapeKind::rounded_rect,
                               ShapeKind::star, ShapeKind::blob};
};

struct SamplePair {
  Tensor<float> image;  // (1,3,H,W)
  Tensor<float> gt;     // (1,1,H,W), binary
};

// one deterministic sample; the draw stream depends only on (seed, index)
SamplePair synth_sample(const SynthSpec& spec, uint64_t index);

// writes images/, masks/ and a manifest under out_root
void generate(const SynthSpec& spec, const std::string& out_root);

struct AugmentConfig {
  double scale_lo = 0.75, scale_hi = 1.25;
  double rot_deg = 10.0;
  double jitter_lo = 0.8, jitter_hi = 1.2;  // contrast/brightness/sharpness
};

SamplePair augment(const SamplePair& in, const AugmentConfig& cfg, Pcg32& rng);

}  // namespace pyrsal
