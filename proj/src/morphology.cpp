#include "pyrsal/morphology.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pyrsal {

Tensor<uint8_t> ellipse_footprint(int ksize) {
  if (ksize < 1 || ksize % 2 == 0)
    throw std::invalid_argument("ellipse_footprint: ksize must be odd and positive");
  const int r = ksize / 2;
  Tensor<uint8_t> fp(1, 1, ksize, ksize);
  for (int dy = -r; dy <= r; ++dy) {
    int dx = static_cast<int>(std::lrint(std::sqrt(double(r) * r - double(dy) * dy)));
    for (int x = r - dx; x <= r + dx; ++x) fp.at(0, 0, dy + r, x) = 1;
  }
  return fp;
}

namespace {

template <bool Max>
Tensor<float> morph(const Tensor<float>& x, const Tensor<uint8_t>& fp) {
  if (fp.h != fp.w || fp.h % 2 == 0)
    throw std::invalid_argument("morph: footprint must be odd and square");
  const int r = fp.h / 2;
  Tensor<float> y(x.n, x.c, x.h, x.w);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int iy = 0; iy < x.h; ++iy)
        for (int ix = 0; ix < x.w; ++ix) {
          float best = Max ? -std::numeric_limits<float>::infinity()
                           : std::numeric_limits<float>::infinity();
          for (int dy = -r; dy <= r; ++dy) {
            int sy = iy + dy;
            if (sy < 0 || sy >= x.h) continue;
            for (int dx = -r; dx <= r; ++dx) {
              int sx = ix + dx;
              if (sx < 0 || sx >= x.w || !fp.at(0, 0, dy + r, dx + r)) continue;
              float v = x.at(n, c, sy, sx);
              if (Max ? v > best : v < best) best = v;
            }
          }
          y.at(n, c, iy, ix) = best;
        }
  return y;
}

}  // namespace

Tensor<float> dilate_gray(const Tensor<float>& x, const Tensor<uint8_t>& fp) {
  return morph<true>(x, fp);
}

Tensor<float> erode_gray(const Tensor<float>& x, const Tensor<uint8_t>& fp) {
  return morph<false>(x, fp);
}

Tensor<float> transition_mask(const Tensor<float>& s, int ksize) {
  auto fp = ellipse_footprint(ksize);
  auto hi = dilate_gray(s, fp);
  auto lo = erode_gray(s, fp);
  Tensor<float> t(s.n, s.c, s.h, s.w);
  for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = hi.data[i] - lo.data[i];
  return t;
}

}  // namespace pyrsal
