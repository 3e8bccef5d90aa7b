#pragma once

#include <cstdint>

#include "pyrsal/tensor.hpp"

namespace pyrsal {

// 0/1 elliptical footprint on a ksize x ksize grid (ksize odd)
Tensor<uint8_t> ellipse_footprint(int ksize);

// grayscale max/min over the footprint, clipped at the image border
Tensor<float> dilate_gray(const Tensor<float>& x, const Tensor<uint8_t>& fp);
Tensor<float> erode_gray(const Tensor<float>& x, const Tensor<uint8_t>& fp);

// local contrast band: dilate - erode under the elliptical footprint
Tensor<float> transition_mask(const Tensor<float>& s, int ksize);

}  // namespace pyrsal
