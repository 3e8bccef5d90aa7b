#pragma once

#include <string>

#include "pyrsal/tensor.hpp"

namespace pyrsal {

// 8-bit PNG I/O; tensors hold [0,1] floats, (1,3,H,W) for RGB, (1,1,H,W) for maps

void save_rgb(const std::string& path, const Tensor<float>& img);
Tensor<float> load_rgb(const std::string& path);

void save_map(const std::string& path, const Tensor<float>& map);
Tensor<float> load_map(const std::string& path);

}  // namespace pyrsal
