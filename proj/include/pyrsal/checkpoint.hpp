#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pyrsal/config.hpp"
#include "pyrsal/model.hpp"
#include "pyrsal/tensor.hpp"

namespace pyrsal {

// weights plus the config that produced them, in one file
struct Checkpoint {
  RunConfig config;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

Checkpoint snapshot(PyramidSaliencyNet<float>& model, const RunConfig& cfg);

// strict: every model tensor must be present with a matching shape, and
// every checkpoint tensor must be consumed
void restore(PyramidSaliencyNet<float>& model, const Checkpoint& ck);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pyrsal
