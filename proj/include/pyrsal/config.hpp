#pragma once

#include <cstdint>
#include <string>

#include "pyrsal/blend.hpp"
#include "pyrsal/losses.hpp"
#include "pyrsal/model.hpp"
#include "pyrsal/optim.hpp"
#include "pyrsal/synth.hpp"

namespace pyrsal {

// one run's complete knob set; serialized beside every artifact so a result
// can be reproduced from the file alone
struct RunConfig {
  ModelConfig model;
  TrainSchedule sched;
  int64_t iter_max = 600;  // total optimizer steps; training stops here
  int eval_every = 50;     // train-set MAE cadence for the best checkpoint
  bool augment = true;
  AugmentConfig aug;
  ResizePolicy resize;
  LossWeights weights;
  LossFlags flags;
  uint64_t seed = 0;
  std::string data_dir;
  std::string out_dir;
};

// blend-time policy mirrors the model's training shape
inline ResizePolicy resize_for(const RunConfig& cfg) {
  ResizePolicy p = cfg.resize;
  p.train_h = cfg.model.train_h;
  p.train_w = cfg.model.train_w;
  return p;
}

std::string to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

}  // namespace pyrsal
