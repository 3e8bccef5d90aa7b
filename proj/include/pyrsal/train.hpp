#pragma once

#include <string>
#include <vector>

#include "pyrsal/config.hpp"
#include "pyrsal/model.hpp"
#include "pyrsal/synth.hpp"

namespace pyrsal {

struct Dataset {
  std::vector<std::string> stems;
  std::vector<SamplePair> pairs;
};

// pairs images/<stem>.png with masks/<stem>.png under root, sorted by stem
Dataset load_pairs(const std::string& root);

struct TrainResult {
  std::vector<double> total_curve;  // loss after every optimizer step
  double best_mae = 1.0;            // train-set MAE of the best checkpoint
  std::int64_t best_iter = -1;
  std::string best_path, last_path, log_path;
};

// shuffled epochs cut into sequential batches, one Adam update per step,
// stopping at cfg.iter_max regardless of epoch boundary; writes best/last
// checkpoints, an ndjson loss log and the config under cfg.out_dir (all
// file output is skipped when out_dir is empty)
TrainResult train(PyramidSaliencyNet<float>& model, const Dataset& data,
                  const RunConfig& cfg);

}  // namespace pyrsal
