#pragma once

#include <string>
#include <vector>

#include "pyrsal/tensor.hpp"

namespace pyrsal {

// the four saliency metrics; maps are (1,1,H,W), values in [0,1]

double mae(const Tensor<double>& s, const Tensor<double>& g);

// per-threshold F-scores for t/255, t in 0..255, beta^2 = 0.3
std::vector<double> f_curve(const Tensor<double>& s, const Tensor<double>& g);
double f_max(const Tensor<double>& s, const Tensor<double>& g);

double s_measure(const Tensor<double>& s, const Tensor<double>& g);

struct BoundaryAccuracy {
  double value = 0.0;
  bool degenerate = false;  // ground truth had no boundary to band around
};
BoundaryAccuracy mba(const Tensor<double>& s, const Tensor<double>& g);

struct MetricRow {
  std::string name;
  double s_measure = 0.0, f_max = 0.0, mae = 0.0, mba = 0.0;
  bool mba_degenerate = false;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  MetricRow mean;
};

MetricRow evaluate_pair(const std::string& name, const Tensor<double>& s,
                        const Tensor<double>& g);
MetricReport build_report(std::vector<MetricRow> rows);

}  // namespace pyrsal
