#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pyrsal/module.hpp"

namespace pyrsal {

struct TrainSchedule {
  int batch_size = 6;
  int max_epochs = 60;
  double base_lr = 1e-5;
  int warmup_iters = 12000;
  double poly_power = 0.9;
};

// linear warmup into polynomial decay; zero at iter 0 and at iter_max
inline double lr_at(const TrainSchedule& s, int64_t iter, int64_t iter_max) {
  double warm = s.warmup_iters > 0
                    ? std::min(1.0, double(iter) / double(s.warmup_iters))
                    : 1.0;
  double frac = iter_max > 0 ? double(iter) / double(iter_max) : 1.0;
  return s.base_lr * warm * (1.0 - std::pow(frac, s.poly_power));
}

template <typename T>
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<Var<T>> params;
  std::vector<Tensor<T>> m, v;
  int64_t t = 0;

  explicit Adam(std::vector<Var<T>> ps) : params(std::move(ps)) {
    for (const auto& p : params) {
      m.emplace_back(p->value.n, p->value.c, p->value.h, p->value.w, T(0));
      v.emplace_back(p->value.n, p->value.c, p->value.h, p->value.w, T(0));
    }
  }

  void zero_grad() {
    for (auto& p : params) p->grad = Tensor<T>();
  }

  void step(double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, double(t));
    const double c2 = 1.0 - std::pow(beta2, double(t));
    for (size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (p->grad.size() != p->value.size()) continue;  // untouched this step
      for (size_t j = 0; j < p->value.data.size(); ++j) {
        double g = p->grad.data[j];
        double mm = beta1 * m[i].data[j] + (1.0 - beta1) * g;
        double vv = beta2 * v[i].data[j] + (1.0 - beta2) * g * g;
        m[i].data[j] = static_cast<T>(mm);
        v[i].data[j] = static_cast<T>(vv);
        p->value.data[j] -=
            static_cast<T>(lr * (mm / c1) / (std::sqrt(vv / c2) + eps));
      }
    }
  }
};

}  // namespace pyrsal
