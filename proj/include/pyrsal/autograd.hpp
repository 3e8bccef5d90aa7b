#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "pyrsal/tensor.hpp"

namespace pyrsal {

// Reverse-mode tape. Var<T> is a shared node holding a value, an optional
// gradient, and a backward closure that scatters into its parents.
// Templated on the scalar so tests can run the whole stack in double.

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on demand, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.n, value.c, value.h, value.w);
    return grad;
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev; }
};

template <typename T>
Var<T> make_var(Tensor<T> value, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

namespace ag {

// Wires the node into the tape when grad mode is on and a parent needs grads.
template <typename T>
Var<T> attach(Tensor<T> value, std::vector<Var<T>> parents,
              std::function<void(Node<T>&)> backward_fn) {
  auto out = std::make_shared<Node<T>>();
  out->value = std::move(value);
  if (grad_mode_flag()) {
    bool need = false;
    for (auto& p : parents)
      if (p && p->requires_grad) need = true;
    if (need) {
      out->requires_grad = true;
      out->parents = std::move(parents);
      out->backward_fn = std::move(backward_fn);
    }
  }
  return out;
}

template <typename T>
void backward(const Var<T>& root) {
  if (!root) throw std::invalid_argument("backward: null root");
  if (root->value.size() != 1) throw std::invalid_argument("backward: root must be scalar");
  if (!root->requires_grad) return;

  // iterative topo order over the parent DAG
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.push_back({root.get(), 0});
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next == 0 && seen.count(node)) {
      stack.pop_back();
      continue;
    }
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next].get();
      ++next;
      if (p && p->requires_grad && !seen.count(p)) stack.push_back({p, 0});
    } else {
      seen.insert(node);
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad.data[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && node->grad.size() == node->value.size())
      node->backward_fn(*node);
  }
}

// ---- elementwise ----

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  check_same_shape(a->value, b->value, "add");
  Tensor<T> v = a->value;
  for (std::size_t i = 0; i < v.size(); ++i) v.data[i] += b->value.data[i];
  return attach<T>(std::move(v), {a, b}, [a, b](Node<T>& o) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += o.grad.data[i];
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += o.grad.data[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  check_same_shape(a->value, b->value, "sub");
  Tensor<T> v = a->value;
  for (std::size_t i = 0; i < v.size(); ++i) v.data[i] -= b->value.data[i];
  return attach<T>(std::move(v), {a, b}, [a, b](Node<T>& o) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += o.grad.data[i];
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] -= o.grad.data[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  check_same_shape(a->value, b->value, "mul");
  Tensor<T> v = a->value;
  for (std::size_t i = 0; i < v.size(); ++i) v.data[i] *= b->value.data[i];
  return attach<T>(std::move(v), {a, b}, [a, b](Node<T>& o) {
    if (a->requires_grad) {
      auto& g = a->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += o.grad.data[i] * b->value.data[i];
    }
    if (b->requires_grad) {
      auto& g = b->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += o.grad.data[i] * a->value.data[i];
    }
  });
}

template <typename T>
Var<T> mul_scalar(Var<T> a, T s) {
  Tensor<T> v = a->value;
  for (auto& x : v.data) x *= s;
  return attach<T>(std::move(v), {a}, [a, s](Node<T>& o) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += o.grad.data[i] * s;
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T s) {
  Tensor<T> v = a->value;
  for (auto& x : v.data) x += s;
  return attach<T>(std::move(v), {a}, [a](Node<T>& o) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += o.grad.data[i];
  });
}

// elementwise multiply by a constant map (no gradient into the map)
template <typename T>
Var<T> mul_const(Var<T> a, Tensor<T> m) {
  check_same_shape(a->value, m, "mul_const");
  Tensor<T> v = a->value;
  for (std::size_t i = 0; i < v.size(); ++i) v.data[i] *= m.data[i];
  auto mp = std::make_shared<Tensor<T>>(std::move(m));
  return attach<T>(std::move(v), {a}, [a, mp](Node<T>& o) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += o.grad.data[i] * mp->data[i];
  });
}

// map minus broadcast scalar variable (scalar var has shape (1,1,1,1))
template <typename T>
Var<T> bsub(Var<T> map, Var<T> s) {
  if (s->value.size() != 1) throw std::invalid_argument("bsub: scalar var expected");
  Tensor<T> v = map->value;
  T sv = s->value.data[0];
  for (auto& x : v.data) x -= sv;
  return attach<T>(std::move(v), {map, s}, [map, s](Node<T>& o) {
    if (map->requires_grad) {
      auto& g = map->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += o.grad.data[i];
    }
    if (s->requires_grad) {
      auto& g = s->ensure_grad();
      T acc = T(0);
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad.data[i];
      g.data[0] -= acc;
    }
  });
}

// broadcast scalar variable minus map
template <typename T>
Var<T> brsub(Var<T> s, Var<T> map) {
  if (s->value.size() != 1) throw std::invalid_argument("brsub: scalar var expected");
  Tensor<T> v = map->value;
  T sv = s->value.data[0];
  for (auto& x : v.data) x = sv - x;
  return attach<T>(std::move(v), {s, map}, [s, map](Node<T>& o) {
    if (s->requires_grad) {
      auto& g = s->ensure_grad();
      T acc = T(0);
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad.data[i];
      g.data[0] += acc;
    }
    if (map->requires_grad) {
      auto& g = map->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] -= o.grad.data[i];
    }
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tensor<T> v = a->value;
  for (auto& x : v.data) x = x > T(0) ? x : T(0);
  return attach<T>(std::move(v), {a}, [a](Node<T>& o) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (a->value.data[i] > T(0)) g.data[i] += o.grad.data[i];
  });
}

template <typename T>
Var<T> absval(Var<T> a) {
  Tensor<T> v = a->value;
  for (auto& x : v.data) x = std::abs(x);
  return attach<T>(std::move(v), {a}, [a](Node<T>& o) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      T x = a->value.data[i];
      if (x > T(0))
        g.data[i] += o.grad.data[i];
      else if (x < T(0))
        g.data[i] -= o.grad.data[i];
    }
  });
}

// gradient passes where lo <= x <= hi
template <typename T>
Var<T> clampv(Var<T> a, T lo, T hi) {
  Tensor<T> v = a->value;
  for (auto& x : v.data) x = std::min(hi, std::max(lo, x));
  return attach<T>(std::move(v), {a}, [a, lo, hi](Node<T>& o) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      T x = a->value.data[i];
      if (x >= lo && x <= hi) g.data[i] += o.grad.data[i];
    }
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> v = a->value;
  for (auto& x : v.data) {
    if (x >= T(0)) {
      T e = std::exp(-x);
      x = T(1) / (T(1) + e);
    } else {
      T e = std::exp(x);
      x = e / (T(1) + e);
    }
  }
  auto out = attach<T>(std::move(v), {a}, [a](Node<T>& o) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      T y = o.value.data[i];
      g.data[i] += o.grad.data[i] * y * (T(1) - y);
    }
  });
  return out;
}

// log(x / (1-x)); callers clamp x away from {0,1} first
template <typename T>
Var<T> logit(Var<T> a) {
  Tensor<T> v = a->value;
  for (auto& x : v.data) x = std::log(x / (T(1) - x));
  return attach<T>(std::move(v), {a}, [a](Node<T>& o) {
    auto& g = a->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      T x = a->value.data[i];
      g.data[i] += o.grad.data[i] / (x * (T(1) - x));
    }
  });
}

// binary cross entropy against a constant target map, elementwise;
// prediction clamped to [eps, 1-eps] inside
template <typename T>
Var<T> bce_map(Var<T> s, Tensor<T> target, T eps = T(1e-6)) {
  check_same_shape(s->value, target, "bce_map");
  Tensor<T> v = s->value;
  for (std::size_t i = 0; i < v.size(); ++i) {
    T p = std::min(T(1) - eps, std::max(eps, v.data[i]));
    T g = target.data[i];
    v.data[i] = -(g * std::log(p) + (T(1) - g) * std::log(T(1) - p));
  }
  auto tp = std::make_shared<Tensor<T>>(std::move(target));
  return attach<T>(std::move(v), {s}, [s, tp, eps](Node<T>& o) {
    auto& gr = s->ensure_grad();
    for (std::size_t i = 0; i < gr.size(); ++i) {
      T raw = s->value.data[i];
      if (raw < eps || raw > T(1) - eps) continue;  // clamped region, zero slope
      T g = tp->data[i];
      gr.data[i] += o.grad.data[i] * (-g / raw + (T(1) - g) / (T(1) - raw));
    }
  });
}

template <typename T>
Var<T> sum_all(Var<T> a) {
  Tensor<T> v(1, 1, 1, 1);
  T acc = T(0);
  for (auto x : a->value.data) acc += x;
  v.data[0] = acc;
  return attach<T>(std::move(v), {a}, [a](Node<T>& o) {
    auto& g = a->ensure_grad();
    T go = o.grad.data[0];
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += go;
  });
}

template <typename T>
Var<T> mean_all(Var<T> a) {
  return mul_scalar(sum_all(a), T(1) / T(a->value.size()));
}

template <typename T>
Var<T> detach(Var<T> a) {
  auto out = std::make_shared<Node<T>>();
  out->value = a->value;
  out->requires_grad = false;
  return out;
}

}  // namespace ag
}  // namespace pyrsal
