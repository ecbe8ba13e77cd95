#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "kiprn/tensor.hpp"

namespace kiprn {

struct AdamWHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

template <typename T>
struct AdamWState {
  TensorT<T> m;
  TensorT<T> v;
  int64_t t = 0;
};

// Decoupled weight decay is applied to the parameter before the Adam update;
// decay never enters the moment estimates.
template <typename T>
void adamw_step(TensorT<T>& p, const TensorT<T>& g, AdamWState<T>& s, const AdamWHyper& h,
                bool decay) {
  if (!p.same_dims(g)) throw ShapeError("adamw: grad dims " + dims_str(g.dims()) +
                                        " do not match param " + dims_str(p.dims()));
  if (!s.m.defined()) {
    s.m = TensorT<T>::zeros(p.dims());
    s.v = TensorT<T>::zeros(p.dims());
    s.t = 0;
  }
  s.t += 1;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(s.t));
  for (int64_t i = 0; i < p.numel(); ++i) {
    double pi = static_cast<double>(p[i]);
    const double gi = static_cast<double>(g[i]);
    if (decay) pi -= h.lr * h.weight_decay * pi;
    const double mi = h.beta1 * static_cast<double>(s.m[i]) + (1.0 - h.beta1) * gi;
    const double vi = h.beta2 * static_cast<double>(s.v[i]) + (1.0 - h.beta2) * gi * gi;
    s.m[i] = static_cast<T>(mi);
    s.v[i] = static_cast<T>(vi);
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    p[i] = static_cast<T>(pi - h.lr * mhat / (std::sqrt(vhat) + h.eps));
  }
}

}  // namespace kiprn
