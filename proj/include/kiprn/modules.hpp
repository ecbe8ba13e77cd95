#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kiprn/autograd.hpp"
#include "kiprn/optim.hpp"
#include "kiprn/rng.hpp"

namespace kiprn {

template <typename T>
struct Param {
  std::string name;
  TensorT<T> value;
  bool decay = false;  // weight decay applies to conv/linear weights only
  AdamWState<T> state;
};

template <typename T>
class ParamStore {
 public:
  Param<T>* add(const std::string& name, TensorT<T> value, bool decay) {
    for (const auto& p : params_)
      if (p->name == name) throw ArgumentError("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Param<T>>());
    Param<T>* p = params_.back().get();
    p->name = name;
    p->value = std::move(value);
    p->decay = decay;
    return p;
  }

  std::vector<Param<T>*> all() const {
    std::vector<Param<T>*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }

  Param<T>* find(const std::string& name) const {
    for (const auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  int64_t count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> params_;
};

// Binds store parameters into a tape as leaves, once each, so shared weights
// accumulate one gradient no matter how many times they are used.
template <typename T>
struct Binder {
  Tape<T>* tape = nullptr;
  bool train = true;
  std::unordered_map<const Param<T>*, Var<T>> bound;

  Var<T> operator()(Param<T>* p) {
    auto it = bound.find(p);
    if (it != bound.end()) return it->second;
    Var<T> v = tape->leaf(p->value, train);
    bound.emplace(p, v);
    return v;
  }
};

template <typename T>
void apply_adamw(ParamStore<T>& store, Binder<T>& binder, const AdamWHyper& h) {
  for (Param<T>* p : store.all()) {
    auto it = binder.bound.find(p);
    if (it == binder.bound.end()) continue;
    adamw_step(p->value, binder.tape->grad(it->second), p->state, h, p->decay);
  }
}

template <typename T>
TensorT<T> he_uniform(Rng& rng, int fan_in, const std::vector<int>& dims) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  TensorT<T> t = TensorT<T>::zeros(dims);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

// Largest group count <= 8 that divides the channel count.
inline int gn_groups(int channels) {
  int g = std::min(8, channels);
  while (channels % g != 0) --g;
  return g;
}

template <typename T>
struct GroupNormLayer {
  Param<T>* gamma = nullptr;
  Param<T>* beta = nullptr;
  int groups = 1;
  double eps = 1e-5;

  void init(ParamStore<T>& store, const std::string& prefix, int channels) {
    groups = gn_groups(channels);
    gamma = store.add(prefix + ".gamma", TensorT<T>::full({channels}, T(1)), false);
    beta = store.add(prefix + ".beta", TensorT<T>::zeros({channels}), false);
  }

  Var<T> forward(Binder<T>& b, Var<T> x) const {
    return b.tape->group_norm(x, b(gamma), b(beta), groups, eps);
  }
};

// Pyramidal convolution: the output channels are split across the kernel
// sizes (first cout % k taps take one extra channel), every tap sees the full
// input, and the tap outputs are concatenated. A single-kernel set degrades
// to a plain convolution.
template <typename T>
struct PyConvLayer {
  std::vector<int> kernels;
  std::vector<Param<T>*> weights;
  std::vector<Param<T>*> biases;
  int stride = 1;

  static std::vector<int> split_channels(int cout, int taps) {
    std::vector<int> out(static_cast<size_t>(taps), cout / taps);
    for (int i = 0; i < cout % taps; ++i) out[static_cast<size_t>(i)] += 1;
    return out;
  }

  void init(ParamStore<T>& store, const std::string& prefix, int cin, int cout,
            std::vector<int> kernel_sizes, int stride_, Rng& rng) {
    if (kernel_sizes.empty()) throw ArgumentError(prefix + ": empty kernel set");
    if (cout < static_cast<int>(kernel_sizes.size()))
      throw ArgumentError(prefix + ": " + std::to_string(cout) + " channels for " +
                          std::to_string(kernel_sizes.size()) + " kernel taps");
    kernels = std::move(kernel_sizes);
    stride = stride_;
    const std::vector<int> couts = split_channels(cout, static_cast<int>(kernels.size()));
    for (size_t i = 0; i < kernels.size(); ++i) {
      const int k = kernels[i];
      const std::string tag = prefix + ".k" + std::to_string(k);
      weights.push_back(store.add(tag + ".w", he_uniform<T>(rng, cin * k * k,
                                                            {couts[i], cin, k, k}),
                                  true));
      biases.push_back(store.add(tag + ".b", TensorT<T>::zeros({couts[i]}), false));
    }
  }

  Var<T> forward(Binder<T>& b, Var<T> x) const {
    std::vector<Var<T>> parts;
    parts.reserve(kernels.size());
    for (size_t i = 0; i < kernels.size(); ++i) {
      const int k = kernels[i];
      parts.push_back(b.tape->conv2d(x, b(weights[i]), b(biases[i]), stride, k / 2));
    }
    if (parts.size() == 1) return parts[0];
    return b.tape->concat_channels(parts);
  }
};

template <typename T>
struct LinearLayer {
  Param<T>* weight = nullptr;
  Param<T>* bias = nullptr;

  void init(ParamStore<T>& store, const std::string& prefix, int in, int out, Rng& rng) {
    weight = store.add(prefix + ".w", he_uniform<T>(rng, in, {out, in}), true);
    bias = store.add(prefix + ".b", TensorT<T>::zeros({out}), false);
  }

  Var<T> forward(Binder<T>& b, Var<T> x) const {
    return b.tape->linear(x, b(weight), b(bias));
  }
};

// conv - norm - relu - conv - norm, identity skip, relu. Stride 1, same
// padding, equal in/out channels. Each conv takes its own kernel set so the
// pyramidal placement variants reuse this block.
template <typename T>
struct ResBlock {
  PyConvLayer<T> conv1, conv2;
  GroupNormLayer<T> gn1, gn2;

  void init(ParamStore<T>& store, const std::string& prefix, int channels,
            const std::vector<int>& ks1, const std::vector<int>& ks2, Rng& rng) {
    conv1.init(store, prefix + ".conv1", channels, channels, ks1, 1, rng);
    gn1.init(store, prefix + ".gn1", channels);
    conv2.init(store, prefix + ".conv2", channels, channels, ks2, 1, rng);
    gn2.init(store, prefix + ".gn2", channels);
  }

  Var<T> forward(Binder<T>& b, Var<T> x) const {
    Var<T> h = b.tape->relu(gn1.forward(b, conv1.forward(b, x)));
    h = gn2.forward(b, conv2.forward(b, h));
    return b.tape->relu(b.tape->add(h, x));
  }
};

}  // namespace kiprn
