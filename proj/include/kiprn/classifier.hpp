#pragma once

#include <string>
#include <vector>

#include "kiprn/modules.hpp"

namespace kiprn {

struct BackboneConfig {
  int in_channels = 3;
  int stem_channels = 16;
  std::vector<int> stage_channels{16, 32, 64};
  int blocks_per_stage = 1;
  int num_classes = 7;

  void validate() const {
    if (in_channels < 1 || stem_channels < 1) throw ConfigError("backbone channels must be >= 1");
    if (stage_channels.empty()) throw ConfigError("stage_channels must be non-empty");
    for (int c : stage_channels)
      if (c < 1) throw ConfigError("stage channel counts must be >= 1");
    if (blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  }
};

// Shared-weight CNN applied to every pyramid level. Stem conv, then one
// stride-2 downsample plus residual blocks per stage, global average pool
// and a linear head. The pre-pool feature maps are exposed for CAM.
template <typename T>
struct Backbone {
  BackboneConfig cfg;
  PyConvLayer<T> stem;
  GroupNormLayer<T> stem_gn;
  struct Stage {
    PyConvLayer<T> down;
    GroupNormLayer<T> gn;
    std::vector<ResBlock<T>> blocks;
  };
  std::vector<Stage> stages;
  LinearLayer<T> head;

  void init(ParamStore<T>& store, const BackboneConfig& config, Rng& rng) {
    cfg = config;
    cfg.validate();
    stem.init(store, "backbone.stem", cfg.in_channels, cfg.stem_channels, {3}, 1, rng);
    stem_gn.init(store, "backbone.stem.gn", cfg.stem_channels);
    int cin = cfg.stem_channels;
    stages.resize(cfg.stage_channels.size());
    for (size_t s = 0; s < cfg.stage_channels.size(); ++s) {
      Stage& st = stages[s];
      const int cout = cfg.stage_channels[s];
      const std::string pre = "backbone.s" + std::to_string(s);
      st.down.init(store, pre + ".down", cin, cout, {3}, 2, rng);
      st.gn.init(store, pre + ".gn", cout);
      st.blocks.resize(static_cast<size_t>(cfg.blocks_per_stage));
      for (int i = 0; i < cfg.blocks_per_stage; ++i)
        st.blocks[static_cast<size_t>(i)].init(store, pre + ".res" + std::to_string(i), cout, {3},
                                               {3}, rng);
      cin = cout;
    }
    head.init(store, "backbone.head", cin, cfg.num_classes, rng);
  }

  struct Out {
    Var<T> logits;
    Var<T> features;  // pre-pool maps of the last stage
  };

  Out forward(Binder<T>& b, Var<T> x) const {
    if (x.value().rank() != 4 || x.value().dim(2) < 8 || x.value().dim(3) < 8)
      throw ShapeError("backbone needs NCHW input of at least 8x8, got " +
                       dims_str(x.value().dims()));
    Var<T> h = b.tape->relu(stem_gn.forward(b, stem.forward(b, x)));
    for (const Stage& st : stages) {
      h = b.tape->relu(st.gn.forward(b, st.down.forward(b, h)));
      for (const ResBlock<T>& blk : st.blocks) h = blk.forward(b, h);
    }
    Var<T> pooled = b.tape->global_avg_pool(h);
    return {head.forward(b, pooled), h};
  }

  // Summed-logit multiscale head: logits from every level are added before
  // the softmax.
  Var<T> multiscale_logits(Binder<T>& b, const std::vector<Var<T>>& pyramid,
                           std::vector<Var<T>>* features_out = nullptr) const {
    if (pyramid.empty()) throw ArgumentError("multiscale_logits: empty pyramid");
    Var<T> total;
    for (const Var<T>& level : pyramid) {
      Out o = forward(b, level);
      if (features_out) features_out->push_back(o.features);
      total = total.defined() ? b.tape->add(total, o.logits) : o.logits;
    }
    return total;
  }
};

// Raw class activation map: the class row of the head weight combines the
// channel maps, negatives are clamped away. Resize to the input, then
// cam_normalize, to get the displayable heatmap.
template <typename T>
TensorT<T> cam_map(const TensorT<T>& features, const TensorT<T>& head_w, int sample, int cls) {
  if (features.rank() != 4) throw ShapeError("cam expects NCHW features");
  const int c = features.dim(1), h = features.dim(2), w = features.dim(3);
  if (head_w.rank() != 2 || head_w.dim(1) != c)
    throw ShapeError("cam head weight dims " + dims_str(head_w.dims()) +
                     " do not match feature channels " + std::to_string(c));
  if (sample < 0 || sample >= features.dim(0)) throw ArgumentError("cam sample out of range");
  if (cls < 0 || cls >= head_w.dim(0)) throw ArgumentError("cam class out of range");
  TensorT<T> m = TensorT<T>::zeros({h, w});
  const int64_t hw = static_cast<int64_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    const T wv = head_w[static_cast<int64_t>(cls) * c + ci];
    const T* f = features.ptr() + (static_cast<int64_t>(sample) * c + ci) * hw;
    for (int64_t i = 0; i < hw; ++i) m[i] += wv * f[i];
  }
  for (int64_t i = 0; i < hw; ++i) m[i] = std::max(m[i], T(0));
  return m;
}

// Min-max rescale to [0, 1]; an all-equal map has nothing to show and
// normalizes to zeros.
template <typename T>
TensorT<T> cam_normalize(const TensorT<T>& m) {
  if (m.numel() == 0) throw ShapeError("cam_normalize: empty map");
  T lo = m[0], hi = m[0];
  for (int64_t i = 1; i < m.numel(); ++i) {
    lo = std::min(lo, m[i]);
    hi = std::max(hi, m[i]);
  }
  if (hi <= lo) return TensorT<T>::zeros(m.dims());
  TensorT<T> out = TensorT<T>::zeros(m.dims());
  const T span = hi - lo;
  for (int64_t i = 0; i < m.numel(); ++i) out[i] = (m[i] - lo) / span;
  return out;
}

}  // namespace kiprn
