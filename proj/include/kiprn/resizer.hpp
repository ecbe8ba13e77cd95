#pragma once

#include <string>
#include <vector>

#include "kiprn/modules.hpp"

namespace kiprn {

enum class KernelOrder { Inversed, Forward, Uniform };
enum class Placement { First, None, Last, Resblock, All };

inline const char* to_string(KernelOrder k) {
  switch (k) {
    case KernelOrder::Inversed: return "inversed";
    case KernelOrder::Forward: return "forward";
    default: return "uniform";
  }
}

inline const char* to_string(Placement p) {
  switch (p) {
    case Placement::First: return "first";
    case Placement::None: return "none";
    case Placement::Last: return "last";
    case Placement::Resblock: return "resblock";
    default: return "all";
  }
}

struct KiprnConfig {
  // Paper-scale sizes; desk runs shrink these via desk_level_sizes().
  std::vector<int> level_sizes{300, 400, 500};
  std::vector<int> pyconv_layer1_kernels{3, 5, 7};
  std::vector<int> pyconv_layer2_kernels{1, 3};
  KernelOrder kernel_order = KernelOrder::Inversed;
  int uniform_kernel = 3;
  Placement placement = Placement::First;
  int pyconv_channels1 = 24;
  int pyconv_channels2 = 16;
  int branch_channels = 16;
  int blocks_per_branch = 2;
  bool zero_init_projection = true;

  void validate() const {
    if (level_sizes.empty()) throw ConfigError("level_sizes must be non-empty");
    for (size_t i = 0; i < level_sizes.size(); ++i) {
      if (level_sizes[i] < 8)
        throw ConfigError("pyramid size " + std::to_string(level_sizes[i]) + " too small");
      if (i > 0 && level_sizes[i] <= level_sizes[i - 1])
        throw ConfigError("level_sizes must be strictly ascending");
    }
    for (const std::vector<int>* ks : {&pyconv_layer1_kernels, &pyconv_layer2_kernels}) {
      if (ks->empty()) throw ConfigError("pyconv kernel sets must be non-empty");
      for (int k : *ks)
        if (k < 1 || k % 2 == 0)
          throw ConfigError("pyconv kernels must be positive odd, got " + std::to_string(k));
    }
    if (kernel_order == KernelOrder::Uniform && (uniform_kernel < 1 || uniform_kernel % 2 == 0))
      throw ConfigError("uniform_kernel must be a positive odd number");
    if (pyconv_channels1 < static_cast<int>(pyconv_layer1_kernels.size()) ||
        pyconv_channels2 < static_cast<int>(pyconv_layer2_kernels.size()))
      throw ConfigError("pyconv channels too small for the kernel sets");
    if (branch_channels < 3) throw ConfigError("branch_channels must be >= 3");
    if (blocks_per_branch < 1) throw ConfigError("blocks_per_branch must be >= 1");
  }
};

// Desk preset: keeps the paper's 3:4:5 size ratio at laptop-friendly cost.
inline std::vector<int> desk_level_sizes() { return {96, 128, 160}; }

// Kernel size per pyramid level (sizes ascending). The inversed order pairs
// the lowest resolution with the largest kernel; kernels are drawn from the
// odd sequence 3, 5, 7, 9, ...
inline std::vector<int> kernel_assignment(const std::vector<int>& level_sizes, KernelOrder order,
                                          int uniform_kernel = 3) {
  const int levels = static_cast<int>(level_sizes.size());
  if (levels < 1) throw ArgumentError("kernel_assignment: need at least one level");
  for (size_t i = 1; i < level_sizes.size(); ++i)
    if (level_sizes[i] <= level_sizes[i - 1])
      throw ArgumentError("kernel_assignment: level sizes must be strictly ascending");
  std::vector<int> ks(static_cast<size_t>(levels));
  switch (order) {
    case KernelOrder::Uniform:
      for (int j = 0; j < levels; ++j) ks[static_cast<size_t>(j)] = uniform_kernel;
      break;
    case KernelOrder::Forward:
      for (int j = 0; j < levels; ++j) ks[static_cast<size_t>(j)] = 3 + 2 * j;
      break;
    case KernelOrder::Inversed:
      for (int j = 0; j < levels; ++j) ks[static_cast<size_t>(j)] = 3 + 2 * (levels - 1 - j);
      break;
  }
  return ks;
}

template <typename T>
struct KiprnNet {
  KiprnConfig cfg;
  std::vector<int> assigned;

  PyConvLayer<T> ex1, ex2;
  GroupNormLayer<T> exgn1, exgn2;

  struct Branch {
    PyConvLayer<T> lift;
    std::vector<ResBlock<T>> blocks;
    Param<T>* proj_w = nullptr;
    Param<T>* proj_b = nullptr;
  };
  std::vector<Branch> branches;

  void init(ParamStore<T>& store, const KiprnConfig& config, Rng& rng) {
    cfg = config;
    cfg.validate();
    assigned = kernel_assignment(cfg.level_sizes, cfg.kernel_order, cfg.uniform_kernel);
    const bool py_extract = cfg.placement == Placement::First || cfg.placement == Placement::All;
    const bool py_all_blocks =
        cfg.placement == Placement::Resblock || cfg.placement == Placement::All;
    const std::vector<int> set1 =
        py_extract ? cfg.pyconv_layer1_kernels : std::vector<int>{3};
    const std::vector<int> set2 =
        py_extract ? cfg.pyconv_layer2_kernels : std::vector<int>{3};
    ex1.init(store, "resizer.extract1", 3, cfg.pyconv_channels1, set1, 1, rng);
    exgn1.init(store, "resizer.extract1.gn", cfg.pyconv_channels1);
    ex2.init(store, "resizer.extract2", cfg.pyconv_channels1, cfg.pyconv_channels2, set2, 1,
             rng);
    exgn2.init(store, "resizer.extract2.gn", cfg.pyconv_channels2);
    const int levels = static_cast<int>(cfg.level_sizes.size());
    branches.resize(static_cast<size_t>(levels));
    for (int j = 0; j < levels; ++j) {
      Branch& br = branches[static_cast<size_t>(j)];
      const std::string pre = "resizer.b" + std::to_string(j);
      br.lift.init(store, pre + ".lift", cfg.pyconv_channels2, cfg.branch_channels, {1}, 1, rng);
      br.blocks.resize(static_cast<size_t>(cfg.blocks_per_branch));
      for (int i = 0; i < cfg.blocks_per_branch; ++i) {
        const bool pyramidal =
            py_all_blocks || (cfg.placement == Placement::Last && i == cfg.blocks_per_branch - 1);
        const std::vector<int> k1 = pyramidal ? cfg.pyconv_layer1_kernels
                                              : std::vector<int>{assigned[static_cast<size_t>(j)]};
        const std::vector<int> k2 = pyramidal ? cfg.pyconv_layer2_kernels
                                              : std::vector<int>{assigned[static_cast<size_t>(j)]};
        br.blocks[static_cast<size_t>(i)].init(store, pre + ".res" + std::to_string(i),
                                               cfg.branch_channels, k1, k2, rng);
      }
      // Zero-init projection: an untrained resizer adds nothing, so its
      // pyramid is exactly the bilinear one.
      TensorT<T> pw = TensorT<T>::zeros({3, cfg.branch_channels, 1, 1});
      if (!cfg.zero_init_projection) pw = he_uniform<T>(rng, cfg.branch_channels, pw.dims());
      br.proj_w = store.add(pre + ".proj.w", pw, true);
      br.proj_b = store.add(pre + ".proj.b", TensorT<T>::zeros({3}), false);
    }
  }

  std::vector<Var<T>> resize_pyramid(Binder<T>& b, Var<T> x) const {
    std::vector<Var<T>> out;
    out.reserve(cfg.level_sizes.size());
    for (int s : cfg.level_sizes) out.push_back(b.tape->bilinear_resize(x, s, s));
    return out;
  }

  Var<T> extract(Binder<T>& b, Var<T> x) const {
    Var<T> h = b.tape->relu(exgn1.forward(b, ex1.forward(b, x)));
    return b.tape->relu(exgn2.forward(b, ex2.forward(b, h)));
  }

  // Compensated pyramid: per level, the shared features are resized, pushed
  // through that level's branch, projected back to image space and added to
  // the bilinear level.
  std::vector<Var<T>> forward(Binder<T>& b, Var<T> x) const {
    if (x.value().rank() != 4 || x.value().dim(1) != 3)
      throw ShapeError("resizer expects a 3-channel NCHW batch, got " + dims_str(x.value().dims()));
    std::vector<Var<T>> pyramid = resize_pyramid(b, x);
    Var<T> f = extract(b, x);
    std::vector<Var<T>> out;
    out.reserve(pyramid.size());
    for (size_t j = 0; j < pyramid.size(); ++j) {
      const int s = cfg.level_sizes[j];
      const Branch& br = branches[j];
      Var<T> h = b.tape->bilinear_resize(f, s, s);
      h = br.lift.forward(b, h);
      for (const ResBlock<T>& blk : br.blocks) h = blk.forward(b, h);
      Var<T> r = b.tape->conv2d(h, b(br.proj_w), b(br.proj_b), 1, 0);
      out.push_back(b.tape->add(r, pyramid[j]));
    }
    return out;
  }
};

}  // namespace kiprn
