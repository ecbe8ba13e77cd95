#include "doctest.h"

#include <cmath>
#include <numeric>
#include <vector>

#include "kiprn/classifier.hpp"

using namespace kiprn;

namespace {

BackboneConfig tiny_bcfg() {
  BackboneConfig cfg;
  cfg.stem_channels = 4;
  cfg.stage_channels = {4, 6};
  cfg.num_classes = 5;
  return cfg;
}

template <typename T>
TensorT<T> rand_tensor(Rng& rng, const std::vector<int>& dims, double lo = -1.0, double hi = 1.0) {
  TensorT<T> t = TensorT<T>::zeros(dims);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Scalar half-pixel bilinear for the CAM compositional oracle.
std::vector<double> bilinear_ref_1ch(const std::vector<double>& x, int ih, int iw, int oh,
                                     int ow) {
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  auto src = [](int d, int in, int on) {
    double s = (d + 0.5) * static_cast<double>(in) / on - 0.5;
    return std::min(std::max(s, 0.0), static_cast<double>(in - 1));
  };
  for (int y = 0; y < oh; ++y)
    for (int z = 0; z < ow; ++z) {
      const double sy = src(y, ih, oh), sx = src(z, iw, ow);
      const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
      const int y1 = std::min(y0 + 1, ih - 1), x1 = std::min(x0 + 1, iw - 1);
      const double fy = sy - y0, fx = sx - x0;
      out[static_cast<size_t>(y) * ow + z] =
          (1 - fy) * ((1 - fx) * x[static_cast<size_t>(y0) * iw + x0] +
                      fx * x[static_cast<size_t>(y0) * iw + x1]) +
          fy * ((1 - fx) * x[static_cast<size_t>(y1) * iw + x0] +
                fx * x[static_cast<size_t>(y1) * iw + x1]);
    }
  return out;
}

}  // namespace

TEST_CASE("gn_groups picks the largest divisor of C up to 8") {
  CHECK(gn_groups(1) == 1);
  CHECK(gn_groups(3) == 3);
  CHECK(gn_groups(6) == 6);
  CHECK(gn_groups(7) == 7);
  CHECK(gn_groups(10) == 5);
  CHECK(gn_groups(16) == 8);
  CHECK(gn_groups(24) == 8);
  CHECK(gn_groups(9) == 3);
}

TEST_CASE("backbone config validation") {
  auto bad = [](auto mutate) {
    BackboneConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  };
  bad([](BackboneConfig& c) { c.stem_channels = 0; });
  bad([](BackboneConfig& c) { c.stage_channels = {}; });
  bad([](BackboneConfig& c) { c.stage_channels = {8, 0}; });
  bad([](BackboneConfig& c) { c.blocks_per_stage = 0; });
  bad([](BackboneConfig& c) { c.num_classes = 1; });
  CHECK_NOTHROW(BackboneConfig{}.validate());
}

TEST_CASE("zeroed head yields zero logits and a uniform posterior") {
  ParamStore<float> store;
  Rng rng(501);
  Backbone<float> net;
  net.init(store, tiny_bcfg(), rng);
  Param<float>* hw = store.find("backbone.head.w");
  Param<float>* hb = store.find("backbone.head.b");
  REQUIRE(hw != nullptr);
  REQUIRE(hb != nullptr);
  for (int64_t i = 0; i < hw->value.numel(); ++i) hw->value[i] = 0.0f;
  for (int64_t i = 0; i < hb->value.numel(); ++i) hb->value[i] = 0.0f;

  Tape<float> tape;
  Binder<float> b{&tape};
  auto out = net.forward(b, tape.leaf(rand_tensor<float>(rng, {2, 3, 16, 16}), false));
  CHECK(out.logits.value().dims() == std::vector<int>{2, 5});
  for (int64_t i = 0; i < out.logits.value().numel(); ++i)
    CHECK(out.logits.value()[i] == 0.0f);
  TensorT<float> probs = kernels::softmax_rows(out.logits.value());
  for (int64_t i = 0; i < probs.numel(); ++i)
    CHECK(probs[i] == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("one weight set accepts any admissible input size") {
  ParamStore<float> store;
  Rng rng(502);
  Backbone<float> net;
  net.init(store, tiny_bcfg(), rng);
  const size_t n_params = store.all().size();

  Tape<float> tape;
  Binder<float> b{&tape};
  for (int side : {8, 13, 96, 160}) {
    auto out = net.forward(b, tape.leaf(rand_tensor<float>(rng, {1, 3, side, side}), false));
    CHECK(out.logits.value().dims() == std::vector<int>{1, 5});
    CHECK(all_finite(out.logits.value()));
    CHECK(out.features.value().dim(1) == 6);
  }
  CHECK(store.all().size() == n_params);

  CHECK_THROWS_AS(net.forward(b, tape.leaf(TensorT<float>::zeros({1, 3, 7, 8}), false)),
                  ShapeError);
  CHECK_THROWS_AS(net.forward(b, tape.leaf(TensorT<float>::zeros({1, 3, 8, 4}), false)),
                  ShapeError);
}

// Single-stage, single-channel net with delta-kernel convs so every step has
// a closed form this test recomputes with plain double loops.
TEST_CASE("handcrafted single-channel backbone matches a manual transcription") {
  BackboneConfig cfg;
  cfg.stem_channels = 1;
  cfg.stage_channels = {1};
  cfg.blocks_per_stage = 1;
  cfg.num_classes = 2;
  ParamStore<float> store;
  Rng rng(503);
  Backbone<float> net;
  net.init(store, cfg, rng);

  auto set_delta = [&](const std::string& name, int cin, double scale) {
    Param<float>* p = store.find(name);
    REQUIRE(p != nullptr);
    for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = 0.0f;
    // center tap of an odd kernel; weight layout [cout, cin, k, k]
    const int k = p->value.dim(2);
    for (int c = 0; c < cin; ++c)
      p->value[(static_cast<int64_t>(c) * k + k / 2) * k + k / 2] = static_cast<float>(scale);
  };
  set_delta("backbone.stem.k3.w", 3, 1.0);            // stem: sum of the rgb channels
  set_delta("backbone.s0.down.k3.w", 1, 1.0);         // stride-2: even-coordinate subsample
  set_delta("backbone.s0.res0.conv1.k3.w", 1, 2.0);   // resblock doubles, then
  set_delta("backbone.s0.res0.conv2.k3.w", 1, -1.0);  // negates
  Param<float>* hw = store.find("backbone.head.w");
  Param<float>* hb = store.find("backbone.head.b");
  hw->value[0] = 1.5f;
  hw->value[1] = -0.5f;
  hb->value[0] = 0.25f;
  hb->value[1] = 0.0f;

  Rng drng(504);
  TensorT<float> x = rand_tensor<float>(drng, {1, 3, 8, 8}, -1.0, 1.0);

  Tape<float> tape;
  Binder<float> b{&tape};
  auto out = net.forward(b, tape.leaf(x, false));

  // --- transcription in plain doubles ---
  auto gn1 = [](std::vector<double>& v) {  // one channel, one group, gamma 1 beta 0
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0;
    for (double e : v) var += (e - mean) * (e - mean);
    var /= static_cast<double>(v.size());
    for (double& e : v) e = (e - mean) / std::sqrt(var + 1e-5);
  };
  std::vector<double> g(64);
  for (int i = 0; i < 64; ++i)
    g[static_cast<size_t>(i)] = static_cast<double>(x[i]) + x[64 + i] + x[128 + i];
  gn1(g);
  for (double& e : g) e = std::max(e, 0.0);  // stem relu
  std::vector<double> d(16);                 // stride-2 delta conv picks (2y, 2x)
  for (int y = 0; y < 4; ++y)
    for (int z = 0; z < 4; ++z)
      d[static_cast<size_t>(y) * 4 + z] = g[static_cast<size_t>(2 * y) * 8 + 2 * z];
  gn1(d);
  for (double& e : d) e = std::max(e, 0.0);  // stage relu
  std::vector<double> r = d;                 // resblock: conv1 ×2, gn, relu
  for (double& e : r) e *= 2.0;
  gn1(r);
  for (double& e : r) e = std::max(e, 0.0);
  for (double& e : r) e = -e;  // conv2 × -1, gn, add skip, relu
  gn1(r);
  for (size_t i = 0; i < r.size(); ++i) r[i] = std::max(r[i] + d[i], 0.0);
  const double pooled = std::accumulate(r.begin(), r.end(), 0.0) / 16.0;
  const double want0 = 1.5 * pooled + 0.25;
  const double want1 = -0.5 * pooled;

  CHECK(std::abs(out.logits.value()[0] - want0) < 5e-4);
  CHECK(std::abs(out.logits.value()[1] - want1) < 5e-4);
}

TEST_CASE("multiscale head sums per-level logits in ascending order") {
  ParamStore<float> store;
  Rng rng(505);
  Backbone<float> net;
  net.init(store, tiny_bcfg(), rng);

  Tape<float> tape;
  Binder<float> b{&tape};
  std::vector<Var<float>> pyr;
  for (int side : {9, 12, 16})
    pyr.push_back(tape.leaf(rand_tensor<float>(rng, {2, 3, side, side}, 0.0, 1.0), false));

  // m = 1 degenerates to the plain forward.
  Var<float> single = net.multiscale_logits(b, {pyr[0]});
  auto direct = net.forward(b, pyr[0]);
  for (int64_t i = 0; i < single.value().numel(); ++i)
    CHECK(single.value()[i] == direct.logits.value()[i]);

  std::vector<Var<float>> feats;
  Var<float> total = net.multiscale_logits(b, pyr, &feats);
  CHECK(feats.size() == 3);

  // Same-order manual sum is bitwise identical; permutations only move
  // float rounding.
  std::vector<TensorT<float>> per_level;
  for (const Var<float>& lvl : pyr) per_level.push_back(net.forward(b, lvl).logits.value());
  for (int64_t i = 0; i < total.value().numel(); ++i) {
    const float asc = (per_level[0][i] + per_level[1][i]) + per_level[2][i];
    const float perm = (per_level[2][i] + per_level[0][i]) + per_level[1][i];
    CHECK(total.value()[i] == asc);
    CHECK(std::abs(total.value()[i] - perm) <= 1e-5);
  }

  CHECK_THROWS_AS(net.multiscale_logits(b, {}), ArgumentError);
}

TEST_CASE("softmax posterior is shift invariant in the argmax") {
  Rng rng(506);
  TensorT<float> logits = rand_tensor<float>(rng, {4, 7}, -3.0, 3.0);
  TensorT<float> shifted = logits.clone();
  for (int n = 0; n < 4; ++n)
    for (int c = 0; c < 7; ++c) shifted[n * 7 + c] += 11.25f;
  TensorT<float> p0 = kernels::softmax_rows(logits);
  TensorT<float> p1 = kernels::softmax_rows(shifted);
  for (int n = 0; n < 4; ++n) {
    int a0 = 0, a1 = 0;
    double s0 = 0, s1 = 0;
    for (int c = 0; c < 7; ++c) {
      if (p0[n * 7 + c] > p0[n * 7 + a0]) a0 = c;
      if (p1[n * 7 + c] > p1[n * 7 + a1]) a1 = c;
      s0 += p0[n * 7 + c];
      s1 += p1[n * 7 + c];
      CHECK(p0[n * 7 + c] == doctest::Approx(p1[n * 7 + c]).epsilon(1e-4));
    }
    CHECK(a0 == a1);
    CHECK(s0 == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(s1 == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("cam_map is the relu of the class-weighted channel sum") {
  Rng rng(507);
  TensorT<float> feats = rand_tensor<float>(rng, {2, 3, 4, 5});
  TensorT<float> head_w = rand_tensor<float>(rng, {4, 3});

  TensorT<float> m = cam_map(feats, head_w, 1, 2);
  REQUIRE(m.dims() == std::vector<int>{4, 5});
  for (int y = 0; y < 4; ++y)
    for (int z = 0; z < 5; ++z) {
      double want = 0;
      for (int c = 0; c < 3; ++c)
        want += static_cast<double>(head_w[2 * 3 + c]) * feats[((1 * 3 + c) * 4 + y) * 5 + z];
      want = std::max(want, 0.0);
      CHECK(m[y * 5 + z] == doctest::Approx(want).epsilon(1e-5));
    }

  CHECK_THROWS_AS(cam_map(TensorT<float>::zeros({3, 4, 5}), head_w, 0, 0), ShapeError);
  CHECK_THROWS_AS(cam_map(feats, TensorT<float>::zeros({4, 9}), 0, 0), ShapeError);
  CHECK_THROWS_AS(cam_map(feats, head_w, 2, 0), ArgumentError);
  CHECK_THROWS_AS(cam_map(feats, head_w, -1, 0), ArgumentError);
  CHECK_THROWS_AS(cam_map(feats, head_w, 0, 4), ArgumentError);
  CHECK_THROWS_AS(cam_map(feats, head_w, 0, -1), ArgumentError);
}

TEST_CASE("cam_normalize maps to [0,1] and flattens constant maps to zero") {
  Rng rng(508);
  TensorT<float> m = rand_tensor<float>(rng, {6, 7}, -3.0, 5.0);
  TensorT<float> n = cam_normalize(m);
  float lo = 1e9f, hi = -1e9f;
  for (int64_t i = 0; i < n.numel(); ++i) {
    lo = std::min(lo, n[i]);
    hi = std::max(hi, n[i]);
    CHECK(n[i] >= 0.0f);
    CHECK(n[i] <= 1.0f);
  }
  CHECK(lo == 0.0f);
  CHECK(hi == 1.0f);

  TensorT<float> flat = cam_normalize(TensorT<float>::full({3, 3}, 2.5f));
  for (int64_t i = 0; i < flat.numel(); ++i) CHECK(flat[i] == 0.0f);

  CHECK_THROWS_AS(cam_normalize(TensorT<float>::zeros({0})), ShapeError);
}

TEST_CASE("single-map cam heatmap equals the normalized upsampled feature") {
  Rng rng(509);
  TensorT<float> feats = rand_tensor<float>(rng, {1, 1, 5, 6}, -1.0, 2.0);
  TensorT<float> head_w = TensorT<float>::full({1, 1}, 1.0f);

  TensorT<float> raw = cam_map(feats, head_w, 0, 0);
  TensorT<float> raw4 = TensorT<float>::from({1, 1, 5, 6}, raw.vec());
  TensorT<float> heat = cam_normalize(kernels::bilinear_forward(raw4, 16, 18));
  CHECK(heat.dims() == std::vector<int>{1, 1, 16, 18});

  // Oracle: relu the map, upsample with the scalar formula, min-max by hand.
  std::vector<double> ref(static_cast<size_t>(5) * 6);
  for (size_t i = 0; i < ref.size(); ++i)
    ref[i] = std::max(static_cast<double>(feats[static_cast<int64_t>(i)]), 0.0);
  std::vector<double> up = bilinear_ref_1ch(ref, 5, 6, 16, 18);
  double lo = up[0], hi = up[0];
  for (double v : up) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (size_t i = 0; i < up.size(); ++i) {
    const double want = (up[i] - lo) / (hi - lo);
    CHECK(heat[static_cast<int64_t>(i)] == doctest::Approx(want).epsilon(1e-4));
  }
}
