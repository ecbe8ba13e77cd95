#include "doctest.h"

#include <cmath>
#include <vector>

#include "kiprn/resizer.hpp"

using namespace kiprn;

namespace {

using TensorD = TensorT<double>;

// Scalar half-pixel bilinear, independent of the library implementation.
template <typename T>
TensorT<T> bilinear_ref(const TensorT<T>& x, int oh, int ow) {
  const int n = static_cast<int>(x.dim(0)), c = static_cast<int>(x.dim(1));
  const int ih = static_cast<int>(x.dim(2)), iw = static_cast<int>(x.dim(3));
  TensorT<T> out = TensorT<T>::zeros({n, c, oh, ow});
  auto src = [](int d, int in, int on) {
    double s = (d + 0.5) * static_cast<double>(in) / on - 0.5;
    return std::min(std::max(s, 0.0), static_cast<double>(in - 1));
  };
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < oh; ++y)
        for (int z = 0; z < ow; ++z) {
          const double sy = src(y, ih, oh), sx = src(z, iw, ow);
          const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
          const int y1 = std::min(y0 + 1, ih - 1), x1 = std::min(x0 + 1, iw - 1);
          const double fy = sy - y0, fx = sx - x0;
          auto at = [&](int yy, int xx) {
            return static_cast<double>(x[((b * c + ch) * static_cast<int64_t>(ih) + yy) * iw + xx]);
          };
          const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                           fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
          out[((b * c + ch) * static_cast<int64_t>(oh) + y) * ow + z] = static_cast<T>(v);
        }
  return out;
}

template <typename T>
TensorT<T> rand_tensor(Rng& rng, const std::vector<int>& dims, double lo = -1.0, double hi = 1.0) {
  TensorT<T> t = TensorT<T>::zeros(dims);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

KiprnConfig micro_cfg() {
  KiprnConfig cfg;
  cfg.level_sizes = {8, 12, 16};
  cfg.pyconv_channels1 = 6;
  cfg.pyconv_channels2 = 4;
  cfg.branch_channels = 4;
  cfg.blocks_per_branch = 2;
  return cfg;
}

}  // namespace

TEST_CASE("kernel_assignment matches the stated tables") {
  CHECK(kernel_assignment({300, 400, 500}, KernelOrder::Inversed) == std::vector<int>{7, 5, 3});
  CHECK(kernel_assignment({300, 400, 500}, KernelOrder::Forward) == std::vector<int>{3, 5, 7});
  CHECK(kernel_assignment({96, 128, 160}, KernelOrder::Uniform, 5) == std::vector<int>{5, 5, 5});
  CHECK(kernel_assignment({10, 20}, KernelOrder::Forward) == std::vector<int>{3, 5});
  CHECK(kernel_assignment({10, 20}, KernelOrder::Inversed) == std::vector<int>{5, 3});
  CHECK(kernel_assignment({8, 9, 10, 11, 12}, KernelOrder::Forward) ==
        std::vector<int>{3, 5, 7, 9, 11});
  CHECK(kernel_assignment({8, 9, 10, 11, 12}, KernelOrder::Inversed) ==
        std::vector<int>{11, 9, 7, 5, 3});
  CHECK(kernel_assignment({64}, KernelOrder::Inversed) == std::vector<int>{3});
  CHECK(kernel_assignment({64}, KernelOrder::Forward) == std::vector<int>{3});
}

TEST_CASE("kernel assignment orders are elementwise reverses and monotone") {
  Rng rng(401);
  for (int m = 1; m <= 7; ++m) {
    std::vector<int> sizes;
    int s = static_cast<int>(rng.uniform_int(8, 30));
    for (int j = 0; j < m; ++j) {
      sizes.push_back(s);
      s += static_cast<int>(rng.uniform_int(1, 40));
    }
    std::vector<int> fwd = kernel_assignment(sizes, KernelOrder::Forward);
    std::vector<int> inv = kernel_assignment(sizes, KernelOrder::Inversed);
    std::vector<int> rev(fwd.rbegin(), fwd.rend());
    CHECK(inv == rev);
    for (int j = 1; j < m; ++j) {
      CHECK(fwd[static_cast<size_t>(j)] > fwd[static_cast<size_t>(j - 1)]);
      CHECK(inv[static_cast<size_t>(j)] < inv[static_cast<size_t>(j - 1)]);
    }
    for (int k : fwd) CHECK(k % 2 == 1);
  }
}

TEST_CASE("kernel_assignment rejects bad size lists") {
  CHECK_THROWS_AS(kernel_assignment({}, KernelOrder::Forward), ArgumentError);
  CHECK_THROWS_AS(kernel_assignment({100, 100}, KernelOrder::Forward), ArgumentError);
  CHECK_THROWS_AS(kernel_assignment({200, 100}, KernelOrder::Inversed), ArgumentError);
}

TEST_CASE("config validation rejects malformed settings") {
  auto bad = [](auto mutate) {
    KiprnConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  };
  bad([](KiprnConfig& c) { c.level_sizes = {}; });
  bad([](KiprnConfig& c) { c.level_sizes = {96, 96}; });
  bad([](KiprnConfig& c) { c.level_sizes = {4, 8}; });
  bad([](KiprnConfig& c) { c.pyconv_layer1_kernels = {3, 4}; });
  bad([](KiprnConfig& c) { c.pyconv_layer2_kernels = {}; });
  bad([](KiprnConfig& c) { c.kernel_order = KernelOrder::Uniform; c.uniform_kernel = 4; });
  bad([](KiprnConfig& c) { c.pyconv_channels1 = 2; });
  bad([](KiprnConfig& c) { c.branch_channels = 2; });
  bad([](KiprnConfig& c) { c.blocks_per_branch = 0; });
  KiprnConfig ok;
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("resize_pyramid matches the scalar bilinear oracle per level") {
  KiprnConfig cfg = micro_cfg();
  ParamStore<double> store;
  Rng rng(402);
  KiprnNet<double> net;
  net.init(store, cfg, rng);

  TensorD x = rand_tensor<double>(rng, {2, 3, 14, 11});
  Tape<double> tape;
  Binder<double> b{&tape};
  std::vector<Var<double>> pyr = net.resize_pyramid(b, tape.leaf(x, false));
  REQUIRE(pyr.size() == 3);
  for (size_t j = 0; j < pyr.size(); ++j) {
    const int s = cfg.level_sizes[j];
    CHECK(pyr[j].value().dims() == std::vector<int>{2, 3, s, s});
    CHECK(max_abs_diff(pyr[j].value(), bilinear_ref(x, s, s)) < 1e-12);
  }

  // A level that matches the input size passes the data through untouched.
  TensorD sq = rand_tensor<double>(rng, {1, 3, 12, 12});
  std::vector<Var<double>> pyr2 = net.resize_pyramid(b, tape.leaf(sq, false));
  CHECK(max_abs_diff(pyr2[1].value(), sq) == 0.0);

  // Constant images stay constant at every scale.
  TensorD flat = TensorT<double>::full({1, 3, 10, 10}, 0.625);
  std::vector<Var<double>> pyr3 = net.resize_pyramid(b, tape.leaf(flat, false));
  for (const Var<double>& lvl : pyr3)
    for (int64_t i = 0; i < lvl.value().numel(); ++i) CHECK(lvl.value()[i] == 0.625);
}

TEST_CASE("extract keeps spatial dims and maps zero input to zero") {
  ParamStore<float> store;
  Rng rng(403);
  KiprnNet<float> net;
  net.init(store, KiprnConfig{}, rng);  // default channels: 24 then 16

  Tape<float> tape;
  Binder<float> b{&tape};
  TensorT<float> x = rand_tensor<float>(rng, {1, 3, 96, 96});
  Var<float> f = net.extract(b, tape.leaf(x, false));
  CHECK(f.value().dims() == std::vector<int>{1, 16, 96, 96});

  // Zero image: convs emit their zero biases, group norm maps 0 to 0.
  Var<float> fz = net.extract(b, tape.leaf(TensorT<float>::zeros({1, 3, 16, 16}), false));
  for (int64_t i = 0; i < fz.value().numel(); ++i) CHECK(fz.value()[i] == 0.0f);
}

TEST_CASE("pyconv splits output channels with the remainder up front") {
  CHECK(PyConvLayer<float>::split_channels(24, 3) == std::vector<int>{8, 8, 8});
  CHECK(PyConvLayer<float>::split_channels(16, 3) == std::vector<int>{6, 5, 5});
  CHECK(PyConvLayer<float>::split_channels(16, 2) == std::vector<int>{8, 8});
  CHECK(PyConvLayer<float>::split_channels(5, 4) == std::vector<int>{2, 1, 1, 1});

  KiprnConfig cfg = micro_cfg();
  cfg.pyconv_channels1 = 16;  // 3 taps -> 6/5/5
  ParamStore<float> store;
  Rng rng(404);
  KiprnNet<float> net;
  net.init(store, cfg, rng);
  CHECK(store.find("resizer.extract1.k3.w")->value.dims() == std::vector<int>{6, 3, 3, 3});
  CHECK(store.find("resizer.extract1.k5.w")->value.dims() == std::vector<int>{5, 3, 5, 5});
  CHECK(store.find("resizer.extract1.k7.w")->value.dims() == std::vector<int>{5, 3, 7, 7});
}

TEST_CASE("placement variants change kernel taps, not output shapes") {
  Rng seed_rng(405);
  TensorT<float> x = rand_tensor<float>(seed_rng, {1, 3, 12, 12});

  auto shapes_for = [&x](Placement p) {
    KiprnConfig cfg = micro_cfg();
    cfg.placement = p;
    ParamStore<float> store;
    Rng rng(406);
    KiprnNet<float> net;
    net.init(store, cfg, rng);
    Tape<float> tape;
    Binder<float> b{&tape};
    std::vector<Var<float>> out = net.forward(b, tape.leaf(x, false));
    std::vector<std::vector<int>> dims;
    for (const Var<float>& v : out) dims.push_back(v.value().dims());
    return dims;
  };
  const std::vector<std::vector<int>> first = shapes_for(Placement::First);
  for (Placement p : {Placement::None, Placement::Last, Placement::Resblock, Placement::All})
    CHECK(shapes_for(p) == first);

  // Tap layout per placement: which modules carry the multi-kernel sets.
  auto has = [](const ParamStore<float>& s, const std::string& n) {
    return s.find(n) != nullptr;
  };
  auto build = [](Placement p) {
    auto store = std::make_unique<ParamStore<float>>();
    KiprnConfig cfg = micro_cfg();
    cfg.placement = p;
    Rng rng(407);
    KiprnNet<float> net;
    net.init(*store, cfg, rng);
    return store;
  };
  // micro_cfg is Inversed over 3 levels: branch 0 gets kernel 7.
  auto none = build(Placement::None);
  CHECK(has(*none, "resizer.extract1.k3.w"));
  CHECK(!has(*none, "resizer.extract1.k5.w"));
  CHECK(has(*none, "resizer.b0.res0.conv1.k7.w"));
  CHECK(has(*none, "resizer.b0.res1.conv1.k7.w"));

  auto firstp = build(Placement::First);
  CHECK(has(*firstp, "resizer.extract1.k5.w"));
  CHECK(has(*firstp, "resizer.extract2.k1.w"));
  CHECK(has(*firstp, "resizer.b0.res0.conv1.k7.w"));
  CHECK(!has(*firstp, "resizer.b0.res0.conv1.k5.w"));

  auto last = build(Placement::Last);
  CHECK(!has(*last, "resizer.extract1.k5.w"));
  CHECK(has(*last, "resizer.b0.res0.conv1.k7.w"));
  CHECK(!has(*last, "resizer.b0.res0.conv1.k5.w"));
  CHECK(has(*last, "resizer.b0.res1.conv1.k3.w"));
  CHECK(has(*last, "resizer.b0.res1.conv1.k5.w"));
  CHECK(has(*last, "resizer.b0.res1.conv1.k7.w"));

  auto resblock = build(Placement::Resblock);
  CHECK(!has(*resblock, "resizer.extract1.k5.w"));
  CHECK(has(*resblock, "resizer.b0.res0.conv1.k3.w"));
  CHECK(has(*resblock, "resizer.b0.res0.conv1.k5.w"));
  CHECK(has(*resblock, "resizer.b2.res1.conv1.k7.w"));

  auto all = build(Placement::All);
  CHECK(has(*all, "resizer.extract1.k5.w"));
  CHECK(has(*all, "resizer.b0.res0.conv1.k5.w"));
  CHECK(has(*all, "resizer.b2.res1.conv1.k7.w"));
}

TEST_CASE("zero-initialized projections reproduce the bilinear pyramid bitwise") {
  KiprnConfig cfg = micro_cfg();
  REQUIRE(cfg.zero_init_projection);
  ParamStore<float> store;
  Rng rng(408);
  KiprnNet<float> net;
  net.init(store, cfg, rng);

  Tape<float> tape;
  Binder<float> b{&tape};
  TensorT<float> x = rand_tensor<float>(rng, {2, 3, 20, 15}, 0.0, 1.0);
  Var<float> xv = tape.leaf(x, false);
  std::vector<Var<float>> comp = net.forward(b, xv);
  std::vector<Var<float>> plain = net.resize_pyramid(b, xv);
  REQUIRE(comp.size() == plain.size());
  for (size_t j = 0; j < comp.size(); ++j) {
    REQUIRE(comp[j].value().dims() == plain[j].value().dims());
    for (int64_t i = 0; i < comp[j].value().numel(); ++i)
      CHECK(comp[j].value()[i] == plain[j].value()[i]);
  }
}

TEST_CASE("random projections actually compensate") {
  KiprnConfig cfg = micro_cfg();
  cfg.zero_init_projection = false;
  ParamStore<float> store;
  Rng rng(409);
  KiprnNet<float> net;
  net.init(store, cfg, rng);

  Tape<float> tape;
  Binder<float> b{&tape};
  TensorT<float> x = rand_tensor<float>(rng, {1, 3, 16, 16}, 0.0, 1.0);
  Var<float> xv = tape.leaf(x, false);
  std::vector<Var<float>> comp = net.forward(b, xv);
  std::vector<Var<float>> plain = net.resize_pyramid(b, xv);
  for (size_t j = 0; j < comp.size(); ++j)
    CHECK(max_abs_diff(comp[j].value(), plain[j].value()) > 0.0);
}

TEST_CASE("single-level config yields a one-level pyramid") {
  KiprnConfig cfg = micro_cfg();
  cfg.level_sizes = {9};
  cfg.blocks_per_branch = 1;
  ParamStore<float> store;
  Rng rng(410);
  KiprnNet<float> net;
  net.init(store, cfg, rng);
  CHECK(net.assigned == std::vector<int>{3});

  Tape<float> tape;
  Binder<float> b{&tape};
  std::vector<Var<float>> out =
      net.forward(b, tape.leaf(rand_tensor<float>(rng, {1, 3, 11, 13}), false));
  REQUIRE(out.size() == 1);
  CHECK(out[0].value().dims() == std::vector<int>{1, 3, 9, 9});
}

TEST_CASE("resizer is fully convolutional: one net, any input resolution") {
  KiprnConfig cfg = micro_cfg();
  ParamStore<float> store;
  Rng rng(411);
  KiprnNet<float> net;
  net.init(store, cfg, rng);
  const size_t params_after_init = store.all().size();

  Tape<float> tape;
  Binder<float> b{&tape};
  for (int side : {10, 17, 24}) {
    std::vector<Var<float>> out =
        net.forward(b, tape.leaf(rand_tensor<float>(rng, {1, 3, side, side}), false));
    for (size_t j = 0; j < out.size(); ++j)
      CHECK(out[j].value().dims() ==
            std::vector<int>{1, 3, cfg.level_sizes[j], cfg.level_sizes[j]});
  }
  CHECK(store.all().size() == params_after_init);

  int64_t total = 0;
  for (Param<float>* p : store.all()) total += p->value.numel();
  ParamStore<float> store2;
  Rng rng2(999);
  KiprnNet<float> net2;
  net2.init(store2, cfg, rng2);
  int64_t total2 = 0;
  for (Param<float>* p : store2.all()) total2 += p->value.numel();
  CHECK(total == total2);
}

TEST_CASE("forward rejects inputs that are not 3-channel NCHW") {
  ParamStore<float> store;
  Rng rng(412);
  KiprnNet<float> net;
  net.init(store, micro_cfg(), rng);
  Tape<float> tape;
  Binder<float> b{&tape};
  CHECK_THROWS_AS(net.forward(b, tape.leaf(TensorT<float>::zeros({3, 12, 12}), false)),
                  ShapeError);
  CHECK_THROWS_AS(net.forward(b, tape.leaf(TensorT<float>::zeros({1, 4, 12, 12}), false)),
                  ShapeError);
}

TEST_CASE("every resizer parameter sees gradient once projections are live") {
  KiprnConfig cfg = micro_cfg();
  cfg.zero_init_projection = false;
  ParamStore<double> store;
  Rng rng(413);
  KiprnNet<double> net;
  net.init(store, cfg, rng);

  Tape<double> tape;
  Binder<double> b{&tape, true};
  std::vector<Var<double>> out =
      net.forward(b, tape.leaf(rand_tensor<double>(rng, {2, 3, 15, 15}, 0.0, 1.0), false));
  // Random weighting so no gradient cancels by accident.
  Var<double> loss = tape.sum(
      tape.mul(out[0], tape.leaf(rand_tensor<double>(rng, out[0].value().dims()), false)));
  for (size_t j = 1; j < out.size(); ++j)
    loss = tape.add(loss, tape.sum(tape.mul(out[j],
        tape.leaf(rand_tensor<double>(rng, out[j].value().dims()), false))));
  tape.backward(loss);

  for (Param<double>* p : store.all()) {
    const TensorT<double> g = tape.grad(b(p));
    double mx = 0;
    for (int64_t i = 0; i < g.numel(); ++i) mx = std::max(mx, std::abs(g[i]));
    INFO("param ", p->name);
    CHECK(mx > 0.0);
  }
}

TEST_CASE("binder hands out one var per parameter") {
  ParamStore<float> store;
  Rng rng(414);
  KiprnNet<float> net;
  net.init(store, micro_cfg(), rng);
  Tape<float> tape;
  Binder<float> b{&tape, true};
  Param<float>* p = store.find("resizer.b0.lift.k1.w");
  REQUIRE(p != nullptr);
  Var<float> v1 = b(p);
  Var<float> v2 = b(p);
  CHECK(v1.id == v2.id);
}
