#pragma once

#include <chrono>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "kiprn/classifier.hpp"
#include "kiprn/resizer.hpp"

// Finite-difference gradient checks, run in double precision. Elementwise
// central differences for the primitive ops, a random directional derivative
// for the composed network. Draws whose relu inputs sit within the kink
// margin are redrawn.
namespace kiprn::gradcheck {

using TensorD = TensorT<double>;
using TapeD = Tape<double>;
using VarD = Var<double>;

constexpr double kFdStep = 1e-5;
constexpr double kKinkMargin = 1e-3;
// Base-point margin for directional probes. A unit direction moves each
// pre-activation by roughly h * |grad . dir| <= h * ||grad||, so 10h guards
// slopes up to 10; large composed nets would redraw forever under 1e-3
// because the min over thousands of activations is routinely that small.
constexpr double kKinkMarginDirectional = 1e-4;

// build(tape, vars) returns a scalar loss; vars line up with leaves.
using BuildFn = std::function<VarD(TapeD&, const std::vector<VarD>&)>;

inline double rel_err(double max_diff, double na, double nn) {
  return max_diff / (na + nn + 1e-12);
}

struct FdOutcome {
  double rel_err = 0;
  bool on_kink = false;
};

inline FdOutcome fd_elementwise(const BuildFn& build, std::vector<TensorD>& leaves,
                                double h = kFdStep) {
  TapeD tape;
  std::vector<VarD> vars;
  vars.reserve(leaves.size());
  for (TensorD& l : leaves) vars.push_back(tape.leaf(l, true));
  VarD loss = build(tape, vars);
  if (tape.min_relu_abs() < kKinkMargin) return {0, true};
  tape.backward(loss);
  std::vector<TensorD> analytic;
  analytic.reserve(leaves.size());
  for (const VarD& v : vars) analytic.push_back(tape.grad(v));

  double max_diff = 0, na = 0, nn = 0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    TensorD& leaf = leaves[li];
    for (int64_t i = 0; i < leaf.numel(); ++i) {
      const double saved = leaf[i];
      double fp, fm;
      {
        leaf[i] = saved + h;
        TapeD t2;
        std::vector<VarD> vs;
        for (TensorD& l : leaves) vs.push_back(t2.leaf(l, false));
        fp = build(t2, vs).value()[0];
        if (t2.min_relu_abs() < h) return {0, true};
      }
      {
        leaf[i] = saved - h;
        TapeD t2;
        std::vector<VarD> vs;
        for (TensorD& l : leaves) vs.push_back(t2.leaf(l, false));
        fm = build(t2, vs).value()[0];
        if (t2.min_relu_abs() < h) return {0, true};
      }
      leaf[i] = saved;
      const double gn = (fp - fm) / (2 * h);
      const double ga = analytic[li][i];
      max_diff = std::max(max_diff, std::abs(ga - gn));
      na = std::max(na, std::abs(ga));
      nn = std::max(nn, std::abs(gn));
    }
  }
  return {rel_err(max_diff, na, nn), false};
}

inline FdOutcome fd_directional(const BuildFn& build, std::vector<TensorD>& leaves, Rng& rng,
                                double h = kFdStep) {
  std::vector<TensorD> dirs;
  dirs.reserve(leaves.size());
  double dir_norm2 = 0;
  for (const TensorD& l : leaves) {
    TensorD d = TensorD::zeros(l.dims());
    for (int64_t i = 0; i < d.numel(); ++i) {
      d[i] = rng.uniform(-1.0, 1.0);
      dir_norm2 += d[i] * d[i];
    }
    dirs.push_back(d);
  }
  // Unit joint direction: truncation error grows with ||d||^2 relative to
  // the directional derivative, so an unnormalized draw over ~1e4 elements
  // would drown the comparison in curvature.
  const double inv_norm = 1.0 / std::sqrt(dir_norm2);
  for (TensorD& d : dirs)
    for (int64_t i = 0; i < d.numel(); ++i) d[i] *= inv_norm;
  double analytic = 0;
  {
    TapeD tape;
    std::vector<VarD> vars;
    for (TensorD& l : leaves) vars.push_back(tape.leaf(l, true));
    VarD loss = build(tape, vars);
    if (tape.min_relu_abs() < kKinkMarginDirectional) return {0, true};
    tape.backward(loss);
    for (size_t li = 0; li < leaves.size(); ++li) {
      const TensorD g = tape.grad(vars[li]);
      for (int64_t i = 0; i < g.numel(); ++i) analytic += g[i] * dirs[li][i];
    }
  }
  const auto eval_at = [&](double alpha, double& out) -> bool {
    std::vector<TensorD> shifted;
    shifted.reserve(leaves.size());
    for (size_t li = 0; li < leaves.size(); ++li) {
      TensorD s = leaves[li].clone();
      for (int64_t i = 0; i < s.numel(); ++i) s[i] += alpha * dirs[li][i];
      shifted.push_back(s);
    }
    TapeD t2;
    std::vector<VarD> vs;
    for (TensorD& l : shifted) vs.push_back(t2.leaf(l, false));
    out = build(t2, vs).value()[0];
    return t2.min_relu_abs() >= h / 2;
  };
  double fp, fm, fp_half, fm_half;
  if (!eval_at(h, fp) || !eval_at(-h, fm) || !eval_at(h / 2, fp_half) ||
      !eval_at(-h / 2, fm_half))
    return {0, true};
  // Two central differences at h and h/2 must agree: a ReLU crossing inside
  // the probe interval (invisible to the endpoint margin) breaks that
  // agreement, so inconsistent draws are redrawn rather than scored.
  const double coarse = (fp - fm) / (2 * h);
  const double numeric = (fp_half - fm_half) / h;
  if (rel_err(std::abs(coarse - numeric), std::abs(coarse), std::abs(numeric)) > 1e-7)
    return {0, true};
  return {rel_err(std::abs(analytic - numeric), std::abs(analytic), std::abs(numeric)), false};
}

inline TensorD rand_tensor(Rng& rng, const std::vector<int>& dims, double lo = -1.0,
                           double hi = 1.0) {
  TensorD t = TensorD::zeros(dims);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Scalarize a tensor output: sum(y * fixed_random_weights).
inline VarD weighted_sum(TapeD& t, VarD y, const TensorD& w) {
  VarD wv = t.leaf(w, false);
  return t.sum(t.mul(y, wv));
}

struct CaseResult {
  std::string name;
  double rel_err = 0;
  bool pass = false;
};

struct SuiteResult {
  std::vector<CaseResult> cases;
  double worst = 0;
  bool pass = true;
  double seconds = 0;
  int count() const { return static_cast<int>(cases.size()); }
};

inline void run_case(SuiteResult& out, const std::string& name, uint64_t seed,
                     const std::function<FdOutcome(Rng&)>& attempt, double tol) {
  for (int tries = 0; tries < 100; ++tries) {
    Rng rng(derive_seed(seed, name, static_cast<uint64_t>(tries)));
    FdOutcome o = attempt(rng);
    if (o.on_kink) continue;
    CaseResult cr{name, o.rel_err, o.rel_err < tol};
    out.worst = std::max(out.worst, o.rel_err);
    out.pass = out.pass && cr.pass;
    out.cases.push_back(cr);
    return;
  }
  out.cases.push_back({name, 1.0, false});
  out.pass = false;
}

// One full pass over the op set plus the composed network for every seed.
inline SuiteResult run_gradient_suite(uint64_t base_seed, int seeds, double tol = 1e-6,
                                      std::ostream* log = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult out;
  for (int s = 0; s < seeds; ++s) {
    const uint64_t seed = derive_seed(base_seed, "gradcheck", static_cast<uint64_t>(s));
    const std::string tag = "#" + std::to_string(s) + ":";

    run_case(out, tag + "conv2d", seed, [](Rng& rng) {
      std::vector<TensorD> leaves{rand_tensor(rng, {2, 3, 6, 7}), rand_tensor(rng, {4, 3, 3, 3}),
                                  rand_tensor(rng, {4})};
      const TensorD w = rand_tensor(rng, {2, 4, 6, 7});
      return fd_elementwise(
          [&w](TapeD& t, const std::vector<VarD>& v) {
            return weighted_sum(t, t.conv2d(v[0], v[1], v[2], 1, 1), w);
          },
          leaves);
    }, tol);

    run_case(out, tag + "conv2d_s2k5", seed, [](Rng& rng) {
      std::vector<TensorD> leaves{rand_tensor(rng, {1, 2, 9, 8}), rand_tensor(rng, {3, 2, 5, 5})};
      const TensorD w = rand_tensor(rng, {1, 3, 5, 4});
      return fd_elementwise(
          [&w](TapeD& t, const std::vector<VarD>& v) {
            return weighted_sum(t, t.conv2d(v[0], v[1], std::nullopt, 2, 2), w);
          },
          leaves);
    }, tol);

    run_case(out, tag + "bilinear_up", seed, [](Rng& rng) {
      std::vector<TensorD> leaves{rand_tensor(rng, {1, 2, 5, 7})};
      const TensorD w = rand_tensor(rng, {1, 2, 9, 11});
      return fd_elementwise(
          [&w](TapeD& t, const std::vector<VarD>& v) {
            return weighted_sum(t, t.bilinear_resize(v[0], 9, 11), w);
          },
          leaves);
    }, tol);

    run_case(out, tag + "bilinear_down", seed, [](Rng& rng) {
      std::vector<TensorD> leaves{rand_tensor(rng, {2, 1, 9, 11})};
      const TensorD w = rand_tensor(rng, {2, 1, 4, 6});
      return fd_elementwise(
          [&w](TapeD& t, const std::vector<VarD>& v) {
            return weighted_sum(t, t.bilinear_resize(v[0], 4, 6), w);
          },
          leaves);
    }, tol);

    run_case(out, tag + "group_norm", seed, [](Rng& rng) {
      std::vector<TensorD> leaves{rand_tensor(rng, {2, 4, 3, 5}), rand_tensor(rng, {4}, 0.5, 1.5),
                                  rand_tensor(rng, {4})};
      const TensorD w = rand_tensor(rng, {2, 4, 3, 5});
      return fd_elementwise(
          [&w](TapeD& t, const std::vector<VarD>& v) {
            return weighted_sum(t, t.group_norm(v[0], v[1], v[2], 2, 1e-5), w);
          },
          leaves);
    }, tol);

    run_case(out, tag + "relu", seed, [](Rng& rng) {
      std::vector<TensorD> leaves{rand_tensor(rng, {3, 4, 5})};
      const TensorD w = rand_tensor(rng, {3, 4, 5});
      return fd_elementwise(
          [&w](TapeD& t, const std::vector<VarD>& v) { return weighted_sum(t, t.relu(v[0]), w); },
          leaves);
    }, tol);

    run_case(out, tag + "global_avg_pool", seed, [](Rng& rng) {
      std::vector<TensorD> leaves{rand_tensor(rng, {2, 3, 4, 5})};
      const TensorD w = rand_tensor(rng, {2, 3});
      return fd_elementwise(
          [&w](TapeD& t, const std::vector<VarD>& v) {
            return weighted_sum(t, t.global_avg_pool(v[0]), w);
          },
          leaves);
    }, tol);

    run_case(out, tag + "linear", seed, [](Rng& rng) {
      std::vector<TensorD> leaves{rand_tensor(rng, {3, 6}), rand_tensor(rng, {4, 6}),
                                  rand_tensor(rng, {4})};
      const TensorD w = rand_tensor(rng, {3, 4});
      return fd_elementwise(
          [&w](TapeD& t, const std::vector<VarD>& v) {
            return weighted_sum(t, t.linear(v[0], v[1], v[2]), w);
          },
          leaves);
    }, tol);

    run_case(out, tag + "softmax_ce", seed, [](Rng& rng) {
      std::vector<TensorD> leaves{rand_tensor(rng, {4, 5}, -2.0, 2.0)};
      std::vector<int> labels;
      for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(rng.uniform_int(0, 4)));
      return fd_elementwise(
          [labels](TapeD& t, const std::vector<VarD>& v) {
            return t.softmax_cross_entropy(v[0], labels);
          },
          leaves);
    }, tol);

    run_case(out, tag + "mul_add_sum", seed, [](Rng& rng) {
      std::vector<TensorD> leaves{rand_tensor(rng, {2, 3, 4}), rand_tensor(rng, {2, 3, 4}),
                                  rand_tensor(rng, {2, 3, 4})};
      return fd_elementwise(
          [](TapeD& t, const std::vector<VarD>& v) {
            return t.sum(t.mul(t.add(v[0], v[1]), v[2]));
          },
          leaves);
    }, tol);

    run_case(out, tag + "concat_channels", seed, [](Rng& rng) {
      std::vector<TensorD> leaves{rand_tensor(rng, {2, 2, 3, 4}), rand_tensor(rng, {2, 3, 3, 4})};
      const TensorD w = rand_tensor(rng, {2, 5, 3, 4});
      return fd_elementwise(
          [&w](TapeD& t, const std::vector<VarD>& v) {
            return weighted_sum(t, t.concat_channels({v[0], v[1]}), w);
          },
          leaves);
    }, tol);

    run_case(out, tag + "kic_1level", seed, [seed](Rng& rng) {
      KiprnConfig kc;
      kc.level_sizes = {8};
      kc.pyconv_channels1 = 6;
      kc.pyconv_channels2 = 4;
      kc.branch_channels = 4;
      kc.blocks_per_branch = 1;
      ParamStore<double> store;
      Rng init_rng(derive_seed(seed, "kic1-init"));
      KiprnNet<double> net;
      net.init(store, kc, init_rng);
      for (Param<double>* p : store.all())
        if (p->name.find(".proj.") != std::string::npos)
          for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = init_rng.uniform(-0.3, 0.3);

      std::vector<TensorD> leaves;
      std::vector<Param<double>*> params = store.all();
      for (Param<double>* p : params) leaves.push_back(p->value);
      leaves.push_back(rand_tensor(rng, {1, 3, 10, 10}));
      const TensorD w = rand_tensor(rng, {1, 3, 8, 8});

      auto build = [&params, &net, &w](TapeD& t, const std::vector<VarD>& v) -> VarD {
        Binder<double> b;
        b.tape = &t;
        b.train = true;
        for (size_t i = 0; i < params.size(); ++i) b.bound.emplace(params[i], v[i]);
        std::vector<VarD> pyramid = net.forward(b, v.back());
        return weighted_sum(t, pyramid[0], w);
      };
      return fd_directional(build, leaves, rng);
    }, tol);

    run_case(out, tag + "kiprn_full", seed, [seed](Rng& rng) {
      // Desk micro-config: the 3:4:5 level ratio shrunk to toy sizes.
      KiprnConfig kc;
      kc.level_sizes = {12, 16, 20};
      kc.pyconv_channels1 = 6;
      kc.pyconv_channels2 = 4;
      kc.branch_channels = 4;
      kc.blocks_per_branch = 1;
      ParamStore<double> store;
      Rng init_rng(derive_seed(seed, "kiprn-full-init"));
      KiprnNet<double> net;
      net.init(store, kc, init_rng);
      for (Param<double>* p : store.all())
        if (p->name.find(".proj.") != std::string::npos)
          for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = init_rng.uniform(-0.3, 0.3);

      std::vector<TensorD> leaves;
      std::vector<Param<double>*> params = store.all();
      for (Param<double>* p : params) leaves.push_back(p->value);
      leaves.push_back(rand_tensor(rng, {1, 3, 24, 24}));
      std::vector<TensorD> ws;
      for (int sz : kc.level_sizes) ws.push_back(rand_tensor(rng, {1, 3, sz, sz}));

      auto build = [&params, &net, &ws](TapeD& t, const std::vector<VarD>& v) -> VarD {
        Binder<double> b;
        b.tape = &t;
        b.train = true;
        for (size_t i = 0; i < params.size(); ++i) b.bound.emplace(params[i], v[i]);
        std::vector<VarD> pyramid = net.forward(b, v.back());
        VarD loss = weighted_sum(t, pyramid[0], ws[0]);
        for (size_t j = 1; j < pyramid.size(); ++j)
          loss = t.add(loss, weighted_sum(t, pyramid[j], ws[j]));
        return loss;
      };
      return fd_directional(build, leaves, rng);
    }, tol);

    run_case(out, tag + "composed", seed, [seed](Rng& rng) {
      KiprnConfig kc;
      kc.level_sizes = {8, 10};
      kc.pyconv_channels1 = 8;
      kc.pyconv_channels2 = 6;
      kc.branch_channels = 6;
      kc.blocks_per_branch = 1;
      BackboneConfig bc;
      bc.stem_channels = 4;
      bc.stage_channels = {4, 6};
      bc.num_classes = 3;
      ParamStore<double> store;
      Rng init_rng(derive_seed(seed, "composed-init"));
      KiprnNet<double> net;
      net.init(store, kc, init_rng);
      Backbone<double> backbone;
      backbone.init(store, bc, init_rng);
      // Break the zero-init projections so gradients reach the branches.
      for (Param<double>* p : store.all())
        if (p->name.find(".proj.") != std::string::npos)
          for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = init_rng.uniform(-0.3, 0.3);

      std::vector<TensorD> leaves;
      std::vector<Param<double>*> params = store.all();
      for (Param<double>* p : params) leaves.push_back(p->value);
      leaves.push_back(rand_tensor(rng, {1, 3, 12, 12}));
      std::vector<int> labels{static_cast<int>(rng.uniform_int(0, bc.num_classes - 1))};

      auto build = [&params, &net, &backbone, labels](TapeD& t,
                                                      const std::vector<VarD>& v) -> VarD {
        Binder<double> b;
        b.tape = &t;
        b.train = true;
        for (size_t i = 0; i < params.size(); ++i) b.bound.emplace(params[i], v[i]);
        std::vector<VarD> pyramid = net.forward(b, v.back());
        VarD logits = backbone.multiscale_logits(b, pyramid);
        return t.softmax_cross_entropy(logits, labels);
      };
      return fd_directional(build, leaves, rng);
    }, tol);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (log) {
    for (const CaseResult& c : out.cases)
      if (!c.pass) (*log) << "gradcheck FAIL " << c.name << " rel_err=" << c.rel_err << "\n";
    (*log) << "gradcheck: " << out.count() << " cases, worst rel_err " << out.worst << ", "
           << out.seconds << "s\n";
  }
  return out;
}

}  // namespace kiprn::gradcheck
