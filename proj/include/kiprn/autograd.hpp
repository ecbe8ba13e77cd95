#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "kiprn/kernels.hpp"

// Tape-based reverse-mode autodiff. Nodes are appended in forward order;
// backward walks ids in strictly decreasing order, so gradient accumulation
// is deterministic. Interior gradients are freed as soon as a node's rule
// has fired; only leaves marked requires_grad keep theirs.
namespace kiprn {

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;
  bool defined() const { return tape != nullptr && id >= 0; }
  const TensorT<T>& value() const;
};

template <typename T>
class Tape {
 public:
  using BackFn = std::function<void(Tape<T>&, const TensorT<T>&)>;

  Var<T> leaf(const TensorT<T>& value, bool requires_grad) {
    return push(value, requires_grad, true, nullptr);
  }

  const TensorT<T>& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool wants_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    min_relu_abs_ = std::numeric_limits<double>::infinity();
  }

  // Smallest |x| seen by any relu on this tape; finite-difference checks use
  // it to reject draws that sit on the kink.
  double min_relu_abs() const { return min_relu_abs_; }

  // Bytes held by node values (diagnostics; shared buffers count once per
  // node that references them).
  int64_t value_bytes() const {
    int64_t b = 0;
    for (const Node& nd : nodes_) b += nd.value.numel() * static_cast<int64_t>(sizeof(T));
    return b;
  }

  // Lazily allocated accumulation buffer; conv/linear rules GEMM into it
  // with beta = 1.
  TensorT<T>& grad_buf(int id) {
    Node& nd = nodes_[static_cast<size_t>(id)];
    if (!nd.grad.defined()) nd.grad = TensorT<T>::zeros(nd.value.dims());
    return nd.grad;
  }

  void backward(const Var<T>& loss) {
    if (!loss.defined() || loss.tape != this) throw ArgumentError("backward: var not on this tape");
    if (nodes_[static_cast<size_t>(loss.id)].value.numel() != 1)
      throw ArgumentError("backward requires a scalar, got " +
                          dims_str(nodes_[static_cast<size_t>(loss.id)].value.dims()));
    for (Node& nd : nodes_) nd.grad = TensorT<T>();  // reset: repeat calls are identical
    grad_buf(loss.id)[0] = T(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& nd = nodes_[static_cast<size_t>(id)];
      if (!nd.grad.defined() || !nd.requires_grad) continue;
      if (nd.back) {
        nd.back(*this, nd.grad);
        nd.grad = TensorT<T>();  // interior grads are transient
      }
    }
  }

  // Gradient of a requires_grad leaf after backward(). Leaves the loss did
  // not reach report zeros.
  TensorT<T> grad(const Var<T>& v) const {
    if (!v.defined() || v.tape != this) throw ArgumentError("grad: var not on this tape");
    const Node& nd = nodes_[static_cast<size_t>(v.id)];
    if (!nd.leaf || !nd.requires_grad)
      throw ArgumentError("grad: only retained for requires_grad leaves");
    if (!nd.grad.defined()) return TensorT<T>::zeros(nd.value.dims());
    return nd.grad;
  }

  // ---- ops -----------------------------------------------------------

  Var<T> conv2d(Var<T> x, Var<T> w, std::optional<Var<T>> bias, int stride, int pad) {
    check(x);
    check(w);
    const TensorT<T>& xv = x.value();
    const TensorT<T>& wv = w.value();
    const TensorT<T>* bp = nullptr;
    TensorT<T> bv;
    int bid = -1;
    if (bias) {
      check(*bias);
      bv = bias->value();
      bp = &bv;
      bid = bias->id;
    }
    TensorT<T> y = kernels::conv2d_forward(xv, wv, bp, stride, pad);
    const bool rg = wants_grad(x.id) || wants_grad(w.id) || (bid >= 0 && wants_grad(bid));
    const int xid = x.id, wid = w.id;
    return push(y, rg, false, [xv, wv, stride, pad, xid, wid, bid](Tape<T>& t, const TensorT<T>& g) {
      TensorT<T>* dx = t.wants_grad(xid) ? &t.grad_buf(xid) : nullptr;
      TensorT<T>* dw = t.wants_grad(wid) ? &t.grad_buf(wid) : nullptr;
      TensorT<T>* db = (bid >= 0 && t.wants_grad(bid)) ? &t.grad_buf(bid) : nullptr;
      kernels::conv2d_backward(xv, wv, g, stride, pad, dx, dw, db);
    });
  }

  Var<T> bilinear_resize(Var<T> x, int out_h, int out_w) {
    check(x);
    TensorT<T> y = kernels::bilinear_forward(x.value(), out_h, out_w);
    const std::vector<int> in_dims = x.value().dims();
    const int xid = x.id;
    return push(y, wants_grad(xid), false, [in_dims, xid](Tape<T>& t, const TensorT<T>& g) {
      if (t.wants_grad(xid)) kernels::bilinear_backward(in_dims, g, &t.grad_buf(xid));
    });
  }

  Var<T> group_norm(Var<T> x, Var<T> gamma, Var<T> beta, int groups, double eps) {
    check(x);
    check(gamma);
    check(beta);
    kernels::GroupNormSaved<T> saved;
    TensorT<T> gav = gamma.value();
    TensorT<T> y = kernels::group_norm_forward(x.value(), groups, gav, beta.value(), eps, &saved);
    const bool rg = wants_grad(x.id) || wants_grad(gamma.id) || wants_grad(beta.id);
    const int xid = x.id, gid = gamma.id, bid = beta.id;
    return push(y, rg, false,
                [saved = std::move(saved), gav, groups, xid, gid, bid](Tape<T>& t,
                                                                       const TensorT<T>& g) {
                  TensorT<T>* dx = t.wants_grad(xid) ? &t.grad_buf(xid) : nullptr;
                  const bool affine = t.wants_grad(gid) || t.wants_grad(bid);
                  TensorT<T>* dga = affine ? &t.grad_buf(gid) : nullptr;
                  TensorT<T>* dbe = affine ? &t.grad_buf(bid) : nullptr;
                  kernels::group_norm_backward(saved, groups, gav, g, dx, dga, dbe);
                });
  }

  Var<T> relu(Var<T> x) {
    check(x);
    TensorT<T> xv = x.value();
    for (int64_t i = 0; i < xv.numel(); ++i)
      min_relu_abs_ = std::min(min_relu_abs_, std::abs(static_cast<double>(xv[i])));
    TensorT<T> y = kernels::relu_forward(xv);
    const int xid = x.id;
    return push(y, wants_grad(xid), false, [xv, xid](Tape<T>& t, const TensorT<T>& g) {
      if (t.wants_grad(xid)) kernels::relu_backward(xv, g, &t.grad_buf(xid));
    });
  }

  Var<T> global_avg_pool(Var<T> x) {
    check(x);
    TensorT<T> y = kernels::global_avg_pool_forward(x.value());
    const std::vector<int> in_dims = x.value().dims();
    const int xid = x.id;
    return push(y, wants_grad(xid), false, [in_dims, xid](Tape<T>& t, const TensorT<T>& g) {
      if (t.wants_grad(xid)) kernels::global_avg_pool_backward(in_dims, g, &t.grad_buf(xid));
    });
  }

  Var<T> linear(Var<T> x, Var<T> w, std::optional<Var<T>> bias) {
    check(x);
    check(w);
    TensorT<T> xv = x.value();
    TensorT<T> wv = w.value();
    const TensorT<T>* bp = nullptr;
    TensorT<T> bv;
    int bid = -1;
    if (bias) {
      check(*bias);
      bv = bias->value();
      bp = &bv;
      bid = bias->id;
    }
    TensorT<T> y = kernels::linear_forward(xv, wv, bp);
    const bool rg = wants_grad(x.id) || wants_grad(w.id) || (bid >= 0 && wants_grad(bid));
    const int xid = x.id, wid = w.id;
    return push(y, rg, false, [xv, wv, xid, wid, bid](Tape<T>& t, const TensorT<T>& g) {
      TensorT<T>* dx = t.wants_grad(xid) ? &t.grad_buf(xid) : nullptr;
      TensorT<T>* dw = t.wants_grad(wid) ? &t.grad_buf(wid) : nullptr;
      TensorT<T>* db = (bid >= 0 && t.wants_grad(bid)) ? &t.grad_buf(bid) : nullptr;
      kernels::linear_backward(xv, wv, g, dx, dw, db);
    });
  }

  Var<T> softmax_cross_entropy(Var<T> logits, const std::vector<int>& labels) {
    check(logits);
    TensorT<T> probs;
    TensorT<T> loss = kernels::softmax_cross_entropy_forward(logits.value(), labels, &probs);
    const int lid = logits.id;
    return push(loss, wants_grad(lid), false, [probs, labels, lid](Tape<T>& t, const TensorT<T>& g) {
      if (t.wants_grad(lid))
        kernels::softmax_cross_entropy_backward(probs, labels, g[0], &t.grad_buf(lid));
    });
  }

  Var<T> concat_channels(const std::vector<Var<T>>& xs) {
    std::vector<const TensorT<T>*> vals;
    std::vector<std::vector<int>> in_dims;
    std::vector<int> ids;
    bool rg = false;
    for (const Var<T>& x : xs) {
      check(x);
      vals.push_back(&value(x.id));
      in_dims.push_back(value(x.id).dims());
      ids.push_back(x.id);
      rg = rg || wants_grad(x.id);
    }
    TensorT<T> y = kernels::concat_channels_forward(vals);
    return push(y, rg, false, [in_dims, ids](Tape<T>& t, const TensorT<T>& g) {
      std::vector<TensorT<T>*> dxs(ids.size(), nullptr);
      for (size_t i = 0; i < ids.size(); ++i)
        if (t.wants_grad(ids[i])) dxs[i] = &t.grad_buf(ids[i]);
      kernels::concat_channels_backward(g, in_dims, dxs);
    });
  }

  Var<T> add(Var<T> a, Var<T> b) {
    check(a);
    check(b);
    TensorT<T> y = kernels::add_forward(a.value(), b.value());
    const int aid = a.id, bid = b.id;
    return push(y, wants_grad(aid) || wants_grad(bid), false,
                [aid, bid](Tape<T>& t, const TensorT<T>& g) {
                  for (int id : {aid, bid}) {
                    if (!t.wants_grad(id)) continue;
                    TensorT<T>& dst = t.grad_buf(id);
                    for (int64_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
                  }
                });
  }

  Var<T> mul(Var<T> a, Var<T> b) {
    check(a);
    check(b);
    TensorT<T> av = a.value();
    TensorT<T> bv = b.value();
    TensorT<T> y = kernels::mul_forward(av, bv);
    const int aid = a.id, bid = b.id;
    return push(y, wants_grad(aid) || wants_grad(bid), false,
                [av, bv, aid, bid](Tape<T>& t, const TensorT<T>& g) {
                  if (t.wants_grad(aid)) {
                    TensorT<T>& da = t.grad_buf(aid);
                    for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * bv[i];
                  }
                  if (t.wants_grad(bid)) {
                    TensorT<T>& db = t.grad_buf(bid);
                    for (int64_t i = 0; i < g.numel(); ++i) db[i] += g[i] * av[i];
                  }
                });
  }

  Var<T> sum(Var<T> x) {
    check(x);
    TensorT<T> y = kernels::sum_forward(x.value());
    const int xid = x.id;
    return push(y, wants_grad(xid), false, [xid](Tape<T>& t, const TensorT<T>& g) {
      if (!t.wants_grad(xid)) return;
      TensorT<T>& dx = t.grad_buf(xid);
      for (int64_t i = 0; i < dx.numel(); ++i) dx[i] += g[0];
    });
  }

 private:
  struct Node {
    TensorT<T> value;
    TensorT<T> grad;
    BackFn back;
    bool requires_grad = false;
    bool leaf = false;
  };

  void check(const Var<T>& v) const {
    if (!v.defined() || v.tape != this) throw ArgumentError("op input not on this tape");
  }

  Var<T> push(TensorT<T> value, bool requires_grad, bool leaf, BackFn back) {
    Node nd;
    nd.value = std::move(value);
    nd.requires_grad = requires_grad;
    nd.leaf = leaf;
    if (requires_grad && !leaf) nd.back = std::move(back);
    nodes_.push_back(std::move(nd));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  double min_relu_abs_ = std::numeric_limits<double>::infinity();
};

template <typename T>
const TensorT<T>& Var<T>::value() const {
  if (!defined()) throw ArgumentError("value() on undefined var");
  return tape->value(id);
}

using VarF = Var<float>;
using TapeF = Tape<float>;

}  // namespace kiprn
