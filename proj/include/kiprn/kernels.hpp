#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <optional>
#include <vector>

#include "kiprn/blas.hpp"
#include "kiprn/common.hpp"
#include "kiprn/tensor.hpp"

// Raw numeric kernels: forward math plus explicit backward rules. The
// autograd layer wraps these; tests drive them directly. All backward
// kernels ACCUMULATE into their output buffers so chained contributions and
// per-sample GEMMs share one code path.
namespace kiprn::kernels {

// ---------------------------------------------------------------------------
// conv2d (cross-correlation), NCHW, symmetric zero padding, square stride.
// Output spatial dims use floor semantics: (in + 2*pad - k) / stride + 1.
// ---------------------------------------------------------------------------

struct ConvDims {
  int n, cin, h, w;
  int cout, kh, kw;
  int stride, pad;
  int oh, ow;
  int64_t k() const { return static_cast<int64_t>(cin) * kh * kw; }
  int64_t ohw() const { return static_cast<int64_t>(oh) * ow; }
};

template <typename T>
ConvDims conv2d_dims(const TensorT<T>& x, const TensorT<T>& w, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4)
    throw ShapeError("conv2d expects NCHW input and OIHW weight, got " + dims_str(x.dims()) +
                     " and " + dims_str(w.dims()));
  if (w.dim(1) != x.dim(1))
    throw ShapeError("conv2d channel mismatch: input " + dims_str(x.dims()) + " vs weight " +
                     dims_str(w.dims()));
  if (w.dim(2) % 2 == 0 || w.dim(3) % 2 == 0)
    throw ShapeError("conv2d kernel dims must be odd, got " + dims_str(w.dims()));
  if (stride < 1) throw ArgumentError("conv2d stride must be positive");
  if (pad < 0) throw ArgumentError("conv2d padding must be non-negative");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3),
             stride,   pad,      0,        0};
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.h + 2 * pad - d.kh < 0 || d.w + 2 * pad - d.kw < 0 || d.oh < 1 || d.ow < 1)
    throw ShapeError("conv2d non-positive output size for input " + dims_str(x.dims()) +
                     " weight " + dims_str(w.dims()));
  return d;
}

template <typename T>
void im2col(const T* x, const ConvDims& d, T* col) {
  const int64_t plane = static_cast<int64_t>(d.h) * d.w;
  const int64_t ohw = d.ohw();
  int64_t r = 0;
  for (int c = 0; c < d.cin; ++c) {
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx, ++r) {
        T* dst = col + r * ohw;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          T* drow = dst + static_cast<int64_t>(oy) * d.ow;
          if (iy < 0 || iy >= d.h) {
            std::fill(drow, drow + d.ow, T(0));
            continue;
          }
          const T* srow = x + c * plane + static_cast<int64_t>(iy) * d.w;
          if (d.stride == 1) {
            const int ix0 = kx - d.pad;
            const int lo = std::max(0, -ix0);
            const int hi = std::min(d.ow, d.w - ix0);
            if (lo > 0) std::fill(drow, drow + std::min(lo, d.ow), T(0));
            if (hi < d.ow) std::fill(drow + std::max(lo, hi), drow + d.ow, T(0));
            if (hi > lo) std::memcpy(drow + lo, srow + ix0 + lo, sizeof(T) * (hi - lo));
          } else {
            for (int ox = 0; ox < d.ow; ++ox) {
              const int ix = ox * d.stride + kx - d.pad;
              drow[ox] = (ix >= 0 && ix < d.w) ? srow[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& d, T* dx) {
  const int64_t plane = static_cast<int64_t>(d.h) * d.w;
  const int64_t ohw = d.ohw();
  int64_t r = 0;
  for (int c = 0; c < d.cin; ++c) {
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx, ++r) {
        const T* src = col + r * ohw;
        for (int oy = 0; oy < d.oh; ++oy) {
          const int iy = oy * d.stride + ky - d.pad;
          if (iy < 0 || iy >= d.h) continue;
          const T* srow = src + static_cast<int64_t>(oy) * d.ow;
          T* drow = dx + c * plane + static_cast<int64_t>(iy) * d.w;
          for (int ox = 0; ox < d.ow; ++ox) {
            const int ix = ox * d.stride + kx - d.pad;
            if (ix >= 0 && ix < d.w) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

template <typename T>
std::vector<T>& conv_scratch() {
  thread_local std::vector<T> buf;
  return buf;
}

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* bias,
                          int stride, int pad) {
  const ConvDims d = conv2d_dims(x, w, stride, pad);
  if (bias && (bias->rank() != 1 || bias->dim(0) != d.cout))
    throw ShapeError("conv2d bias dims " + dims_str(bias->dims()) + " do not match out channels " +
                     std::to_string(d.cout));
  TensorT<T> y = TensorT<T>::zeros({d.n, d.cout, d.oh, d.ow});
  const int64_t k = d.k(), ohw = d.ohw();
  const bool pointwise = (d.kh == 1 && d.kw == 1 && d.stride == 1 && d.pad == 0);
  std::vector<T>& col = conv_scratch<T>();
  if (!pointwise) col.resize(static_cast<size_t>(k * ohw));
  for (int n = 0; n < d.n; ++n) {
    const T* xn = x.ptr() + static_cast<int64_t>(n) * d.cin * d.h * d.w;
    const T* cn = xn;
    if (!pointwise) {
      im2col(xn, d, col.data());
      cn = col.data();
    }
    T* yn = y.ptr() + static_cast<int64_t>(n) * d.cout * ohw;
    blas::gemm(false, false, d.cout, static_cast<int>(ohw), static_cast<int>(k), T(1), w.ptr(),
               static_cast<int>(k), cn, static_cast<int>(ohw), T(0), yn, static_cast<int>(ohw));
    if (bias) {
      for (int o = 0; o < d.cout; ++o) {
        const T b = (*bias)[o];
        T* row = yn + static_cast<int64_t>(o) * ohw;
        for (int64_t i = 0; i < ohw; ++i) row[i] += b;
      }
    }
  }
  return y;
}

template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gout,
                     int stride, int pad, TensorT<T>* dx, TensorT<T>* dw, TensorT<T>* db) {
  const ConvDims d = conv2d_dims(x, w, stride, pad);
  const int64_t k = d.k(), ohw = d.ohw();
  const bool pointwise = (d.kh == 1 && d.kw == 1 && d.stride == 1 && d.pad == 0);
  std::vector<T>& col = conv_scratch<T>();
  std::vector<T> dcol;
  if (!pointwise) {
    if (dw) col.resize(static_cast<size_t>(k * ohw));
    if (dx) dcol.resize(static_cast<size_t>(k * ohw));
  }
  for (int n = 0; n < d.n; ++n) {
    const T* xn = x.ptr() + static_cast<int64_t>(n) * d.cin * d.h * d.w;
    const T* gn = gout.ptr() + static_cast<int64_t>(n) * d.cout * ohw;
    if (dw) {
      const T* cn = xn;
      if (!pointwise) {
        im2col(xn, d, col.data());
        cn = col.data();
      }
      blas::gemm(false, true, d.cout, static_cast<int>(k), static_cast<int>(ohw), T(1), gn,
                 static_cast<int>(ohw), cn, static_cast<int>(ohw), T(1), dw->ptr(),
                 static_cast<int>(k));
    }
    if (dx) {
      T* dxn = dx->ptr() + static_cast<int64_t>(n) * d.cin * d.h * d.w;
      if (pointwise) {
        blas::gemm(true, false, static_cast<int>(k), static_cast<int>(ohw), d.cout, T(1), w.ptr(),
                   static_cast<int>(k), gn, static_cast<int>(ohw), T(1), dxn,
                   static_cast<int>(ohw));
      } else {
        blas::gemm(true, false, static_cast<int>(k), static_cast<int>(ohw), d.cout, T(1), w.ptr(),
                   static_cast<int>(k), gn, static_cast<int>(ohw), T(0), dcol.data(),
                   static_cast<int>(ohw));
        col2im_add(dcol.data(), d, dxn);
      }
    }
  }
  if (db) {
    for (int n = 0; n < d.n; ++n) {
      const T* gn = gout.ptr() + static_cast<int64_t>(n) * d.cout * ohw;
      for (int o = 0; o < d.cout; ++o) {
        double s = 0;
        const T* row = gn + static_cast<int64_t>(o) * ohw;
        for (int64_t i = 0; i < ohw; ++i) s += static_cast<double>(row[i]);
        (*db)[o] += static_cast<T>(s);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// bilinear_resize, half-pixel centers, clamped borders.
// src = (dst + 0.5) * in/out - 0.5, clamped to [0, in-1].
// ---------------------------------------------------------------------------

struct AxisMap {
  std::vector<int> lo, hi;
  std::vector<double> frac;  // weight of hi
};

inline AxisMap bilinear_axis(int in_size, int out_size) {
  AxisMap m;
  m.lo.resize(out_size);
  m.hi.resize(out_size);
  m.frac.resize(out_size);
  const double scale = static_cast<double>(in_size) / out_size;
  for (int d = 0; d < out_size; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    src = std::min(std::max(src, 0.0), static_cast<double>(in_size - 1));
    const int lo = static_cast<int>(std::floor(src));
    m.lo[d] = lo;
    m.hi[d] = std::min(lo + 1, in_size - 1);
    m.frac[d] = src - lo;
  }
  return m;
}

template <typename T>
TensorT<T> bilinear_forward(const TensorT<T>& x, int out_h, int out_w) {
  if (x.rank() != 4) throw ShapeError("bilinear_resize expects NCHW, got " + dims_str(x.dims()));
  if (out_h < 1 || out_w < 1)
    throw ArgumentError("bilinear_resize target size must be >= 1, got " +
                        std::to_string(out_h) + "x" + std::to_string(out_w));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h == out_h && w == out_w) return x;  // exact identity, shared buffer
  const AxisMap ay = bilinear_axis(h, out_h);
  const AxisMap ax = bilinear_axis(w, out_w);
  TensorT<T> y = TensorT<T>::zeros({n, c, out_h, out_w});
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T* src = x.ptr() + (static_cast<int64_t>(ni) * c + ci) * h * w;
      T* dst = y.ptr() + (static_cast<int64_t>(ni) * c + ci) * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        const T* r0 = src + static_cast<int64_t>(ay.lo[oy]) * w;
        const T* r1 = src + static_cast<int64_t>(ay.hi[oy]) * w;
        const T fy = static_cast<T>(ay.frac[oy]);
        T* drow = dst + static_cast<int64_t>(oy) * out_w;
        for (int ox = 0; ox < out_w; ++ox) {
          const int x0 = ax.lo[ox], x1 = ax.hi[ox];
          const T fx = static_cast<T>(ax.frac[ox]);
          const T top = r0[x0] + fx * (r0[x1] - r0[x0]);
          const T bot = r1[x0] + fx * (r1[x1] - r1[x0]);
          drow[ox] = top + fy * (bot - top);
        }
      }
    }
  }
  return y;
}

template <typename T>
void bilinear_backward(const std::vector<int>& in_dims, const TensorT<T>& gout, TensorT<T>* dx) {
  const int n = in_dims[0], c = in_dims[1], h = in_dims[2], w = in_dims[3];
  const int out_h = gout.dim(2), out_w = gout.dim(3);
  if (h == out_h && w == out_w) {
    for (int64_t i = 0; i < gout.numel(); ++i) (*dx)[i] += gout[i];
    return;
  }
  const AxisMap ay = bilinear_axis(h, out_h);
  const AxisMap ax = bilinear_axis(w, out_w);
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      T* dsrc = dx->ptr() + (static_cast<int64_t>(ni) * c + ci) * h * w;
      const T* g = gout.ptr() + (static_cast<int64_t>(ni) * c + ci) * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        const T fy = static_cast<T>(ay.frac[oy]);
        T* r0 = dsrc + static_cast<int64_t>(ay.lo[oy]) * w;
        T* r1 = dsrc + static_cast<int64_t>(ay.hi[oy]) * w;
        const T* grow = g + static_cast<int64_t>(oy) * out_w;
        for (int ox = 0; ox < out_w; ++ox) {
          const int x0 = ax.lo[ox], x1 = ax.hi[ox];
          const T fx = static_cast<T>(ax.frac[ox]);
          const T gv = grow[ox];
          r0[x0] += gv * (T(1) - fy) * (T(1) - fx);
          r0[x1] += gv * (T(1) - fy) * fx;
          r1[x0] += gv * fy * (T(1) - fx);
          r1[x1] += gv * fy * fx;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// group_norm: per-sample, per-group standardization + channel affine.
// ---------------------------------------------------------------------------

template <typename T>
struct GroupNormSaved {
  TensorT<T> xhat;
  std::vector<double> invstd;  // [n * groups]
};

template <typename T>
TensorT<T> group_norm_forward(const TensorT<T>& x, int groups, const TensorT<T>& gamma,
                              const TensorT<T>& beta, double eps,
                              GroupNormSaved<T>* saved = nullptr) {
  if (x.rank() != 4) throw ShapeError("group_norm expects NCHW, got " + dims_str(x.dims()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (groups < 1 || c % groups != 0)
    throw ArgumentError("group_norm: channels " + std::to_string(c) +
                        " not divisible by groups " + std::to_string(groups));
  if (gamma.numel() != c || beta.numel() != c)
    throw ShapeError("group_norm affine params must have length C=" + std::to_string(c));
  const int cg = c / groups;
  const int64_t gsize = static_cast<int64_t>(cg) * h * w;
  TensorT<T> y = TensorT<T>::zeros({n, c, h, w});
  TensorT<T> xhat = TensorT<T>::zeros({n, c, h, w});
  std::vector<double> invstd(static_cast<size_t>(n) * groups);
  for (int ni = 0; ni < n; ++ni) {
    for (int g = 0; g < groups; ++g) {
      const T* gx = x.ptr() + (static_cast<int64_t>(ni) * c + static_cast<int64_t>(g) * cg) * h * w;
      double mean = 0;
      for (int64_t i = 0; i < gsize; ++i) mean += static_cast<double>(gx[i]);
      mean /= static_cast<double>(gsize);
      double var = 0;
      for (int64_t i = 0; i < gsize; ++i) {
        const double dv = static_cast<double>(gx[i]) - mean;
        var += dv * dv;
      }
      var /= static_cast<double>(gsize);
      const double istd = 1.0 / std::sqrt(var + eps);
      invstd[static_cast<size_t>(ni) * groups + g] = istd;
      T* gh = xhat.ptr() + (static_cast<int64_t>(ni) * c + static_cast<int64_t>(g) * cg) * h * w;
      T* gy = y.ptr() + (static_cast<int64_t>(ni) * c + static_cast<int64_t>(g) * cg) * h * w;
      const int64_t hw = static_cast<int64_t>(h) * w;
      for (int cc = 0; cc < cg; ++cc) {
        const T ga = gamma[static_cast<int64_t>(g) * cg + cc];
        const T be = beta[static_cast<int64_t>(g) * cg + cc];
        for (int64_t i = 0; i < hw; ++i) {
          const T xh = static_cast<T>((static_cast<double>(gx[cc * hw + i]) - mean) * istd);
          gh[cc * hw + i] = xh;
          gy[cc * hw + i] = ga * xh + be;
        }
      }
    }
  }
  if (saved) {
    saved->xhat = xhat;
    saved->invstd = std::move(invstd);
  }
  return y;
}

template <typename T>
void group_norm_backward(const GroupNormSaved<T>& saved, int groups, const TensorT<T>& gamma,
                         const TensorT<T>& gout, TensorT<T>* dx, TensorT<T>* dgamma,
                         TensorT<T>* dbeta) {
  const TensorT<T>& xhat = saved.xhat;
  const int n = xhat.dim(0), c = xhat.dim(1), h = xhat.dim(2), w = xhat.dim(3);
  const int cg = c / groups;
  const int64_t hw = static_cast<int64_t>(h) * w;
  const double m = static_cast<double>(cg) * hw;
  if (dgamma && dbeta) {
    for (int cc = 0; cc < c; ++cc) {
      double sg = 0, sb = 0;
      for (int ni = 0; ni < n; ++ni) {
        const T* gr = gout.ptr() + (static_cast<int64_t>(ni) * c + cc) * hw;
        const T* xh = xhat.ptr() + (static_cast<int64_t>(ni) * c + cc) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          sg += static_cast<double>(gr[i]) * static_cast<double>(xh[i]);
          sb += static_cast<double>(gr[i]);
        }
      }
      (*dgamma)[cc] += static_cast<T>(sg);
      (*dbeta)[cc] += static_cast<T>(sb);
    }
  }
  if (!dx) return;
  for (int ni = 0; ni < n; ++ni) {
    for (int g = 0; g < groups; ++g) {
      const int64_t base = (static_cast<int64_t>(ni) * c + static_cast<int64_t>(g) * cg) * hw;
      const double istd = saved.invstd[static_cast<size_t>(ni) * groups + g];
      double s1 = 0, s2 = 0;
      for (int cc = 0; cc < cg; ++cc) {
        const double ga = static_cast<double>(gamma[static_cast<int64_t>(g) * cg + cc]);
        const T* gr = gout.ptr() + base + cc * hw;
        const T* xh = xhat.ptr() + base + cc * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const double dxh = ga * static_cast<double>(gr[i]);
          s1 += dxh;
          s2 += dxh * static_cast<double>(xh[i]);
        }
      }
      for (int cc = 0; cc < cg; ++cc) {
        const double ga = static_cast<double>(gamma[static_cast<int64_t>(g) * cg + cc]);
        const T* gr = gout.ptr() + base + cc * hw;
        const T* xh = xhat.ptr() + base + cc * hw;
        T* dxp = dx->ptr() + base + cc * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const double dxh = ga * static_cast<double>(gr[i]);
          dxp[i] += static_cast<T>(istd * (dxh - (s1 + static_cast<double>(xh[i]) * s2) / m));
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise and reductions.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
  TensorT<T> y = TensorT<T>::zeros(x.dims());
  for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
void relu_backward(const TensorT<T>& x, const TensorT<T>& gout, TensorT<T>* dx) {
  for (int64_t i = 0; i < x.numel(); ++i)
    if (x[i] > T(0)) (*dx)[i] += gout[i];
}

template <typename T>
TensorT<T> global_avg_pool_forward(const TensorT<T>& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool expects NCHW, got " + dims_str(x.dims()));
  const int n = x.dim(0), c = x.dim(1);
  const int64_t hw = static_cast<int64_t>(x.dim(2)) * x.dim(3);
  TensorT<T> y = TensorT<T>::zeros({n, c});
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T* p = x.ptr() + (static_cast<int64_t>(ni) * c + ci) * hw;
      double s = 0;
      for (int64_t i = 0; i < hw; ++i) s += static_cast<double>(p[i]);
      y[static_cast<int64_t>(ni) * c + ci] = static_cast<T>(s / static_cast<double>(hw));
    }
  }
  return y;
}

template <typename T>
void global_avg_pool_backward(const std::vector<int>& in_dims, const TensorT<T>& gout,
                              TensorT<T>* dx) {
  const int n = in_dims[0], c = in_dims[1];
  const int64_t hw = static_cast<int64_t>(in_dims[2]) * in_dims[3];
  const T inv = static_cast<T>(1.0 / static_cast<double>(hw));
  for (int ni = 0; ni < n; ++ni) {
    for (int ci = 0; ci < c; ++ci) {
      const T g = gout[static_cast<int64_t>(ni) * c + ci] * inv;
      T* p = dx->ptr() + (static_cast<int64_t>(ni) * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i) p[i] += g;
    }
  }
}

template <typename T>
TensorT<T> linear_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* bias) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1))
    throw ShapeError("linear dims mismatch: x " + dims_str(x.dims()) + " w " + dims_str(w.dims()));
  const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
  TensorT<T> y = TensorT<T>::zeros({n, out});
  blas::gemm(false, true, n, out, in, T(1), x.ptr(), in, w.ptr(), in, T(0), y.ptr(), out);
  if (bias) {
    for (int ni = 0; ni < n; ++ni)
      for (int o = 0; o < out; ++o) y[static_cast<int64_t>(ni) * out + o] += (*bias)[o];
  }
  return y;
}

template <typename T>
void linear_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gout,
                     TensorT<T>* dx, TensorT<T>* dw, TensorT<T>* db) {
  const int n = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (dx)
    blas::gemm(false, false, n, in, out, T(1), gout.ptr(), out, w.ptr(), in, T(1), dx->ptr(), in);
  if (dw)
    blas::gemm(true, false, out, in, n, T(1), gout.ptr(), out, x.ptr(), in, T(1), dw->ptr(), in);
  if (db) {
    for (int o = 0; o < out; ++o) {
      double s = 0;
      for (int ni = 0; ni < n; ++ni) s += static_cast<double>(gout[static_cast<int64_t>(ni) * out + o]);
      (*db)[o] += static_cast<T>(s);
    }
  }
}

template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects [N,C], got " + dims_str(logits.dims()));
  const int n = logits.dim(0), c = logits.dim(1);
  TensorT<T> p = TensorT<T>::zeros({n, c});
  for (int ni = 0; ni < n; ++ni) {
    const T* row = logits.ptr() + static_cast<int64_t>(ni) * c;
    T* pr = p.ptr() + static_cast<int64_t>(ni) * c;
    double mx = static_cast<double>(row[0]);
    for (int j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0;
    for (int j = 0; j < c; ++j) {
      const double e = std::exp(static_cast<double>(row[j]) - mx);
      pr[j] = static_cast<T>(e);
      sum += e;
    }
    for (int j = 0; j < c; ++j) pr[j] = static_cast<T>(static_cast<double>(pr[j]) / sum);
  }
  return p;
}

// Mean over the batch of -log softmax(logits)[label]. Returns a scalar
// tensor of dims [1]; probs is saved for the backward rule.
template <typename T>
TensorT<T> softmax_cross_entropy_forward(const TensorT<T>& logits, const std::vector<int>& labels,
                                         TensorT<T>* probs_out) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy expects [N,C] logits");
  const int n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw ArgumentError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                        std::to_string(n));
  for (int l : labels)
    if (l < 0 || l >= c)
      throw ArgumentError("cross_entropy label " + std::to_string(l) + " out of range [0, " +
                          std::to_string(c) + ")");
  TensorT<T> probs = softmax_rows(logits);
  double loss = 0;
  for (int ni = 0; ni < n; ++ni) {
    const T* row = logits.ptr() + static_cast<int64_t>(ni) * c;
    double mx = static_cast<double>(row[0]);
    for (int j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0;
    for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    loss += mx + std::log(sum) - static_cast<double>(row[labels[ni]]);
  }
  if (probs_out) *probs_out = probs;
  return TensorT<T>::from({1}, {static_cast<T>(loss / n)});
}

template <typename T>
void softmax_cross_entropy_backward(const TensorT<T>& probs, const std::vector<int>& labels,
                                    T gout, TensorT<T>* dlogits) {
  const int n = probs.dim(0), c = probs.dim(1);
  const T scale = gout / static_cast<T>(n);
  for (int ni = 0; ni < n; ++ni) {
    const T* pr = probs.ptr() + static_cast<int64_t>(ni) * c;
    T* dl = dlogits->ptr() + static_cast<int64_t>(ni) * c;
    for (int j = 0; j < c; ++j) {
      T g = pr[j];
      if (j == labels[ni]) g -= T(1);
      dl[j] += scale * g;
    }
  }
}

template <typename T>
TensorT<T> concat_channels_forward(const std::vector<const TensorT<T>*>& xs) {
  if (xs.empty()) throw ArgumentError("concat of zero tensors");
  const int n = xs[0]->dim(0), h = xs[0]->dim(2), w = xs[0]->dim(3);
  int c = 0;
  for (const auto* x : xs) {
    if (x->rank() != 4 || x->dim(0) != n || x->dim(2) != h || x->dim(3) != w)
      throw ShapeError("concat_channels input " + dims_str(x->dims()) + " incompatible with " +
                       dims_str(xs[0]->dims()));
    c += x->dim(1);
  }
  TensorT<T> y = TensorT<T>::zeros({n, c, h, w});
  const int64_t hw = static_cast<int64_t>(h) * w;
  for (int ni = 0; ni < n; ++ni) {
    int64_t off = 0;
    for (const auto* x : xs) {
      const int64_t sz = static_cast<int64_t>(x->dim(1)) * hw;
      std::memcpy(y.ptr() + (static_cast<int64_t>(ni) * c) * hw + off,
                  x->ptr() + static_cast<int64_t>(ni) * sz, sizeof(T) * sz);
      off += sz;
    }
  }
  return y;
}

template <typename T>
void concat_channels_backward(const TensorT<T>& gout, const std::vector<std::vector<int>>& in_dims,
                              std::vector<TensorT<T>*> dxs) {
  const int n = gout.dim(0), c = gout.dim(1);
  const int64_t hw = static_cast<int64_t>(gout.dim(2)) * gout.dim(3);
  for (int ni = 0; ni < n; ++ni) {
    int64_t off = 0;
    for (size_t i = 0; i < dxs.size(); ++i) {
      const int64_t sz = static_cast<int64_t>(in_dims[i][1]) * hw;
      if (dxs[i]) {
        T* dst = dxs[i]->ptr() + static_cast<int64_t>(ni) * sz;
        const T* src = gout.ptr() + (static_cast<int64_t>(ni) * c) * hw + off;
        for (int64_t j = 0; j < sz; ++j) dst[j] += src[j];
      }
      off += sz;
    }
  }
}

template <typename T>
TensorT<T> add_forward(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_dims(b))
    throw ShapeError("add dims mismatch: " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
  TensorT<T> y = TensorT<T>::zeros(a.dims());
  for (int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] + b[i];
  return y;
}

template <typename T>
TensorT<T> mul_forward(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_dims(b))
    throw ShapeError("mul dims mismatch: " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
  TensorT<T> y = TensorT<T>::zeros(a.dims());
  for (int64_t i = 0; i < a.numel(); ++i) y[i] = a[i] * b[i];
  return y;
}

template <typename T>
TensorT<T> sum_forward(const TensorT<T>& x) {
  double s = 0;
  for (int64_t i = 0; i < x.numel(); ++i) s += static_cast<double>(x[i]);
  return TensorT<T>::from({1}, {static_cast<T>(s)});
}

}  // namespace kiprn::kernels
