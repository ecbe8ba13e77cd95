#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <vector>

#include "kiprn/common.hpp"
#include "kiprn/rng.hpp"

namespace kiprn {

// Dense row-major tensor. Images are NCHW. The buffer is shared so copies
// are handles; code that mutates in place (parameter updates) owns the only
// logical reference by contract.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  static TensorT zeros(std::vector<int> dims) {
    TensorT t;
    t.dims_ = std::move(dims);
    t.check_dims();
    t.data_ = std::make_shared<std::vector<T>>(t.count(), T(0));
    return t;
  }

  static TensorT full(std::vector<int> dims, T v) {
    TensorT t = zeros(std::move(dims));
    std::fill(t.data_->begin(), t.data_->end(), v);
    return t;
  }

  static TensorT from(std::vector<int> dims, std::vector<T> values) {
    TensorT t;
    t.dims_ = std::move(dims);
    t.check_dims();
    if (static_cast<int64_t>(values.size()) != t.count())
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match dims " + dims_str(t.dims_));
    t.data_ = std::make_shared<std::vector<T>>(std::move(values));
    return t;
  }

  static TensorT uniform(std::vector<int> dims, Rng& rng, double lo, double hi) {
    TensorT t = zeros(std::move(dims));
    for (auto& v : *t.data_) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  const std::vector<int>& dims() const { return dims_; }
  int dim(size_t i) const { return dims_.at(i); }
  int rank() const { return static_cast<int>(dims_.size()); }
  int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
  bool defined() const { return static_cast<bool>(data_); }

  T* ptr() { return data_->data(); }
  const T* ptr() const { return data_->data(); }
  std::vector<T>& vec() { return *data_; }
  const std::vector<T>& vec() const { return *data_; }

  T& operator[](int64_t i) { return (*data_)[i]; }
  T operator[](int64_t i) const { return (*data_)[i]; }

  // NCHW accessor.
  T& at(int n, int c, int h, int w) {
    return (*data_)[((static_cast<int64_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  T at(int n, int c, int h, int w) const {
    return (*data_)[((static_cast<int64_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }

  TensorT clone() const {
    TensorT t;
    t.dims_ = dims_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    return t;
  }

  TensorT<float> to_f32() const {
    std::vector<float> out(data_->begin(), data_->end());
    return TensorT<float>::from(dims_, std::move(out));
  }
  TensorT<double> to_f64() const {
    std::vector<double> out(data_->begin(), data_->end());
    return TensorT<double>::from(dims_, std::move(out));
  }

  bool same_dims(const TensorT& o) const { return dims_ == o.dims_; }

  bool bitwise_equal(const TensorT& o) const {
    if (dims_ != o.dims_) return false;
    return std::memcmp(ptr(), o.ptr(), sizeof(T) * numel()) == 0;
  }

 private:
  int64_t count() const {
    int64_t n = 1;
    for (int d : dims_) n *= d;
    return n;
  }
  void check_dims() const {
    for (int d : dims_)
      if (d <= 0) throw ShapeError("non-positive dimension in " + dims_str(dims_));
  }

  std::vector<int> dims_;
  std::shared_ptr<std::vector<T>> data_;
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (int64_t i = 0; i < t.numel(); ++i)
    if (!std::isfinite(static_cast<double>(t[i]))) return false;
  return true;
}

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<T>& b) {
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace kiprn
