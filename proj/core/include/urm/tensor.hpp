// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <initializer_list>
#include <memory>
#include <vector>

#include "urm/common.hpp"
#include "urm/rng.hpp"

namespace urm {

/// Flat element buffer with a runtime precision tag. Exactly one of the two
/// typed vectors is populated.
class Storage {
 public:
  Storage() = default;
  Storage(Precision p, std::size_t n) : prec_(p) {
    if (p == Precision::f32)
      f_.assign(n, 0.0f);
    else
      d_.assign(n, 0.0);
  }

  Precision precision() const { return prec_; }
  std::size_t size() const {
    return prec_ == Precision::f32 ? f_.size() : d_.size();
  }

  template <class T>
  T* data();
  template <class T>
  const T* data() const;

  double get(std::size_t i) const {
    return prec_ == Precision::f32 ? static_cast<double>(f_[i]) : d_[i];
  }
  void set(std::size_t i, double v) {
    if (prec_ == Precision::f32)
      f_[i] = static_cast<float>(v);
    else
      d_[i] = v;
  }
  void add(std::size_t i, double v) {
    if (prec_ == Precision::f32)
      f_[i] += static_cast<float>(v);
    else
      d_[i] += v;
  }
  void fill(double v) {
    if (prec_ == Precision::f32)
      f_.assign(f_.size(), static_cast<float>(v));
    else
      d_.assign(d_.size(), v);
  }

  bool all_finite() const;

  bool operator==(const Storage& other) const {
    return prec_ == other.prec_ && f_ == other.f_ && d_ == other.d_;
  }

 private:
  Precision prec_ = Precision::f32;
  std::vector<float> f_;
  std::vector<double> d_;
};

template <>
inline float* Storage::data<float>() {
  return f_.data();
}
template <>
inline double* Storage::data<double>() {
  return d_.data();
}
template <>
inline const float* Storage::data<float>() const {
  return f_.data();
}
template <>
inline const double* Storage::data<double>() const {
  return d_.data();
}

/// Call f with a value of the scalar type selected by p.
template <class F>
auto dispatch(Precision p, F&& f) {
  return p == Precision::f32 ? f(float{}) : f(double{});
}

struct TensorImpl {
  Shape shape;
  Storage data;
  bool requires_grad = false;  // user-marked trainable leaf
  bool grad_path = false;      // gradient flows to or through this tensor
  bool from_op = false;        // produced by a recorded primitive
  std::unique_ptr<Storage> grad;
};

/// Dense n-dimensional array, row-major, value-semantic handle to shared
/// storage. Data is immutable after creation except through mutable_data(),
/// which is reserved for initialization and optimizer steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, Precision p = Precision::f32,
                      bool requires_grad = false);
  static Tensor full(Shape shape, double v, Precision p = Precision::f32);
  static Tensor scalar(double v, Precision p = Precision::f64);
  /// Literal constructor for tests and small fixtures.
  static Tensor of(Shape shape, std::initializer_list<double> values,
                   Precision p = Precision::f64);
  static Tensor from_vec(Shape shape, const std::vector<double>& values,
                         Precision p);
  static Tensor randn(Shape shape, Rng& rng, double mean, double stddev,
                      Precision p, bool requires_grad = false);
  static Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi,
                             Precision p, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  Precision precision() const { return impl_->data.precision(); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v);
  bool grad_path() const { return impl_->grad_path; }
  void mark_from_op() {
    impl_->from_op = true;
    impl_->grad_path = true;
  }
  bool is_leaf() const { return !impl_->from_op; }

  double at(std::size_t flat) const { return impl_->data.get(flat); }
  /// Read the single element of a scalar tensor.
  double item() const;

  template <class T>
  const T* cdata() const {
    return impl_->data.data<T>();
  }
  template <class T>
  T* mutable_data() {
    return impl_->data.data<T>();
  }
  const Storage& storage() const { return impl_->data; }
  Storage& mutable_storage() { return impl_->data; }

  bool has_grad() const { return impl_->grad != nullptr; }
  const Storage& grad() const;
  Storage& grad_or_alloc();
  double grad_at(std::size_t flat) const { return grad().get(flat); }
  void zero_grad() {
    if (impl_->grad) impl_->grad->fill(0.0);
  }
  void accumulate_grad(const Storage& g);

  /// Deep copy; the result is a fresh leaf with no grad buffer.
  Tensor clone() const;
  /// Copy-convert to the target precision (fresh leaf).
  Tensor cast(Precision p) const;

  bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }
  TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

}  // namespace urm
