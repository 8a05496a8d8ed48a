// SPDX-License-Identifier: Apache-2.0
#include "urm/tensor.hpp"

#include <cmath>

namespace urm {

bool Storage::all_finite() const {
  if (prec_ == Precision::f32) {
    for (float v : f_)
      if (!std::isfinite(v)) return false;
  } else {
    for (double v : d_)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {
std::shared_ptr<TensorImpl> make_impl(Shape shape, Precision p) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data = Storage(p, shape_numel(shape));
  impl->shape = std::move(shape);
  return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, Precision p, bool requires_grad) {
  Tensor t(make_impl(std::move(shape), p));
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

Tensor Tensor::full(Shape shape, double v, Precision p) {
  Tensor t(make_impl(std::move(shape), p));
  t.impl_->data.fill(v);
  return t;
}

Tensor Tensor::scalar(double v, Precision p) { return full({}, v, p); }

Tensor Tensor::of(Shape shape, std::initializer_list<double> values,
                  Precision p) {
  Tensor t(make_impl(std::move(shape), p));
  if (values.size() != t.numel())
    throw ShapeError("literal size " + std::to_string(values.size()) +
                     " does not fill shape " + shape_str(t.shape()));
  std::size_t i = 0;
  for (double v : values) t.impl_->data.set(i++, v);
  return t;
}

Tensor Tensor::from_vec(Shape shape, const std::vector<double>& values,
                        Precision p) {
  Tensor t(make_impl(std::move(shape), p));
  if (values.size() != t.numel())
    throw ShapeError("buffer size " + std::to_string(values.size()) +
                     " does not fill shape " + shape_str(t.shape()));
  for (std::size_t i = 0; i < values.size(); ++i) t.impl_->data.set(i, values[i]);
  return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, double mean, double stddev,
                     Precision p, bool requires_grad) {
  Tensor t(make_impl(std::move(shape), p));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.impl_->data.set(i, rng.normal(mean, stddev));
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

Tensor Tensor::rand_uniform(Shape shape, Rng& rng, double lo, double hi,
                            Precision p, bool requires_grad) {
  Tensor t(make_impl(std::move(shape), p));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.impl_->data.set(i, rng.uniform(lo, hi));
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

Tensor& Tensor::set_requires_grad(bool v) {
  impl_->requires_grad = v;
  if (v) impl_->grad_path = true;
  return *this;
}

double Tensor::item() const {
  if (numel() != 1)
    throw ContractError("item() on non-scalar tensor of shape " +
                        shape_str(shape()));
  return impl_->data.get(0);
}

const Storage& Tensor::grad() const {
  if (!impl_->grad)
    throw ContractError("tensor has no gradient buffer");
  return *impl_->grad;
}

Storage& Tensor::grad_or_alloc() {
  if (!impl_->grad)
    impl_->grad = std::make_unique<Storage>(precision(), numel());
  return *impl_->grad;
}

void Tensor::accumulate_grad(const Storage& g) {
  Storage& dst = grad_or_alloc();
  const std::size_t n = numel();
  dispatch(precision(), [&](auto tag) {
    using T = decltype(tag);
    T* d = dst.data<T>();
    const T* s = g.data<T>();
    for (std::size_t i = 0; i < n; ++i) d[i] += s[i];
  });
}

Tensor Tensor::clone() const {
  Tensor t(make_impl(shape(), precision()));
  t.impl_->data = impl_->data;
  return t;
}

Tensor Tensor::cast(Precision p) const {
  if (p == precision()) return clone();
  Tensor t(make_impl(shape(), p));
  for (std::size_t i = 0; i < numel(); ++i) t.impl_->data.set(i, at(i));
  return t;
}

}  // namespace urm
