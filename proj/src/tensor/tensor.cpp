#include "vrx/tensor/tensor.hpp"

#include <cmath>

#include "vrx/kernels/kernels.hpp"

namespace vrx::ad {

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
  impl_ = std::make_shared<Impl>();
  impl_->shape = std::move(shape);
  impl_->data.assign(shape_numel(impl_->shape), fill);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != data.size())
    throw ShapeError("Tensor::from_data: shape " + shape_str(shape) + " wants " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(data);
  return t;
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = rng.normal(0.0, stddev);
  return t;
}

Tensor::Impl& Tensor::impl() {
  if (!impl_) throw Error("use of an undefined Tensor");
  return *impl_;
}

const Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw Error("use of an undefined Tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }
std::size_t Tensor::numel() const { return impl().data.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = impl().shape;
  if (axis >= s.size())
    throw ShapeError("Tensor::dim: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  return s[axis];
}

std::vector<double>& Tensor::data() { return impl().data; }
const std::vector<double>& Tensor::data() const { return impl().data; }

double Tensor::value() const {
  if (numel() != 1)
    throw ShapeError("Tensor::value: tensor " + shape_str(shape()) + " is not a scalar");
  return impl().data[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
  impl().requires_grad = v;
  return *this;
}

std::vector<double>& Tensor::grad() {
  Impl& im = impl();
  if (im.grad.size() != im.data.size()) im.grad.assign(im.data.size(), 0.0);
  return im.grad;
}

const std::vector<double>& Tensor::grad() const {
  const Impl& im = impl();
  if (im.grad.size() != im.data.size()) im.grad.assign(im.data.size(), 0.0);
  return im.grad;
}

void Tensor::zero_grad() {
  Impl& im = impl();
  im.grad.assign(im.data.size(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.impl_ = std::make_shared<Impl>(impl());
  return t;
}

bool Tensor::all_finite() const {
  for (double v : impl().data)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tape::record(std::function<void()> adjoint, std::vector<Tensor> touched) {
  entries_.push_back(Entry{std::move(adjoint)});
  for (auto& t : touched) touched_.push_back(std::move(t));
}

void Tape::backward(const Tensor& root) {
  if (consumed_) throw Error("Tape::backward called twice without a fresh forward pass");
  if (root.numel() != 1)
    throw ShapeError("Tape::backward: root must be scalar, got " + shape_str(root.shape()));
  consumed_ = true;
  for (auto& t : touched_) t.zero_grad();
  Tensor seed = root;
  seed.grad()[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->adjoint();
}

void Tape::reset() {
  entries_.clear();
  touched_.clear();
  consumed_ = false;
}

}  // namespace vrx::ad
