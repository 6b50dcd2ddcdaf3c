#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vrx/common.hpp"

namespace vrx::ad {

// Dense f64 tensor. Copies are shallow handles onto one storage, which is
// what the tape needs to accumulate gradients in place; use clone() for a
// deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar(double v);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;

  std::vector<double>& data();
  const std::vector<double>& data() const;
  double* ptr() { return data().data(); }
  const double* ptr() const { return data().data(); }

  // Value of a one-element tensor.
  double value() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool v);

  // Gradient storage, allocated (zeroed) on first access.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  bool all_finite() const;

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    mutable std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
  Impl& impl();
  const Impl& impl() const;
};

// Records primitive applications in execution order. backward() replays the
// adjoints once, in exact reverse order, which makes gradients bitwise
// reproducible for identical tapes.
class Tape {
 public:
  // `adjoint` must read the output gradient and accumulate into the input
  // gradients. `touched` lists every tensor whose grad the entry reads or
  // writes, so backward() can zero them up front.
  void record(std::function<void()> adjoint, std::vector<Tensor> touched);

  // Populates grads for everything reachable from `root` (leaves and
  // intermediates alike). Throws on a non-scalar root or a consumed tape.
  void backward(const Tensor& root);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  void reset();

 private:
  struct Entry {
    std::function<void()> adjoint;
  };
  std::vector<Entry> entries_;
  std::vector<Tensor> touched_;
  bool consumed_ = false;
};

}  // namespace vrx::ad
