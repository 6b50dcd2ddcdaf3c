#pragma once

#include <span>

#include "vrx/tensor/tensor.hpp"

// Differentiable primitives. Each op computes eagerly with the active kernel
// table and, when a tape is supplied and some input requires grad, records
// its adjoint. Pass tape = nullptr for inference.
namespace vrx::ad {

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

// out = a * s with s a one-element tensor (trainable scalar).
Tensor scalar_mul(const Tensor& a, const Tensor& s, Tape* tape = nullptr);
// out = a * c with a plain constant.
Tensor scale(const Tensor& a, double c, Tape* tape = nullptr);

// a: [m x k], b: [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
// mat: [m x n], bias: [n]; adds bias to every row.
Tensor bias_add(const Tensor& mat, const Tensor& bias, Tape* tape = nullptr);

Tensor concat(std::span<const Tensor> parts, std::size_t axis, Tape* tape = nullptr);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis, Tape* tape = nullptr);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len,
             Tape* tape = nullptr);
// One element by flat index, as a scalar tensor.
Tensor pick(const Tensor& a, std::size_t flat_index, Tape* tape = nullptr);
Tensor reshape(const Tensor& a, Shape new_shape, Tape* tape = nullptr);

Tensor relu(const Tensor& a, Tape* tape = nullptr);
// Softmax over the last axis (vector or rows of a matrix).
Tensor softmax(const Tensor& a, Tape* tape = nullptr);
// Mean absolute difference, scalar.
Tensor l1_loss(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor sum(const Tensor& a, Tape* tape = nullptr);
Tensor mean(const Tensor& a, Tape* tape = nullptr);

// logits: [batch x classes]; mean negative log-likelihood.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels,
                             Tape* tape = nullptr);

// Per-feature standardization over the batch (rows) with learned scale/shift
// and running statistics. Input [batch x features].
struct BatchNorm {
  Tensor gamma, beta;
  std::vector<double> running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t features);
  std::size_t features() const { return running_mean.size(); }
};

Tensor batch_norm(const Tensor& x, BatchNorm& bn, bool training, Tape* tape = nullptr);

}  // namespace vrx::ad
