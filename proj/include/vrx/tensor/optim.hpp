#pragma once

#include "vrx/tensor/tensor.hpp"

namespace vrx::ad {

// Adam with bias correction. Moment buffers are aligned to the parameter
// list given at construction; the step consumes each parameter's grad().
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit Adam(std::vector<Tensor> params, double beta1 = 0.9, double beta2 = 0.999);

  void step(double lr);
  const std::vector<Tensor>& params() const { return params_; }
  std::size_t step_count() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace vrx::ad
