#include "vrx/tensor/optim.hpp"

#include <cmath>

namespace vrx::ad {

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2)
    : beta1(beta1), beta2(beta2), params_(std::move(params)) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto& data = params_[p].data();
    const auto& g = params_[p].grad();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace vrx::ad
