#include "vrx/kernels/kernels.hpp"

#include <algorithm>
#include <cstring>

#include "vrx/common.hpp"

// Reference kernels. Plain loops, mul-then-add rounding, sequential-k
// accumulation in matmul; the AVX2 variants reproduce exactly this order for
// everything except the reductions.
namespace vrx::kern {
namespace {

void s_add(const double* a, const double* b, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
}

void s_sub(const double* a, const double* b, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
}

void s_mul(const double* a, const double* b, double* c, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

void s_axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void s_scale(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

void s_fill(double value, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = value;
}

void s_relu(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void s_relu_backward(const double* y, const double* dy, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
}

double s_dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double s_sum(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

double s_max(const double* a, std::size_t n) {
  double m = a[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, a[i]);
  return m;
}

double s_sqdist(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void s_matmul_rows(const double* a, const double* b, double* c, std::size_t lo, std::size_t hi,
                   std::size_t k, std::size_t n) {
  for (std::size_t i = lo; i < hi; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void s_matmul_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n) {
  // Parallel over output rows; each row is written by exactly one worker.
  if (m * k * n < (1u << 16)) {
    s_matmul_rows(a, b, c, 0, m, k, n);
    return;
  }
  parallel_for(m, [&](std::size_t lo, std::size_t hi) { s_matmul_rows(a, b, c, lo, hi, k, n); });
}

}  // namespace

const Kernels& scalar_table() {
  static const Kernels table = {
      s_add,  s_sub, s_mul, s_axpy,   s_scale,         s_fill, s_relu, s_relu_backward,
      s_dot,  s_sum, s_max, s_sqdist, s_matmul_nn_acc, "scalar",
  };
  return table;
}

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
  active().fill(0.0, c, m * n);
  active().matmul_nn_acc(a, b, c, m, k, n);
}

void transpose(const double* a, double* b, std::size_t m, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) b[j * m + i] = a[i * k + j];
}

}  // namespace vrx::kern
