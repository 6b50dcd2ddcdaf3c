#pragma once

#include <cstddef>
#include <string>

// Double-precision compute kernels behind the tensor layer. Every kernel has
// a scalar reference implementation and (on x86-64 with AVX2) a vectorized
// variant; the active table is chosen once at startup.
//
// Equivalence contract, checked by tests/test_kernels.cpp:
//   - elementwise ops, axpy, scale and matmul_nn produce bitwise-identical
//     results in both variants (same operation order, no FMA),
//   - reductions (dot, sum, sqdist, max) may differ by accumulation order
//     and are compared at tolerance.
namespace vrx::kern {

struct Kernels {
  // c = a + b, c = a - b, c = a * b (same length).
  void (*add)(const double* a, const double* b, double* c, std::size_t n);
  void (*sub)(const double* a, const double* b, double* c, std::size_t n);
  void (*mul)(const double* a, const double* b, double* c, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = alpha * x
  void (*scale)(double alpha, const double* x, double* y, std::size_t n);
  void (*fill)(double value, double* y, std::size_t n);
  // y = max(x, 0)
  void (*relu)(const double* x, double* y, std::size_t n);
  // dy masked by the forward output: dx = dy where y > 0 else 0
  void (*relu_backward)(const double* y, const double* dy, double* dx, std::size_t n);

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*max)(const double* a, std::size_t n);
  double (*sqdist)(const double* a, const double* b, std::size_t n);

  // C[m x n] += A[m x k] * B[k x n], row-major, C must be pre-zeroed by the
  // caller when a plain product is wanted. Row-parallel over m.
  void (*matmul_nn_acc)(const double* a, const double* b, double* c, std::size_t m,
                        std::size_t k, std::size_t n);

  const char* name;
};

// Active table (scalar or avx2, chosen at load time; override with
// VRX_KERNELS=scalar|avx2).
const Kernels& active();
const Kernels& scalar_table();
// Null when this build/host has no AVX2 path.
const Kernels* avx2_table();
bool cpu_has_avx2();

// Convenience wrappers around the active table.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n);
// b[k x m] = a[m x k] transposed.
void transpose(const double* a, double* b, std::size_t m, std::size_t k);

}  // namespace vrx::kern
