// AVX2 variants. Compiled with -mavx2 only in this translation unit; the
// dispatcher never calls into here unless the CPU reports AVX2.
//
// Elementwise ops and matmul keep the scalar operation order (mul then add,
// sequential k) so they are bitwise-equal to the reference. Reductions use
// 4 vector accumulators and differ from the reference only by rounding.
#include "vrx/kernels/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define VRX_HAVE_AVX2_TU 1
#include <immintrin.h>
#else
#define VRX_HAVE_AVX2_TU 0
#endif

#include <algorithm>

#include "vrx/common.hpp"

namespace vrx::kern {

#if VRX_HAVE_AVX2_TU

namespace {

void v_add(const double* a, const double* b, double* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) c[i] = a[i] + b[i];
}

void v_sub(const double* a, const double* b, double* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) c[i] = a[i] - b[i];
}

void v_mul(const double* a, const double* b, double* c, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(c + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) c[i] = a[i] * b[i];
}

void v_axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void v_scale(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = alpha * x[i];
}

void v_fill(double value, double* y, std::size_t n) {
  const __m256d vv = _mm256_set1_pd(value);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, vv);
  for (; i < n; ++i) y[i] = value;
}

void v_relu(const double* x, double* y, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void v_relu_backward(const double* y, const double* dy, double* dx, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(y + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(dx + i, _mm256_and_pd(mask, _mm256_loadu_pd(dy + i)));
  }
  for (; i < n; ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
}

double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double v_dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double v_sum(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

double v_max(const double* a, std::size_t n) {
  // max is order-insensitive, so this matches the reference bitwise.
  if (n < 4) {
    double m = a[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, a[i]);
    return m;
  }
  __m256d acc = _mm256_loadu_pd(a);
  std::size_t i = 4;
  for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(a + i));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double m = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
  for (; i < n; ++i) m = std::max(m, a[i]);
  return m;
}

double v_sqdist(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void v_matmul_rows(const double* a, const double* b, double* c, std::size_t lo, std::size_t hi,
                   std::size_t k, std::size_t n) {
  for (std::size_t i = lo; i < hi; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d av = _mm256_set1_pd(arow[p]);
      const double* brow = b + p * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(brow + j));
        _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
      }
      const double avs = arow[p];
      for (; j < n; ++j) crow[j] += avs * brow[j];
    }
  }
}

void v_matmul_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n) {
  if (m * k * n < (1u << 16)) {
    v_matmul_rows(a, b, c, 0, m, k, n);
    return;
  }
  parallel_for(m, [&](std::size_t lo, std::size_t hi) { v_matmul_rows(a, b, c, lo, hi, k, n); });
}

}  // namespace

const Kernels* avx2_table() {
  if (!cpu_has_avx2()) return nullptr;
  static const Kernels table = {
      v_add,  v_sub, v_mul, v_axpy,   v_scale,         v_fill, v_relu, v_relu_backward,
      v_dot,  v_sum, v_max, v_sqdist, v_matmul_nn_acc, "avx2",
  };
  return &table;
}

#else

const Kernels* avx2_table() { return nullptr; }

#endif  // VRX_HAVE_AVX2_TU

}  // namespace vrx::kern
