#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <vector>

#include "vrx/common.hpp"
#include "vrx/kernels/kernels.hpp"

using namespace vrx;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("scalar and avx2 kernels agree") {
  const kern::Kernels& s = kern::scalar_table();
  const kern::Kernels* v = kern::avx2_table();
  if (!v) {
    MESSAGE("AVX2 unavailable on this host; skipping equivalence checks");
    return;
  }
  Rng rng(42);
  for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 129u, 1000u}) {
    auto a = random_vec(n, rng), b = random_vec(n, rng);
    std::vector<double> out_s(n), out_v(n);

    // Elementwise ops: bitwise identical by construction.
    s.add(a.data(), b.data(), out_s.data(), n);
    v->add(a.data(), b.data(), out_v.data(), n);
    CHECK(out_s == out_v);
    s.sub(a.data(), b.data(), out_s.data(), n);
    v->sub(a.data(), b.data(), out_v.data(), n);
    CHECK(out_s == out_v);
    s.mul(a.data(), b.data(), out_s.data(), n);
    v->mul(a.data(), b.data(), out_v.data(), n);
    CHECK(out_s == out_v);
    s.relu(a.data(), out_s.data(), n);
    v->relu(a.data(), out_v.data(), n);
    CHECK(out_s == out_v);
    s.scale(1.7, a.data(), out_s.data(), n);
    v->scale(1.7, a.data(), out_v.data(), n);
    CHECK(out_s == out_v);

    auto ys = random_vec(n, rng);
    auto yv = ys;
    s.axpy(-0.3, a.data(), ys.data(), n);
    v->axpy(-0.3, a.data(), yv.data(), n);
    CHECK(ys == yv);

    // relu_backward masks by the forward output.
    s.relu(a.data(), out_s.data(), n);
    std::vector<double> dx_s(n), dx_v(n);
    s.relu_backward(out_s.data(), b.data(), dx_s.data(), n);
    v->relu_backward(out_s.data(), b.data(), dx_v.data(), n);
    CHECK(dx_s == dx_v);

    // max is order-insensitive: bitwise too.
    CHECK(s.max(a.data(), n) == v->max(a.data(), n));

    // Reductions may differ by accumulation order only.
    CHECK(s.dot(a.data(), b.data(), n) ==
          doctest::Approx(v->dot(a.data(), b.data(), n)).epsilon(1e-12));
    CHECK(s.sum(a.data(), n) == doctest::Approx(v->sum(a.data(), n)).epsilon(1e-12));
    CHECK(s.sqdist(a.data(), b.data(), n) ==
          doctest::Approx(v->sqdist(a.data(), b.data(), n)).epsilon(1e-12));
  }
}

TEST_CASE("matmul matches the scalar reference bitwise") {
  const kern::Kernels& s = kern::scalar_table();
  const kern::Kernels* v = kern::avx2_table();
  if (!v) return;
  Rng rng(7);
  for (auto [m, k, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1},
                         {3, 4, 2},
                         {17, 9, 5},
                         {64, 27, 16},
                         {33, 64, 7}}) {
    auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
    std::vector<double> cs(m * n, 0.0), cv(m * n, 0.0);
    s.matmul_nn_acc(a.data(), b.data(), cs.data(), m, k, n);
    v->matmul_nn_acc(a.data(), b.data(), cv.data(), m, k, n);
    CHECK(cs == cv);
  }
}

TEST_CASE("matmul against a plain triple loop") {
  Rng rng(3);
  const std::size_t m = 5, k = 7, n = 4;
  auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
  std::vector<double> got(m * n);
  kern::matmul(a.data(), b.data(), got.data(), m, k, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double want = 0.0;
      for (std::size_t p = 0; p < k; ++p) want += a[i * k + p] * b[p * n + j];
      CHECK(got[i * n + j] == doctest::Approx(want).epsilon(1e-13));
    }
}

TEST_CASE("transpose round trip") {
  Rng rng(11);
  auto a = random_vec(6 * 9, rng);
  std::vector<double> t(9 * 6), back(6 * 9);
  kern::transpose(a.data(), t.data(), 6, 9);
  kern::transpose(t.data(), back.data(), 9, 6);
  CHECK(a == back);
}

TEST_CASE("dispatch reports an active table") {
  CHECK(kern::active().name != nullptr);
  // On an AVX2 host the vector table must be selected by default (unless the
  // environment forces scalar).
  if (kern::cpu_has_avx2() && std::getenv("VRX_KERNELS") == nullptr)
    CHECK(std::string(kern::active().name) == "avx2");
}
