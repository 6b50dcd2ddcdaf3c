#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "fd_check.hpp"
#include "vrx/tensor/io.hpp"
#include "vrx/tensor/optim.hpp"

using namespace vrx;
using ad::Tape;
using ad::Tensor;
using vrx::testing::fd_max_rel_error;

namespace {

Tensor randn(Shape shape, std::uint64_t seed, bool rg = true) {
  Rng rng(seed);
  Tensor t = Tensor::randn(std::move(shape), rng);
  t.set_requires_grad(rg);
  return t;
}

}  // namespace

TEST_CASE("matmul identity and projector") {
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  CHECK(ad::matmul(eye, a).data() == std::vector<double>{1, 2, 3, 4});
  Tensor proj = Tensor::from_data({2, 2}, {1, 0, 0, 0});
  Tensor v = Tensor::from_data({2, 1}, {5, 7});
  CHECK(ad::matmul(proj, v).data() == std::vector<double>{5, 0});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tensor a(Shape{2, 3}), b(Shape{4, 2});
  CHECK_THROWS_WITH_AS(ad::matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul gradient vs finite differences") {
  Tensor a = randn({3, 4}, 1), b = randn({4, 2}, 2);
  Tensor w = randn({3, 2}, 3, false);  // fixed weights scalarize the output
  auto loss_value = [&] {
    Tensor out = ad::matmul(a, b);
    return ad::sum(ad::mul(out, w)).value();
  };
  Tape tape;
  Tensor loss = ad::sum(ad::mul(ad::matmul(a, b, &tape), w, &tape), &tape);
  tape.backward(loss);
  CHECK(fd_max_rel_error(loss_value, {a, b}) < 1e-6);
}

TEST_CASE("concat basics") {
  Tensor a = Tensor::from_data({1, 2}, {1, 2});
  Tensor b = Tensor::from_data({1, 1}, {3});
  CHECK(ad::concat({a, b}, 1).data() == std::vector<double>{1, 2, 3});
  CHECK(ad::concat({a}, 1).data() == a.data());
  CHECK_THROWS_AS(ad::concat(std::span<const Tensor>{}, 0), ShapeError);
  Tensor c(Shape{2, 2});
  CHECK_THROWS_AS(ad::concat({a, c}, 1), ShapeError);
}

TEST_CASE("concat gradient slices back to parts") {
  Tensor a = randn({2, 3}, 4), b = randn({2, 2}, 5);
  Tape tape;
  Tensor loss = ad::sum(ad::concat({a, b}, 1, &tape), &tape);
  tape.backward(loss);
  CHECK(a.grad() == std::vector<double>(6, 1.0));
  CHECK(b.grad() == std::vector<double>(4, 1.0));
}

TEST_CASE("concat axis0 and slice gradients vs finite differences") {
  Tensor a = randn({2, 3}, 6), b = randn({1, 3}, 7);
  Tensor w = randn({3, 3}, 8, false);
  auto loss_value = [&] {
    Tensor cat = ad::concat({a, b}, 0);
    return ad::sum(ad::mul(ad::slice(cat, 0, 0, 3), w)).value();
  };
  Tape tape;
  Tensor cat = ad::concat({a, b}, 0, &tape);
  Tensor loss = ad::sum(ad::mul(ad::slice(cat, 0, 0, 3, &tape), w, &tape), &tape);
  tape.backward(loss);
  CHECK(fd_max_rel_error(loss_value, {a, b}) < 1e-6);
}

TEST_CASE("relu and softmax basics") {
  Tensor x = Tensor::from_data({3}, {-1, 0, 2});
  CHECK(ad::relu(x).data() == std::vector<double>{0, 0, 2});
  Tensor z = Tensor::from_data({3}, {0, 0, 0});
  auto sm = ad::softmax(z).data();
  for (double v : sm) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("softmax sums to one and is shift invariant") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = Tensor::randn({5}, rng);
    auto p = ad::softmax(x).data();
    double total = 0.0;
    for (double v : p) total += v;
    CHECK(std::abs(total - 1.0) < 1e-12);
    Tensor shifted = x.clone();
    for (double& v : shifted.data()) v += 17.3;
    auto q = ad::softmax(shifted).data();
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) < 1e-10);
  }
}

TEST_CASE("l1 loss identity and gradient") {
  Tensor x = randn({4}, 9);
  CHECK(ad::l1_loss(x, x).value() == 0.0);

  Tensor a = randn({6}, 10), b = randn({6}, 11, false);
  auto loss_value = [&] { return ad::l1_loss(a, b).value(); };
  Tape tape;
  Tensor loss = ad::l1_loss(a, b, &tape);
  tape.backward(loss);
  CHECK(fd_max_rel_error(loss_value, {a}) < 1e-6);
}

TEST_CASE("batch_norm gradient vs finite differences on 8x4 input") {
  Tensor x = randn({8, 4}, 12);
  ad::BatchNorm bn(4);
  Rng rng(13);
  for (double& v : bn.gamma.data()) v = 1.0 + 0.3 * rng.normal();
  for (double& v : bn.beta.data()) v = 0.2 * rng.normal();
  Tensor w = randn({8, 4}, 14, false);
  const ad::BatchNorm frozen = bn;  // running stats must not leak between calls

  auto loss_value = [&] {
    ad::BatchNorm local = frozen;
    local.gamma = bn.gamma;
    local.beta = bn.beta;
    return ad::sum(ad::mul(ad::batch_norm(x, local, true), w)).value();
  };
  ad::BatchNorm state = frozen;
  state.gamma = bn.gamma;
  state.beta = bn.beta;
  Tape tape;
  Tensor loss = ad::sum(ad::mul(ad::batch_norm(x, state, true, &tape), w, &tape), &tape);
  tape.backward(loss);
  CHECK(fd_max_rel_error(loss_value, {x, bn.gamma, bn.beta}) < 1e-5);
}

TEST_CASE("batch_norm inference is a fixed affine map") {
  Tensor x = randn({5, 3}, 15, false);
  ad::BatchNorm bn(3);
  Rng rng(16);
  for (double& v : bn.running_mean) v = rng.normal();
  for (double& v : bn.running_var) v = 1.0 + 0.5 * rng.uniform();
  auto a = ad::batch_norm(x, bn, false).data();
  auto b = ad::batch_norm(x, bn, false).data();
  CHECK(a == b);  // bitwise
  // Running stats untouched in inference mode.
  ad::BatchNorm copy = bn;
  ad::batch_norm(x, bn, false);
  CHECK(bn.running_mean == copy.running_mean);
  CHECK(bn.running_var == copy.running_var);
}

TEST_CASE("batch_norm zero-variance feature is safe") {
  Tensor x = Tensor::from_data({3, 2}, {1, 5, 1, 6, 1, 7});  // feature 0 constant
  ad::BatchNorm bn(2);
  Tensor out = ad::batch_norm(x, bn, true);
  CHECK(out.all_finite());
}

TEST_CASE("backward fills leaves; unreachable leaves stay zero") {
  Tensor x = randn({3}, 17);
  Tensor orphan = randn({2}, 18);
  Tape tape;
  Tensor y = ad::sum(x, &tape);
  tape.backward(y);
  CHECK(x.grad() == std::vector<double>{1, 1, 1});
  CHECK(orphan.grad() == std::vector<double>{0, 0});
}

TEST_CASE("backward twice without re-forward throws; non-scalar root throws") {
  Tensor x = randn({3}, 19);
  Tape tape;
  Tensor y = ad::sum(x, &tape);
  tape.backward(y);
  CHECK_THROWS_AS(tape.backward(y), Error);

  Tape tape2;
  Tensor z = ad::relu(x, &tape2);
  CHECK_THROWS_AS(tape2.backward(z), ShapeError);
}

TEST_CASE("backward is deterministic: identical tapes give bitwise gradients") {
  auto run = [] {
    Tensor w = randn({4, 3}, 20);
    Tensor x = randn({2, 4}, 21, false);
    Tensor t = randn({2, 3}, 22, false);
    Tape tape;
    Tensor loss = ad::l1_loss(ad::softmax(ad::matmul(x, w, &tape), &tape), t, &tape);
    tape.backward(loss);
    return w.grad();
  };
  CHECK(run() == run());
}

TEST_CASE("composite gradient: l1(softmax(Wx), t) wrt W") {
  Tensor w = randn({5, 4}, 23);
  Tensor x = randn({3, 5}, 24, false);
  Tensor t = randn({3, 4}, 25, false);
  auto loss_value = [&] { return ad::l1_loss(ad::softmax(ad::matmul(x, w)), t).value(); };
  Tape tape;
  Tensor loss = ad::l1_loss(ad::softmax(ad::matmul(x, w, &tape), &tape), t, &tape);
  tape.backward(loss);
  CHECK(fd_max_rel_error(loss_value, {w}, 1e-5) < 1e-4);
}

TEST_CASE("remaining primitive gradients vs finite differences") {
  // scalar_mul, bias_add, pick, reshape, mean, softmax_cross_entropy
  Tensor a = randn({3, 4}, 26);
  Tensor s = Tensor::scalar(0.7).set_requires_grad(true);
  Tensor bias = randn({4}, 27);
  std::vector<std::size_t> labels{2, 0, 3};
  auto loss_value = [&] {
    Tensor h = ad::bias_add(ad::scalar_mul(a, s), bias);
    Tensor r = ad::reshape(h, {3, 4});
    Tensor ce = ad::softmax_cross_entropy(r, labels);
    return ad::add(ce, ad::scale(ad::pick(h, 5), 0.25)).value() + ad::mean(h).value();
  };
  Tape tape;
  Tensor h = ad::bias_add(ad::scalar_mul(a, s, &tape), bias, &tape);
  Tensor r = ad::reshape(h, {3, 4}, &tape);
  Tensor ce = ad::softmax_cross_entropy(r, labels, &tape);
  Tensor loss =
      ad::add(ad::add(ce, ad::scale(ad::pick(h, 5, &tape), 0.25, &tape), &tape), ad::mean(h, &tape), &tape);
  tape.backward(loss);
  CHECK(fd_max_rel_error(loss_value, {a, s, bias}, 1e-5) < 1e-5);
}

TEST_CASE("adam: first step moves by about lr against a unit gradient") {
  Tensor p(Shape{3}, 0.0, true);
  ad::Adam opt({p});
  for (double& g : p.grad()) g = 1.0;
  opt.step(0.01);
  for (double v : p.data()) CHECK(v == doctest::Approx(-0.01).epsilon(1e-6));

  // Zero gradient leaves parameters unchanged.
  Tensor q(Shape{3}, 1.5, true);
  ad::Adam opt2({q});
  q.zero_grad();
  opt2.step(0.01);
  for (double v : q.data()) CHECK(v == 1.5);
}

TEST_CASE("all finite after ops on finite inputs") {
  Tensor x = randn({64}, 28);
  CHECK(ad::softmax(x).all_finite());
  CHECK(ad::relu(x).all_finite());
}

TEST_CASE("tensor container round trip") {
  Tensor t = randn({3, 5}, 29, false);
  const std::string path = (std::filesystem::temp_directory_path() / "vrx_t.tensor").string();
  ad::save_tensor(t, path);
  Tensor back = ad::load_tensor(path);
  CHECK(back.shape() == t.shape());
  CHECK(back.data() == t.data());  // bitwise through base64-le

  auto j = ad::tensor_to_json(t);
  CHECK(j["dtype"] == "f64");
  CHECK(j["encoding"] == "base64-le");
  j.erase("data");
  CHECK_THROWS_AS(ad::tensor_from_json(j), SchemaError);
}

TEST_CASE("invariant: gradcheck across many random seeds") {
  // A trimmed version of the acceptance sweep to keep unit runs fast.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Tensor a = randn({2, 3}, 100 + seed);
    Tensor b = randn({3, 2}, 200 + seed);
    Tensor t = randn({2, 2}, 300 + seed, false);
    auto loss_value = [&] { return ad::l1_loss(ad::relu(ad::matmul(a, b)), t).value(); };
    Tape tape;
    Tensor loss = ad::l1_loss(ad::relu(ad::matmul(a, b, &tape), &tape), t, &tape);
    tape.backward(loss);
    CHECK(fd_max_rel_error(loss_value, {a, b}, 1e-5) < 1e-4);
  }
}
