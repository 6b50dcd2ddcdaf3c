#include "vrx/tensor/ops.hpp"

#include <algorithm>
#include <cmath>

#include "vrx/kernels/kernels.hpp"

namespace vrx::ad {

namespace {

const kern::Kernels& K() { return kern::active(); }

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

bool taping(Tape* tape, std::initializer_list<const Tensor*> ins) {
  if (!tape) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  check_same_shape("add", a, b);
  Tensor out(a.shape());
  K().add(a.ptr(), b.ptr(), out.ptr(), a.numel());
  if (taping(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape->record(
        [ac, bc, oc]() mutable {
          if (ac.requires_grad()) K().axpy(1.0, oc.grad().data(), ac.grad().data(), ac.numel());
          if (bc.requires_grad()) K().axpy(1.0, oc.grad().data(), bc.grad().data(), bc.numel());
        },
        {a, b, out});
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) {
  check_same_shape("sub", a, b);
  Tensor out(a.shape());
  K().sub(a.ptr(), b.ptr(), out.ptr(), a.numel());
  if (taping(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape->record(
        [ac, bc, oc]() mutable {
          if (ac.requires_grad()) K().axpy(1.0, oc.grad().data(), ac.grad().data(), ac.numel());
          if (bc.requires_grad()) K().axpy(-1.0, oc.grad().data(), bc.grad().data(), bc.numel());
        },
        {a, b, out});
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  check_same_shape("mul", a, b);
  Tensor out(a.shape());
  K().mul(a.ptr(), b.ptr(), out.ptr(), a.numel());
  if (taping(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape->record(
        [ac, bc, oc]() mutable {
          const std::size_t n = oc.numel();
          const auto& og = oc.grad();
          if (ac.requires_grad()) {
            auto& ag = ac.grad();
            for (std::size_t i = 0; i < n; ++i) ag[i] += og[i] * bc.data()[i];
          }
          if (bc.requires_grad()) {
            auto& bg = bc.grad();
            for (std::size_t i = 0; i < n; ++i) bg[i] += og[i] * ac.data()[i];
          }
        },
        {a, b, out});
  }
  return out;
}

Tensor scalar_mul(const Tensor& a, const Tensor& s, Tape* tape) {
  if (s.numel() != 1)
    throw ShapeError("scalar_mul: scale must be one element, got " + shape_str(s.shape()));
  Tensor out(a.shape());
  K().scale(s.value(), a.ptr(), out.ptr(), a.numel());
  if (taping(tape, {&a, &s})) {
    out.set_requires_grad(true);
    Tensor ac = a, sc = s, oc = out;
    tape->record(
        [ac, sc, oc]() mutable {
          const auto& og = oc.grad();
          if (ac.requires_grad())
            K().axpy(sc.value(), og.data(), ac.grad().data(), ac.numel());
          if (sc.requires_grad()) sc.grad()[0] += K().dot(og.data(), ac.ptr(), ac.numel());
        },
        {a, s, out});
  }
  return out;
}

Tensor scale(const Tensor& a, double c, Tape* tape) {
  Tensor out(a.shape());
  K().scale(c, a.ptr(), out.ptr(), a.numel());
  if (taping(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    tape->record([ac, oc, c]() mutable { K().axpy(c, oc.grad().data(), ac.grad().data(), ac.numel()); },
                 {a, out});
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n});
  K().matmul_nn_acc(a.ptr(), b.ptr(), out.ptr(), m, k, n);
  if (taping(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape->record(
        [ac, bc, oc, m, k, n]() mutable {
          const double* og = oc.grad().data();
          if (ac.requires_grad()) {
            // dA += dOut * B^T
            std::vector<double> bt(k * n);
            kern::transpose(bc.ptr(), bt.data(), k, n);
            K().matmul_nn_acc(og, bt.data(), ac.grad().data(), m, n, k);
          }
          if (bc.requires_grad()) {
            // dB += A^T * dOut
            std::vector<double> at(m * k);
            kern::transpose(ac.ptr(), at.data(), m, k);
            K().matmul_nn_acc(at.data(), og, bc.grad().data(), k, m, n);
          }
        },
        {a, b, out});
  }
  return out;
}

Tensor bias_add(const Tensor& mat, const Tensor& bias, Tape* tape) {
  if (mat.shape().size() != 2 || bias.shape().size() != 1 || mat.dim(1) != bias.dim(0))
    throw ShapeError("bias_add: shapes " + shape_str(mat.shape()) + " and " +
                     shape_str(bias.shape()) + " do not agree");
  const std::size_t m = mat.dim(0), n = mat.dim(1);
  Tensor out(mat.shape());
  for (std::size_t i = 0; i < m; ++i)
    K().add(mat.ptr() + i * n, bias.ptr(), out.ptr() + i * n, n);
  if (taping(tape, {&mat, &bias})) {
    out.set_requires_grad(true);
    Tensor mc = mat, bc = bias, oc = out;
    tape->record(
        [mc, bc, oc, m, n]() mutable {
          const double* og = oc.grad().data();
          if (mc.requires_grad()) K().axpy(1.0, og, mc.grad().data(), m * n);
          if (bc.requires_grad()) {
            auto& bg = bc.grad();
            for (std::size_t i = 0; i < m; ++i) K().axpy(1.0, og + i * n, bg.data(), n);
          }
        },
        {mat, bias, out});
  }
  return out;
}

namespace {

// Row-block view of a tensor for concat/slice along an arbitrary axis:
// outer = product of dims before axis, inner = product after.
struct AxisView {
  std::size_t outer, axis_len, inner;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisView v{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

}  // namespace

Tensor concat(std::span<const Tensor> parts, std::size_t axis, Tape* tape) {
  if (parts.empty()) throw ShapeError("concat: empty part list");
  const Shape& first = parts[0].shape();
  Shape out_shape = first;
  std::size_t axis_total = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size())
      throw ShapeError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(s));
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != first[d])
        throw ShapeError("concat: non-concat dimension disagreement " + shape_str(first) +
                         " vs " + shape_str(s) + " at axis " + std::to_string(d));
    axis_total += s[axis];
  }
  out_shape[axis] = axis_total;
  Tensor out(out_shape);
  const AxisView ov = axis_view(out_shape, axis);

  std::size_t offset = 0;  // in axis units
  for (const Tensor& p : parts) {
    const AxisView pv = axis_view(p.shape(), axis);
    for (std::size_t o = 0; o < pv.outer; ++o) {
      const double* src = p.ptr() + o * pv.axis_len * pv.inner;
      double* dst = out.ptr() + (o * ov.axis_len + offset) * ov.inner;
      std::copy(src, src + pv.axis_len * pv.inner, dst);
    }
    offset += pv.axis_len;
  }

  bool any_grad = false;
  for (const Tensor& p : parts) any_grad = any_grad || p.requires_grad();
  if (tape && any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> held(parts.begin(), parts.end());
    Tensor oc = out;
    std::vector<Tensor> touched = held;
    touched.push_back(out);
    tape->record(
        [held, oc, axis]() mutable {
          const AxisView ov2 = axis_view(oc.shape(), axis);
          const double* og = oc.grad().data();
          std::size_t offset2 = 0;
          for (Tensor& p : held) {
            const AxisView pv = axis_view(p.shape(), axis);
            if (p.requires_grad()) {
              auto& pg = p.grad();
              for (std::size_t o = 0; o < pv.outer; ++o) {
                const double* src = og + (o * ov2.axis_len + offset2) * ov2.inner;
                K().axpy(1.0, src, pg.data() + o * pv.axis_len * pv.inner,
                         pv.axis_len * pv.inner);
              }
            }
            offset2 += pv.axis_len;
          }
        },
        std::move(touched));
  }
  return out;
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis, Tape* tape) {
  std::vector<Tensor> v(parts);
  return concat(std::span<const Tensor>(v), axis, tape);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len,
             Tape* tape) {
  const AxisView av = axis_view(a.shape(), axis);
  if (start + len > av.axis_len)
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") exceeds axis length " +
                     std::to_string(av.axis_len));
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < av.outer; ++o) {
    const double* src = a.ptr() + (o * av.axis_len + start) * av.inner;
    std::copy(src, src + len * av.inner, out.ptr() + o * len * av.inner);
  }
  if (taping(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    tape->record(
        [ac, oc, axis, start, len]() mutable {
          const AxisView av2 = axis_view(ac.shape(), axis);
          const double* og = oc.grad().data();
          auto& ag = ac.grad();
          for (std::size_t o = 0; o < av2.outer; ++o)
            K().axpy(1.0, og + o * len * av2.inner,
                     ag.data() + (o * av2.axis_len + start) * av2.inner, len * av2.inner);
        },
        {a, out});
  }
  return out;
}

Tensor pick(const Tensor& a, std::size_t flat_index, Tape* tape) {
  if (flat_index >= a.numel())
    throw ShapeError("pick: index " + std::to_string(flat_index) + " out of range for " +
                     shape_str(a.shape()));
  Tensor out = Tensor::scalar(a.data()[flat_index]);
  if (taping(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    tape->record([ac, oc, flat_index]() mutable { ac.grad()[flat_index] += oc.grad()[0]; },
                 {a, out});
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape new_shape, Tape* tape) {
  if (shape_numel(new_shape) != a.numel())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(new_shape) +
                     " changes element count");
  Tensor out = Tensor::from_data(std::move(new_shape), a.data());
  if (taping(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    tape->record(
        [ac, oc]() mutable { K().axpy(1.0, oc.grad().data(), ac.grad().data(), ac.numel()); },
        {a, out});
  }
  return out;
}

Tensor relu(const Tensor& a, Tape* tape) {
  Tensor out(a.shape());
  K().relu(a.ptr(), out.ptr(), a.numel());
  if (taping(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    tape->record(
        [ac, oc]() mutable {
          std::vector<double> dx(ac.numel());
          K().relu_backward(oc.ptr(), oc.grad().data(), dx.data(), ac.numel());
          K().axpy(1.0, dx.data(), ac.grad().data(), ac.numel());
        },
        {a, out});
  }
  return out;
}

Tensor softmax(const Tensor& a, Tape* tape) {
  const Shape& s = a.shape();
  if (s.empty() || s.size() > 2)
    throw ShapeError("softmax: expects a vector or matrix, got " + shape_str(s));
  const std::size_t rows = s.size() == 2 ? s[0] : 1;
  const std::size_t cols = s.size() == 2 ? s[1] : s[0];
  Tensor out(s);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.ptr() + r * cols;
    double* y = out.ptr() + r * cols;
    const double m = K().max(x, cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - m);
      total += y[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
  }
  if (taping(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    tape->record(
        [ac, oc, rows, cols]() mutable {
          auto& ag = ac.grad();
          const auto& og = oc.grad();
          for (std::size_t r = 0; r < rows; ++r) {
            const double* y = oc.ptr() + r * cols;
            const double* dy = og.data() + r * cols;
            const double dot = K().dot(dy, y, cols);
            for (std::size_t j = 0; j < cols; ++j) ag[r * cols + j] += (dy[j] - dot) * y[j];
          }
        },
        {a, out});
  }
  return out;
}

Tensor l1_loss(const Tensor& a, const Tensor& b, Tape* tape) {
  check_same_shape("l1_loss", a, b);
  const std::size_t n = a.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a.data()[i] - b.data()[i]);
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  if (taping(tape, {&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    tape->record(
        [ac, bc, oc, n]() mutable {
          const double g = oc.grad()[0] / static_cast<double>(n);
          for (std::size_t i = 0; i < n; ++i) {
            const double d = ac.data()[i] - bc.data()[i];
            const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (ac.requires_grad()) ac.grad()[i] += g * sgn;
            if (bc.requires_grad()) bc.grad()[i] -= g * sgn;
          }
        },
        {a, b, out});
  }
  return out;
}

Tensor sum(const Tensor& a, Tape* tape) {
  Tensor out = Tensor::scalar(K().sum(a.ptr(), a.numel()));
  if (taping(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    tape->record(
        [ac, oc]() mutable {
          std::vector<double> ones(ac.numel(), 1.0);
          K().axpy(oc.grad()[0], ones.data(), ac.grad().data(), ac.numel());
        },
        {a, out});
  }
  return out;
}

Tensor mean(const Tensor& a, Tape* tape) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  Tensor out = Tensor::scalar(K().sum(a.ptr(), a.numel()) * inv);
  if (taping(tape, {&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    tape->record(
        [ac, oc, inv]() mutable {
          std::vector<double> ones(ac.numel(), 1.0);
          K().axpy(oc.grad()[0] * inv, ones.data(), ac.grad().data(), ac.numel());
        },
        {a, out});
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels,
                             Tape* tape) {
  if (logits.shape().size() != 2)
    throw ShapeError("softmax_cross_entropy: logits must be [batch x classes], got " +
                     shape_str(logits.shape()));
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch " + std::to_string(batch));
  Tensor probs = softmax(logits, nullptr);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] >= classes) throw Error("softmax_cross_entropy: label out of range");
    loss -= std::log(std::max(probs.data()[i * classes + labels[i]], 1e-300));
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(batch));
  if (taping(tape, {&logits})) {
    out.set_requires_grad(true);
    Tensor lc = logits, oc = out;
    tape->record(
        [lc, oc, probs, labels, batch, classes]() mutable {
          const double g = oc.grad()[0] / static_cast<double>(batch);
          auto& lg = lc.grad();
          for (std::size_t i = 0; i < batch; ++i) {
            for (std::size_t j = 0; j < classes; ++j)
              lg[i * classes + j] += g * probs.data()[i * classes + j];
            lg[i * classes + labels[i]] -= g;
          }
        },
        {logits, out});
  }
  return out;
}

BatchNorm::BatchNorm(std::size_t features)
    : gamma(Shape{features}, 1.0, true),
      beta(Shape{features}, 0.0, true),
      running_mean(features, 0.0),
      running_var(features, 1.0) {}

Tensor batch_norm(const Tensor& x, BatchNorm& bn, bool training, Tape* tape) {
  if (x.shape().size() != 2)
    throw ShapeError("batch_norm: input must be [batch x features], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), features = x.dim(1);
  if (features != bn.features())
    throw ShapeError("batch_norm: input features " + std::to_string(features) +
                     " vs state features " + std::to_string(bn.features()));
  if (batch < 1) throw ShapeError("batch_norm: batch dimension must be >= 1");

  Tensor out(x.shape());
  std::vector<double> mean(features), invstd(features);
  Tensor xhat(x.shape());

  if (training) {
    std::vector<double> var(features, 0.0);
    for (std::size_t j = 0; j < features; ++j) mean[j] = 0.0;
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t j = 0; j < features; ++j) mean[j] += x.data()[i * features + j];
    const double invb = 1.0 / static_cast<double>(batch);
    for (std::size_t j = 0; j < features; ++j) mean[j] *= invb;
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t j = 0; j < features; ++j) {
        const double d = x.data()[i * features + j] - mean[j];
        var[j] += d * d;
      }
    for (std::size_t j = 0; j < features; ++j) var[j] *= invb;
    for (std::size_t j = 0; j < features; ++j) invstd[j] = 1.0 / std::sqrt(var[j] + bn.eps);
    // Running stats: unbiased variance when the batch allows it.
    const double unbias =
        batch > 1 ? static_cast<double>(batch) / static_cast<double>(batch - 1) : 1.0;
    for (std::size_t j = 0; j < features; ++j) {
      bn.running_mean[j] = (1.0 - bn.momentum) * bn.running_mean[j] + bn.momentum * mean[j];
      bn.running_var[j] = (1.0 - bn.momentum) * bn.running_var[j] + bn.momentum * var[j] * unbias;
    }
  } else {
    for (std::size_t j = 0; j < features; ++j) {
      mean[j] = bn.running_mean[j];
      invstd[j] = 1.0 / std::sqrt(bn.running_var[j] + bn.eps);
    }
  }

  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < features; ++j) {
      const double xc = (x.data()[i * features + j] - mean[j]) * invstd[j];
      xhat.data()[i * features + j] = xc;
      out.data()[i * features + j] = bn.gamma.data()[j] * xc + bn.beta.data()[j];
    }

  if (taping(tape, {&x, &bn.gamma, &bn.beta})) {
    out.set_requires_grad(true);
    Tensor xc = x, gc = bn.gamma, bc = bn.beta, oc = out;
    tape->record(
        [xc, gc, bc, oc, xhat, invstd, batch, features, training]() mutable {
          const auto& og = oc.grad();
          // dgamma, dbeta
          if (gc.requires_grad() || bc.requires_grad()) {
            auto& gg = gc.grad();
            auto& bg = bc.grad();
            for (std::size_t i = 0; i < batch; ++i)
              for (std::size_t j = 0; j < features; ++j) {
                gg[j] += og[i * features + j] * xhat.data()[i * features + j];
                bg[j] += og[i * features + j];
              }
          }
          if (!xc.requires_grad()) return;
          auto& xg = xc.grad();
          if (!training) {
            // Fixed affine map in inference mode.
            for (std::size_t i = 0; i < batch; ++i)
              for (std::size_t j = 0; j < features; ++j)
                xg[i * features + j] += og[i * features + j] * gc.data()[j] * invstd[j];
            return;
          }
          const double invb = 1.0 / static_cast<double>(batch);
          std::vector<double> sum_dy(features, 0.0), sum_dy_xhat(features, 0.0);
          for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t j = 0; j < features; ++j) {
              sum_dy[j] += og[i * features + j];
              sum_dy_xhat[j] += og[i * features + j] * xhat.data()[i * features + j];
            }
          for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t j = 0; j < features; ++j) {
              const double term = og[i * features + j] - invb * sum_dy[j] -
                                  xhat.data()[i * features + j] * invb * sum_dy_xhat[j];
              xg[i * features + j] += gc.data()[j] * invstd[j] * term;
            }
        },
        {x, bn.gamma, bn.beta, out});
  }
  return out;
}

}  // namespace vrx::ad
