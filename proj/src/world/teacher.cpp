#include "vrx/world/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vrx/kernels/kernels.hpp"
#include "vrx/tensor/io.hpp"
#include "vrx/tensor/optim.hpp"

namespace vrx::world {

using ad::Tape;
using ad::Tensor;
namespace fs = std::filesystem;

namespace {

const kern::Kernels& K() { return kern::active(); }

// im2col for 3x3 same-padding convolution on NHWC input.
// out: [B*H*W, 9*C] with column blocks ordered (ky, kx, c).
void im2col_3x3(const double* x, std::size_t B, std::size_t H, std::size_t W, std::size_t C,
                double* col) {
  const std::size_t row_len = 9 * C;
  parallel_for(B * H, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t bh = lo; bh < hi; ++bh) {
      const std::size_t b = bh / H;
      const long y = static_cast<long>(bh % H);
      for (long xx = 0; xx < static_cast<long>(W); ++xx) {
        double* dst = col + (bh * W + static_cast<std::size_t>(xx)) * row_len;
        for (long ky = -1; ky <= 1; ++ky) {
          const long sy = y + ky;
          for (long kx = -1; kx <= 1; ++kx) {
            const long sx = xx + kx;
            if (sy < 0 || sy >= static_cast<long>(H) || sx < 0 || sx >= static_cast<long>(W)) {
              K().fill(0.0, dst, C);
            } else {
              const double* src =
                  x + ((b * H + static_cast<std::size_t>(sy)) * W + static_cast<std::size_t>(sx)) * C;
              std::copy(src, src + C, dst);
            }
            dst += C;
          }
        }
      }
    }
  });
}

// Scatter-add transpose of im2col_3x3. dst [B,H,W,C] accumulates.
void col2im_3x3(const double* col, std::size_t B, std::size_t H, std::size_t W, std::size_t C,
                double* dx) {
  const std::size_t row_len = 9 * C;
  // Sequential: overlapping scatter. Deterministic by fixed loop order.
  for (std::size_t b = 0; b < B; ++b) {
    for (long y = 0; y < static_cast<long>(H); ++y) {
      for (long xx = 0; xx < static_cast<long>(W); ++xx) {
        const double* src = col + ((b * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(xx)) * row_len;
        for (long ky = -1; ky <= 1; ++ky) {
          const long sy = y + ky;
          if (sy < 0 || sy >= static_cast<long>(H)) {
            src += 3 * C;
            continue;
          }
          for (long kx = -1; kx <= 1; ++kx) {
            const long sx = xx + kx;
            if (sx >= 0 && sx < static_cast<long>(W)) {
              double* dst = dx + ((b * H + static_cast<std::size_t>(sy)) * W + static_cast<std::size_t>(sx)) * C;
              K().axpy(1.0, src, dst, C);
            }
            src += C;
          }
        }
      }
    }
  }
}

// conv 3x3 same on NHWC via im2col + matmul. w: [9*Cin, Cout], b: [Cout].
Tensor conv3x3(const Tensor& x, std::size_t B, std::size_t H, std::size_t W, std::size_t Cin,
               const Tensor& w, const Tensor& b, Tape* tape) {
  const std::size_t Cout = w.dim(1);
  auto col = std::make_shared<std::vector<double>>(B * H * W * 9 * Cin);
  im2col_3x3(x.ptr(), B, H, W, Cin, col->data());
  Tensor out(Shape{B, H, W, Cout});
  K().matmul_nn_acc(col->data(), w.ptr(), out.ptr(), B * H * W, 9 * Cin, Cout);
  for (std::size_t r = 0; r < B * H * W; ++r) K().add(out.ptr() + r * Cout, b.ptr(), out.ptr() + r * Cout, Cout);

  if (tape && (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    Tensor xc = x, wc = w, bc = b, oc = out;
    tape->record(
        [xc, wc, bc, oc, col, B, H, W, Cin, Cout]() mutable {
          const double* og = oc.grad().data();
          const std::size_t rows = B * H * W;
          if (bc.requires_grad()) {
            auto& bg = bc.grad();
            for (std::size_t r = 0; r < rows; ++r) K().axpy(1.0, og + r * Cout, bg.data(), Cout);
          }
          if (wc.requires_grad()) {
            // dW += col^T * dOut
            std::vector<double> colt(col->size());
            kern::transpose(col->data(), colt.data(), rows, 9 * Cin);
            K().matmul_nn_acc(colt.data(), og, wc.grad().data(), 9 * Cin, rows, Cout);
          }
          if (xc.requires_grad()) {
            // dCol = dOut * W^T, then scatter back.
            std::vector<double> wt(wc.numel());
            kern::transpose(wc.ptr(), wt.data(), 9 * Cin, Cout);
            std::vector<double> dcol(col->size(), 0.0);
            K().matmul_nn_acc(og, wt.data(), dcol.data(), rows, Cout, 9 * Cin);
            col2im_3x3(dcol.data(), B, H, W, Cin, xc.grad().data());
          }
        },
        {x, w, b, out});
  }
  return out;
}

// 2x2 stride-2 average pooling, NHWC.
Tensor avgpool2(const Tensor& x, std::size_t B, std::size_t H, std::size_t W, std::size_t C,
                Tape* tape) {
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor out(Shape{B, Ho, Wo, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx) {
        double* dst = out.ptr() + ((b * Ho + y) * Wo + xx) * C;
        const double* s00 = x.ptr() + ((b * H + 2 * y) * W + 2 * xx) * C;
        const double* s01 = s00 + C;
        const double* s10 = x.ptr() + ((b * H + 2 * y + 1) * W + 2 * xx) * C;
        const double* s11 = s10 + C;
        for (std::size_t c = 0; c < C; ++c) dst[c] = 0.25 * (s00[c] + s01[c] + s10[c] + s11[c]);
      }
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape->record(
        [xc, oc, B, H, W, C, Ho, Wo]() mutable {
          const double* og = oc.grad().data();
          auto& xg = xc.grad();
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t y = 0; y < Ho; ++y)
              for (std::size_t xx = 0; xx < Wo; ++xx) {
                const double* src = og + ((b * Ho + y) * Wo + xx) * C;
                for (int dy = 0; dy < 2; ++dy)
                  for (int dx = 0; dx < 2; ++dx) {
                    double* dst = xg.data() +
                                  ((b * H + 2 * y + static_cast<std::size_t>(dy)) * W + 2 * xx + static_cast<std::size_t>(dx)) * C;
                    K().axpy(0.25, src, dst, C);
                  }
              }
        },
        {x, out});
  }
  return out;
}

// Global average pool NHWC -> [B, C].
Tensor global_avgpool(const Tensor& x, std::size_t B, std::size_t H, std::size_t W, std::size_t C,
                      Tape* tape) {
  Tensor out(Shape{B, C});
  const double inv = 1.0 / static_cast<double>(H * W);
  for (std::size_t b = 0; b < B; ++b) {
    double* dst = out.ptr() + b * C;
    for (std::size_t p = 0; p < H * W; ++p) K().axpy(1.0, x.ptr() + (b * H * W + p) * C, dst, C);
    K().scale(inv, dst, dst, C);
  }
  if (tape && x.requires_grad()) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    tape->record(
        [xc, oc, B, H, W, C, inv]() mutable {
          const double* og = oc.grad().data();
          auto& xg = xc.grad();
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t p = 0; p < H * W; ++p)
              K().axpy(inv, og + b * C, xg.data() + (b * H * W + p) * C, C);
        },
        {x, out});
  }
  return out;
}

}  // namespace

Teacher::Teacher(TeacherConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.conv_channels.empty()) throw ConfigError("teacher: needs at least one conv block");
  Rng rng(derive_seed(seed, 0x7ea8));
  std::size_t cin = cfg_.in_channels;
  for (std::size_t cout : cfg_.conv_channels) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(9 * cin));
    conv_w_.push_back(Tensor::randn(Shape{9 * cin, cout}, rng, stddev).set_requires_grad(true));
    conv_b_.push_back(Tensor(Shape{cout}, 0.0, true));
    cin = cout;
  }
  const double stddev = std::sqrt(2.0 / static_cast<double>(cin));
  head_w_ = Tensor::randn(Shape{cin, cfg_.n_classes}, rng, stddev).set_requires_grad(true);
  head_b_ = Tensor(Shape{cfg_.n_classes}, 0.0, true);
}

Tensor Teacher::to_batch(const std::vector<const Tensor*>& images_chw) {
  if (images_chw.empty()) throw ShapeError("Teacher::to_batch: empty image list");
  const Shape& s = images_chw[0]->shape();
  if (s.size() != 3) throw ShapeError("Teacher::to_batch: images must be [C,H,W]");
  const std::size_t C = s[0], H = s[1], W = s[2];
  Tensor batch(Shape{images_chw.size(), H, W, C});
  parallel_for(images_chw.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t b = lo; b < hi; ++b) {
      if (images_chw[b]->shape() != s)
        throw ShapeError("Teacher::to_batch: inconsistent image shapes in batch");
      const double* src = images_chw[b]->ptr();
      double* dst = batch.ptr() + b * H * W * C;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t p = 0; p < H * W; ++p) dst[p * C + c] = src[c * H * W + p];
    }
  });
  return batch;
}

Teacher::Activations Teacher::forward(const Tensor& images_nhwc, Tape* tape) const {
  const Shape& s = images_nhwc.shape();
  if (s.size() != 4 || s[3] != cfg_.in_channels)
    throw ShapeError("Teacher::forward: expected [B,H,W," + std::to_string(cfg_.in_channels) +
                     "], got " + shape_str(s));
  std::size_t B = s[0], H = s[1], W = s[2], C = s[3];
  Tensor x = images_nhwc;
  Activations acts;
  for (std::size_t layer = 0; layer < conv_w_.size(); ++layer) {
    x = conv3x3(x, B, H, W, C, conv_w_[layer], conv_b_[layer], tape);
    C = cfg_.conv_channels[layer];
    x = ad::relu(x, tape);
    if (layer + 1 == conv_w_.size()) {
      acts.last_conv = x;
      acts.conv_h = H;
      acts.conv_w = W;
    }
    x = avgpool2(x, B, H, W, C, tape);
    H /= 2;
    W /= 2;
  }
  acts.features = global_avgpool(x, B, H, W, C, tape);
  acts.logits = ad::bias_add(ad::matmul(acts.features, head_w_, tape), head_b_, tape);
  return acts;
}

std::vector<double> Teacher::logits_for(const Tensor& image_chw) const {
  Activations a = forward(to_batch({&image_chw}), nullptr);
  return a.logits.data();
}

std::vector<double> Teacher::features_for(const Tensor& image_chw) const {
  Activations a = forward(to_batch({&image_chw}), nullptr);
  return a.features.data();
}

std::vector<std::vector<double>> Teacher::features_batch(
    const std::vector<const Tensor*>& images_chw) const {
  if (images_chw.empty()) return {};
  Activations a = forward(to_batch(images_chw), nullptr);
  const std::size_t D = feature_dim();
  std::vector<std::vector<double>> out(images_chw.size(), std::vector<double>(D));
  for (std::size_t i = 0; i < images_chw.size(); ++i)
    std::copy(a.features.ptr() + i * D, a.features.ptr() + (i + 1) * D, out[i].begin());
  return out;
}

std::vector<std::vector<double>> Teacher::logits_batch(
    const std::vector<const Tensor*>& images_chw) const {
  if (images_chw.empty()) return {};
  Activations a = forward(to_batch(images_chw), nullptr);
  const std::size_t n = cfg_.n_classes;
  std::vector<std::vector<double>> out(images_chw.size(), std::vector<double>(n));
  for (std::size_t i = 0; i < images_chw.size(); ++i)
    std::copy(a.logits.ptr() + i * n, a.logits.ptr() + (i + 1) * n, out[i].begin());
  return out;
}

std::size_t Teacher::predict(const Tensor& image_chw) const {
  auto l = logits_for(image_chw);
  return static_cast<std::size_t>(std::max_element(l.begin(), l.end()) - l.begin());
}

std::vector<Tensor> Teacher::parameters() {
  std::vector<Tensor> ps;
  for (std::size_t i = 0; i < conv_w_.size(); ++i) {
    ps.push_back(conv_w_[i]);
    ps.push_back(conv_b_[i]);
  }
  ps.push_back(head_w_);
  ps.push_back(head_b_);
  return ps;
}

void Teacher::save(const std::string& dir) const {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["kind"] = "teacher";
  manifest["in_channels"] = cfg_.in_channels;
  manifest["conv_channels"] = cfg_.conv_channels;
  manifest["n_classes"] = cfg_.n_classes;
  std::vector<std::string> files;
  auto dump = [&](const Tensor& t, const std::string& name) {
    ad::save_tensor(t, (fs::path(dir) / (name + ".tensor")).string());
    files.push_back(name);
  };
  for (std::size_t i = 0; i < conv_w_.size(); ++i) {
    dump(conv_w_[i], "conv" + std::to_string(i) + "_w");
    dump(conv_b_[i], "conv" + std::to_string(i) + "_b");
  }
  dump(head_w_, "head_w");
  dump(head_b_, "head_b");
  manifest["tensors"] = files;
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << manifest.dump(2);
}

Teacher Teacher::load(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw Error("Teacher::load: missing manifest.json in " + dir);
  nlohmann::json manifest;
  in >> manifest;
  if (manifest.value("kind", "") != "teacher")
    throw SchemaError("Teacher::load: manifest kind is not 'teacher'");
  TeacherConfig cfg;
  cfg.in_channels = manifest.at("in_channels").get<std::size_t>();
  cfg.conv_channels = manifest.at("conv_channels").get<std::vector<std::size_t>>();
  cfg.n_classes = manifest.at("n_classes").get<std::size_t>();
  Teacher t;
  t.cfg_ = cfg;
  auto grab = [&](const std::string& name) {
    Tensor v = ad::load_tensor((fs::path(dir) / (name + ".tensor")).string());
    v.set_requires_grad(true);
    return v;
  };
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    t.conv_w_.push_back(grab("conv" + std::to_string(i) + "_w"));
    t.conv_b_.push_back(grab("conv" + std::to_string(i) + "_b"));
  }
  t.head_w_ = grab("head_w");
  t.head_b_ = grab("head_b");
  return t;
}

TeacherTrainResult train_teacher(const Dataset& dataset, std::size_t epochs, double lr,
                                 std::uint64_t seed, std::size_t batch_size,
                                 double val_fraction) {
  if (dataset.images.empty()) throw ConfigError("train_teacher: empty dataset");
  if (dataset.spec.n_classes() < 2) throw ConfigError("train_teacher: needs at least 2 classes");

  Rng rng(derive_seed(seed, 0x7e11));
  auto order = rng.permutation(dataset.images.size());
  const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(
                                static_cast<double>(order.size()) * val_fraction));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());
  if (train_idx.empty()) throw ConfigError("train_teacher: no training images after split");

  TeacherConfig cfg;
  cfg.in_channels = dataset.spec.channels;
  cfg.n_classes = dataset.spec.n_classes();
  TeacherTrainResult result;
  result.model = Teacher(cfg, seed);
  ad::Adam opt(result.model.parameters());

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    auto perm = rng.permutation(train_idx.size());
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < perm.size(); start += batch_size) {
      const std::size_t end = std::min(perm.size(), start + batch_size);
      std::vector<const Tensor*> imgs;
      std::vector<std::size_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        const LabeledImage& im = dataset.images[train_idx[perm[i]]];
        imgs.push_back(&im.pixels);
        labels.push_back(im.label);
      }
      Tape tape;
      auto acts = result.model.forward(Teacher::to_batch(imgs), &tape);
      Tensor loss = ad::softmax_cross_entropy(acts.logits, labels, &tape);
      if (!std::isfinite(loss.value()))
        throw Error("train_teacher: loss diverged to non-finite at epoch " +
                    std::to_string(epoch) + " (lr=" + std::to_string(lr) + ")");
      epoch_loss += loss.value();
      ++batches;
      tape.backward(loss);
      opt.step(lr);
    }
    result.epoch_losses.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
  }

  auto accuracy_on = [&](const std::vector<std::size_t>& ids) {
    if (ids.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < ids.size(); start += 64) {
      const std::size_t end = std::min(ids.size(), start + 64);
      std::vector<const Tensor*> imgs;
      for (std::size_t i = start; i < end; ++i) imgs.push_back(&dataset.images[ids[i]].pixels);
      auto logits = result.model.logits_batch(imgs);
      for (std::size_t i = start; i < end; ++i) {
        const auto& row = logits[i - start];
        const std::size_t pred = static_cast<std::size_t>(
            std::max_element(row.begin(), row.end()) - row.begin());
        if (pred == dataset.images[ids[i]].label) ++correct;
      }
    }
    return static_cast<double>(correct) / static_cast<double>(ids.size());
  };
  result.train_accuracy = accuracy_on(train_idx);
  result.val_accuracy = accuracy_on(val_idx);
  return result;
}

AttentionMap grad_attention(const Teacher& teacher, const Tensor& image_chw,
                            std::size_t class_id) {
  if (class_id >= teacher.n_classes())
    throw ConfigError("grad_attention: class id " + std::to_string(class_id) + " out of range");
  Tape tape;
  auto acts = teacher.forward(Teacher::to_batch({&image_chw}), &tape);
  Tensor target = ad::pick(acts.logits, class_id, &tape);
  tape.backward(target);

  const std::size_t h = acts.conv_h, w = acts.conv_w;
  const std::size_t D = teacher.feature_dim();
  const auto& ag = acts.last_conv.grad();

  // Channel weights: spatially averaged gradients.
  std::vector<double> alpha(D, 0.0);
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t c = 0; c < D; ++c) alpha[c] += ag[p * D + c];
  for (double& a : alpha) a /= static_cast<double>(h * w);

  Tensor coarse(Shape{1, h, w});
  for (std::size_t p = 0; p < h * w; ++p) {
    double v = 0.0;
    for (std::size_t c = 0; c < D; ++c) v += alpha[c] * acts.last_conv.data()[p * D + c];
    coarse.data()[p] = v > 0.0 ? v : 0.0;
  }

  const std::size_t H = image_chw.dim(1), W = image_chw.dim(2);
  Tensor up = resize_bilinear(coarse, H, W);

  AttentionMap out;
  out.map = Tensor(Shape{H, W});
  const double mx = *std::max_element(up.data().begin(), up.data().end());
  const double mn = *std::min_element(up.data().begin(), up.data().end());
  if (mx - mn < 1e-12) {
    out.dead = true;  // all-zero (or constant) map
    return out;
  }
  const double inv = 1.0 / (mx - mn);
  for (std::size_t i = 0; i < H * W; ++i) out.map.data()[i] = (up.data()[i] - mn) * inv;
  return out;
}

}  // namespace vrx::world
