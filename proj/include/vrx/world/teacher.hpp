#pragma once

#include <string>
#include <vector>

#include "vrx/tensor/ops.hpp"
#include "vrx/world/world.hpp"

namespace vrx::world {

struct TeacherConfig {
  std::size_t in_channels = 3;
  // Three conv blocks (3x3, stride-2 average pooling); the last channel
  // count is the exported feature dimension D.
  std::vector<std::size_t> conv_channels = {8, 16, 64};
  std::size_t n_classes = 3;
};

// Small CNN classifier: conv blocks -> global average pool -> linear head.
// The pooled feature is the penultimate representation used by concept
// extraction. Inference is thread-safe on a const instance.
class Teacher {
 public:
  Teacher() = default;
  Teacher(TeacherConfig cfg, std::uint64_t seed);

  struct Activations {
    ad::Tensor last_conv;  // [B, h, w, D] post-ReLU, NHWC
    std::size_t conv_h = 0, conv_w = 0;
    ad::Tensor features;   // [B, D]
    ad::Tensor logits;     // [B, n_classes]
  };

  // images: [B, H, W, C] (NHWC). Records on `tape` when given.
  Activations forward(const ad::Tensor& images_nhwc, ad::Tape* tape = nullptr) const;

  // Assembles a NHWC batch from [C,H,W] images.
  static ad::Tensor to_batch(const std::vector<const ad::Tensor*>& images_chw);

  // Convenience single/batch inference (no tape).
  std::vector<double> logits_for(const ad::Tensor& image_chw) const;
  std::vector<double> features_for(const ad::Tensor& image_chw) const;
  // One row of D features per image.
  std::vector<std::vector<double>> features_batch(const std::vector<const ad::Tensor*>& images_chw) const;
  std::vector<std::vector<double>> logits_batch(const std::vector<const ad::Tensor*>& images_chw) const;
  std::size_t predict(const ad::Tensor& image_chw) const;

  std::vector<ad::Tensor> parameters();
  std::size_t feature_dim() const { return cfg_.conv_channels.back(); }
  std::size_t n_classes() const { return cfg_.n_classes; }
  const TeacherConfig& config() const { return cfg_; }

  void save(const std::string& dir) const;
  static Teacher load(const std::string& dir);

 private:
  TeacherConfig cfg_;
  std::vector<ad::Tensor> conv_w_;  // [Cin*9, Cout] each
  std::vector<ad::Tensor> conv_b_;  // [Cout]
  ad::Tensor head_w_;               // [D, n_classes]
  ad::Tensor head_b_;               // [n_classes]
};

struct TeacherTrainResult {
  Teacher model;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::vector<double> epoch_losses;
};

// Deterministic given (dataset, seed); holds out a validation fraction and
// aborts with a diagnostic if the loss diverges to NaN.
TeacherTrainResult train_teacher(const Dataset& dataset, std::size_t epochs, double lr,
                                 std::uint64_t seed, std::size_t batch_size = 32,
                                 double val_fraction = 0.1);

struct AttentionMap {
  ad::Tensor map;  // [H, W] in [0,1]
  bool dead = false;
};

// Gradient attention over the last conv block (class-logit gradients pooled
// into channel weights, ReLU of the weighted sum, bilinear upsample, min-max
// normalization).
AttentionMap grad_attention(const Teacher& teacher, const ad::Tensor& image_chw,
                            std::size_t class_id);

}  // namespace vrx::world
