#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vrx/common.hpp"
#include "vrx/tensor/tensor.hpp"

namespace vrx::world {

// Pixel rectangle, [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return static_cast<long>(width()) * height(); }
  Box clipped(int w, int h) const;
  bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

double box_iou(const Box& a, const Box& b);

enum class Glyph { Disc, Bar, Cross, Ring, Wedge };
const char* glyph_name(Glyph g);
Glyph glyph_from_name(const std::string& name);

struct PartSpec {
  Glyph glyph = Glyph::Disc;
  std::array<double, 3> color{1.0, 1.0, 1.0};
  double size = 0.10;  // normalized half-extent
};

// Rigid transform of the whole object: rotation about the image center plus
// a normalized translation. Glyph orientation rotates with the layout.
struct Pose {
  double rotation_deg = 0.0;
  double dx = 0.0;
  double dy = 0.0;
};

struct ClassSpec {
  std::string name;
  std::vector<PartSpec> parts;
  std::vector<std::array<double, 2>> layout;  // canonical positions in [0,1]^2
  std::vector<std::size_t> pose_ids;          // allowed poses (indices into WorldSpec::poses)
};

struct WorldSpec {
  std::size_t image_size = 64;
  std::size_t channels = 3;
  double noise_level = 0.02;
  double jitter = 0.01;  // per-part placement jitter, normalized
  std::vector<Pose> poses;
  std::vector<ClassSpec> classes;

  std::size_t n_classes() const { return classes.size(); }
  // Throws ConfigError on invalid specs (class with < 2 parts, positions
  // outside [0,1]^2, two classes sharing both part multiset and layout, ...).
  void validate() const;

  nlohmann::json to_json() const;
  static WorldSpec from_json(const nlohmann::json& j);
};

struct PartPlacement {
  std::size_t part_id = 0;
  Box box;
  std::size_t pose_id = 0;
};

struct LabeledImage {
  ad::Tensor pixels;  // [C, H, W], values in [0, 1]
  std::size_t label = 0;
  std::vector<PartPlacement> provenance;
  std::size_t id = 0;
};

struct Dataset {
  WorldSpec spec;
  std::vector<LabeledImage> images;
  std::array<double, 3> mean_pixel() const;
};

// Deterministic in (spec, seed); image k's randomness is derived from
// (seed, k) so generation order and thread count do not matter.
Dataset generate_dataset(const WorldSpec& spec, std::size_t n_per_class, std::uint64_t seed);

// Renders one image of `class_id` under `pose`; appends provenance.
ad::Tensor render_image(const WorldSpec& spec, std::size_t class_id, std::size_t pose_id,
                        Rng& rng, std::vector<PartPlacement>& provenance);

// Binarizes `attention` at tau and multiplies it into every channel.
ad::Tensor mask_image(const ad::Tensor& image, const ad::Tensor& attention, double tau);

// Replaces the box with a constant fill (callers normally pass the dataset
// mean pixel). Zero-area boxes are rejected.
ad::Tensor occlude_region(const ad::Tensor& image, const Box& box,
                          const std::array<double, 3>& fill);

// Copies `patch_pixels` ([C, ph, pw]) into `image` at `box` (bilinear resize
// to the box size) with a feathered border blended into the surroundings.
ad::Tensor paste_patch(const ad::Tensor& image, const Box& box, const ad::Tensor& patch_pixels,
                       int feather = 2);

// Crops box pixels as [C, bh, bw].
ad::Tensor crop(const ad::Tensor& image, const Box& box);

// Bilinear channel-wise resize of a [C, H, W] tensor.
ad::Tensor resize_bilinear(const ad::Tensor& image, std::size_t out_h, std::size_t out_w);

// Dataset directory export/import: one tensor container per image plus a
// JSONL manifest carrying label and provenance, and the world spec JSON.
void export_dataset(const Dataset& ds, const std::string& dir);
Dataset import_dataset(const std::string& dir);

// Built-in worlds.
//
// default_world: three classes over shared glyph vocabulary; two of them use
// the same part multiset and differ only in layout, so spatial structure is
// needed to tell them apart. Mild poses.
WorldSpec default_world();
// pose_bias_world: three classes, three strong rotation poses. When `biased`
// every class is locked to its own single training pose.
WorldSpec pose_bias_world(bool biased);

}  // namespace vrx::world
