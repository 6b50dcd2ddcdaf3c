#include "vrx/vce/vce.hpp"

namespace vrx::vce {

std::vector<Patch> segment_multiresolution(const ad::Tensor& image, const world::Teacher& teacher,
                                           const SegmentConfig& cfg, std::size_t image_id,
                                           const ad::Tensor* mask_ref) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw ShapeError("segment_multiresolution: image must be [C,H,W]");
  const std::size_t C = s[0], H = s[1], W = s[2];
  const ad::Tensor& drop_src = mask_ref ? *mask_ref : image;
  if (drop_src.shape() != s)
    throw ShapeError("segment_multiresolution: mask reference shape mismatch");

  std::vector<Patch> patches;
  for (std::size_t level = 0; level < cfg.grids.size(); ++level) {
    const std::size_t g = cfg.grids[level];
    if (g == 0) throw ConfigError("segment_multiresolution: zero grid size");
    for (std::size_t gy = 0; gy < g; ++gy) {
      for (std::size_t gx = 0; gx < g; ++gx) {
        world::Box box{static_cast<int>(gx * W / g), static_cast<int>(gy * H / g),
                       static_cast<int>((gx + 1) * W / g), static_cast<int>((gy + 1) * H / g)};
        // Fraction of fully-masked pixels (exact zero in every channel).
        std::size_t masked = 0;
        for (int y = box.y0; y < box.y1; ++y)
          for (int x = box.x0; x < box.x1; ++x) {
            bool zero = true;
            for (std::size_t c = 0; c < C && zero; ++c)
              zero = drop_src.data()[(c * H + static_cast<std::size_t>(y)) * W + static_cast<std::size_t>(x)] == 0.0;
            if (zero) ++masked;
          }
        if (static_cast<double>(masked) > cfg.max_masked_fraction * static_cast<double>(box.area()))
          continue;
        Patch p;
        p.image_id = image_id;
        p.box = box;
        p.resolution_level = level;
        p.centroid = {(box.x0 + box.x1) / 2.0 / static_cast<double>(W),
                      (box.y0 + box.y1) / 2.0 / static_cast<double>(H)};
        patches.push_back(std::move(p));
      }
    }
  }
  if (patches.empty())
    throw Error("segment_multiresolution: every patch was dropped as masked; lower tau or "
                "disable filtering");

  // Featurize all survivors in one batch at the teacher input size.
  std::vector<ad::Tensor> resized;
  resized.reserve(patches.size());
  for (const Patch& p : patches)
    resized.push_back(world::resize_bilinear(world::crop(image, p.box), H, W));
  std::vector<const ad::Tensor*> ptrs;
  ptrs.reserve(resized.size());
  for (const auto& t : resized) ptrs.push_back(&t);
  auto features = teacher.features_batch(ptrs);
  for (std::size_t i = 0; i < patches.size(); ++i) patches[i].feature = std::move(features[i]);
  return patches;
}

}  // namespace vrx::vce
