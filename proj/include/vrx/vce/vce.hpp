#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vrx/world/teacher.hpp"

namespace vrx::vce {

// Concept candidate: one grid cell of the image at some resolution level,
// featurized through the teacher's penultimate layer.
struct Patch {
  std::size_t image_id = 0;
  world::Box box;
  std::size_t resolution_level = 0;
  std::vector<double> feature;        // [D]
  std::array<double, 2> centroid{0.0, 0.0};  // normalized (x, y)
};

struct SegmentConfig {
  std::vector<std::size_t> grids = {2, 4, 8};
  // Cells whose fraction of fully-masked pixels exceeds this are dropped.
  double max_masked_fraction = 0.9;
};

// Grid segmentation at each resolution; surviving cells are resized to the
// teacher input and featurized in one batch. Throws when every patch is
// dropped (the caller should lower tau).
//
// When `mask_ref` is given, the masked-fraction drop test reads that image's
// exact-zero pixels while the features still come from `image`; this keeps
// bank features in the same domain as detection-time features.
std::vector<Patch> segment_multiresolution(const ad::Tensor& image, const world::Teacher& teacher,
                                           const SegmentConfig& cfg, std::size_t image_id = 0,
                                           const ad::Tensor* mask_ref = nullptr);

struct ConceptExemplar {
  std::size_t image_id = 0;
  world::Box box;
};

struct ConceptEntry {
  std::size_t id = 0;  // cluster id from discovery
  std::vector<double> mean_feature;
  std::size_t member_count = 0;
  double importance = 0.0;
  // Detection distance threshold: percentile of member-to-mean distances.
  double threshold = 0.0;
  std::vector<ConceptExemplar> exemplars;
};

struct ConceptBank {
  int version = 1;
  std::size_t class_id = 0;
  std::size_t teacher_dim = 0;
  std::vector<ConceptEntry> concepts;  // sorted by descending importance
  std::string config_hash;

  std::size_t size() const { return concepts.size(); }
};

struct DiscoverConfig {
  std::size_t k_clusters = 15;
  std::size_t top_n = 4;
  std::size_t min_cluster_size = 5;
  double tau = 0.5;
  bool gradcam_filter = true;
  SegmentConfig segment;
  std::size_t max_exemplars = 24;
  double threshold_percentile = 0.90;
  // Detection thresholds are the member-distance percentile times this
  // factor; member spread under-estimates detection-time variation (cell
  // straddling), so the default leaves headroom.
  double threshold_scale = 1.5;
  std::size_t kmeans_max_iters = 100;
  double kmeans_rel_tol = 1e-6;
};

// Top-N class concepts: attention masking, segmentation, k-means clustering,
// then importance ranking by mean teacher-logit drop under patch occlusion.
ConceptBank discover_concepts(const std::vector<const world::LabeledImage*>& class_images,
                              const world::Teacher& teacher, std::size_t class_id,
                              const DiscoverConfig& cfg, std::uint64_t seed,
                              const std::array<double, 3>& occlusion_fill);

nlohmann::json bank_to_json(const ConceptBank& bank);
ConceptBank bank_from_json(const nlohmann::json& j);
void save_bank(const ConceptBank& bank, const std::string& path);
ConceptBank load_bank(const std::string& path);

// Throws when the bank's feature dim does not match the teacher's.
void check_bank_compatible(const ConceptBank& bank, const world::Teacher& teacher);

// Lloyd k-means with k-means++ seeding, deterministic in `seed`.
struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> assignment;
  std::vector<std::size_t> counts;
  double inertia = 0.0;
  std::size_t iterations = 0;
};

KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed, std::size_t max_iters = 100, double rel_tol = 1e-6);

}  // namespace vrx::vce
