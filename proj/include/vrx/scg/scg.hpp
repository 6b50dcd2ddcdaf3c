#pragma once

#include <array>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vrx/vce/vce.hpp"

namespace vrx::scg {

// One concept slot of a hypothesis: either a matched patch or a dummy node
// (constant-epsilon features at location (0,0)).
struct ConceptDetection {
  std::size_t concept_id = 0;  // slot index, bank order
  bool detected = false;
  std::optional<std::size_t> patch_index;  // into the image's patch list
  world::Box box;                          // matched patch box (detected only)
  std::vector<double> feature;
  std::array<double, 2> location{0.0, 0.0};
  double distance = 0.0;  // Euclidean distance of the best candidate patch
};

struct ScgEdge {
  std::size_t from = 0, to = 0;
  std::array<double, 4> spatial{0, 0, 0, 0};  // [x_j, y_j, x_i, y_i]
};

// Fully connected bidirectional graph over one class's concept slots.
// Nodes are in concept-id order; edges cover every ordered pair (from, to),
// from != to, in lexicographic order.
struct Scg {
  std::size_t class_id = 0;
  std::size_t image_id = 0;
  std::vector<ConceptDetection> nodes;
  std::vector<ScgEdge> edges;

  std::size_t n_nodes() const { return nodes.size(); }
};

struct HypothesisSet {
  std::size_t image_id = 0;
  std::vector<Scg> hypotheses;  // one per class of interest, bank order

  std::size_t size() const { return hypotheses.size(); }
};

struct DetectConfig {
  double epsilon = 1e-3;  // dummy node feature value
  // When set, overrides every per-concept bank threshold.
  std::optional<double> global_threshold;
  vce::SegmentConfig segment;  // detection segments the raw (unmasked) image
};

// Matches patches to the bank's concepts greedily by ascending distance;
// every patch serves at most one concept. Undetected slots become dummies.
std::vector<ConceptDetection> detect_concepts(const std::vector<vce::Patch>& patches,
                                              const vce::ConceptBank& bank,
                                              const DetectConfig& cfg);
std::vector<ConceptDetection> detect_concepts(const ad::Tensor& image,
                                              const vce::ConceptBank& bank,
                                              const world::Teacher& teacher,
                                              const DetectConfig& cfg);

Scg build_scg(const std::vector<vce::Patch>& patches, const vce::ConceptBank& bank,
              const DetectConfig& cfg, std::size_t image_id);

// One SCG per bank; the image's patches are segmented and featurized once
// and shared across all class hypotheses.
HypothesisSet build_hypotheses(const ad::Tensor& image,
                               const std::vector<vce::ConceptBank>& banks,
                               const world::Teacher& teacher, const DetectConfig& cfg,
                               std::size_t image_id = 0);

// Occludes the named detected concept's patch and rebuilds the hypotheses
// from the masked image. Throws if the concept is not detected.
struct MaskedConcept {
  ad::Tensor image;
  HypothesisSet hypotheses;
  world::Box box;  // the occluded region
};
MaskedConcept mask_concept(const ad::Tensor& image, const HypothesisSet& hs,
                           std::size_t class_id, std::size_t concept_id,
                           const std::vector<vce::ConceptBank>& banks,
                           const world::Teacher& teacher, const DetectConfig& cfg,
                           const std::array<double, 3>& fill);

nlohmann::json serialize_scg(const Scg& g);
Scg parse_scg(const nlohmann::json& j);

}  // namespace vrx::scg
