#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vrx/grn/distill.hpp"

namespace vrx::vdi {

// Gradients of one class logit with respect to every per-hypothesis graph
// embedding. Requires the tape of the forward pass that produced `fwd`;
// consumes it.
std::vector<std::vector<double>> contribution_weights(const grn::ForwardResult& fwd,
                                                      std::size_t class_index, ad::Tape& tape);

struct HypothesisScores {
  std::size_t hypothesis_class = 0;
  double score = 0.0;                 // s_i = alpha_i . G_i(h_i)
  std::vector<double> node_scores;    // N values, slot order
  std::vector<double> edge_scores;    // N(N-1) values, lexicographic pair order
};

// Slice-restricted dot products: the node/edge scores partition s_i exactly
// over the embedding layout.
std::vector<HypothesisScores> contribution_scores(
    const std::vector<std::vector<double>>& alpha, const grn::ForwardResult& fwd,
    const grn::GrnConfig& cfg);

struct ClassSection {
  std::size_t target_class = 0;  // the "why / why not" class c
  double y = 0.0;                // y^c
  double bias = 0.0;             // b_c
  std::vector<HypothesisScores> hypotheses;  // n entries, class order
};

struct NodeMeta {
  std::size_t concept_id = 0;
  bool detected = false;
  world::Box box;
  std::array<double, 2> location{0.0, 0.0};
  double distance = 0.0;
};

struct Explanation {
  int version = 1;
  std::size_t image_id = 0;
  std::vector<std::size_t> class_ids;
  std::vector<double> teacher_prediction;  // restricted softmax
  std::vector<double> student_prediction;
  std::size_t teacher_top1 = 0;
  std::size_t student_top1 = 0;
  bool no_concepts_detected = false;
  std::vector<ClassSection> sections;              // one per target class
  std::vector<std::vector<NodeMeta>> detections;   // per hypothesis, slot order
  double normalization = 1.0;                      // max |score| over the explanation

  // Kept for overlay rendering; not serialized.
  ad::Tensor image;
};

// Display bucketing of signed scores. The buckets partition the real line,
// preserve sign, and map exactly 0 to the neutral bucket.
struct ContributionScale {
  double weak = 0.2;
  double strong = 0.6;

  enum class Bucket {
    StrongNegative,
    Negative,
    WeakNegative,
    Neutral,
    WeakPositive,
    Positive,
    StrongPositive,
  };
  Bucket bucket(double normalized_score) const;
  static const char* bucket_name(Bucket b);
  static const char* bucket_color(Bucket b);
};

// Full pipeline for one image: hypotheses, n forward/backward passes, all
// contribution scores, with the linear-decomposition identities checked
// before the explanation is emitted.
Explanation explain(const ad::Tensor& image, grn::GrnModel& model, const world::Teacher& teacher,
                    const std::vector<vce::ConceptBank>& banks, const scg::DetectConfig& det_cfg,
                    std::size_t image_id = 0);

// Same, reusing an existing hypothesis set (skips segmentation).
Explanation explain_hypotheses(const scg::HypothesisSet& hs, grn::GrnModel& model,
                               const std::vector<double>& teacher_probs,
                               std::size_t image_id = 0);

nlohmann::json explanation_to_json(const Explanation& e);
Explanation explanation_from_json(const nlohmann::json& j);

// format: "json", "dot" or "svg" (svg needs the in-memory image).
std::string render_explanation(const Explanation& e, const std::string& format,
                               const ContributionScale& scale = {});

}  // namespace vrx::vdi
