#pragma once

#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "vrx/grn/distill.hpp"
#include "vrx/vdi/vdi.hpp"

namespace vrx::harness {

// Every knob of the pipeline and the experiment families, JSON-overridable.
struct HarnessConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  std::string world_preset = "default";  // default | pose-bias | pose-bias-unbiased
  std::size_t train_per_class = 400;
  std::size_t test_per_class = 200;
  std::size_t bank_images_per_class = 50;

  std::size_t teacher_epochs = 15;
  double teacher_lr = 1e-3;
  std::size_t teacher_batch = 32;

  vce::DiscoverConfig vce;
  scg::DetectConfig detect;
  grn::GrnConfig grn;
  grn::DistillConfig distill;

  // exp-logic
  std::size_t logic_pool_min = 50;
  std::size_t logic_pool_max = 120;
  double logic_margin = 0.3;

  // exp-sensitivity
  std::size_t sensitivity_trials = 100;
  double sensitivity_band = 0.25;  // |delta| bound, as a fraction of the
                                   // baseline explanation's max |score|
  double sensitivity_rate = 0.8;

  // exp-bias
  std::size_t bias_train_per_class = 300;
  std::size_t bias_test_per_class = 150;  // per pose appearances come from the unbiased spec
  std::size_t bias_aug_class = 1;
  std::size_t bias_aug_per_pose = 150;
  double bias_accuracy_margin = 0.05;
  double bias_signature_rate = 0.6;
  std::size_t bias_signature_cap = 120;
  std::size_t bias_distill_epochs = 150;

  world::WorldSpec resolve_world() const;

  nlohmann::json to_json() const;
  // Partial overrides: absent keys keep their defaults.
  static HarnessConfig from_json(const nlohmann::json& j);
  static HarnessConfig load(const std::string& path);
};

struct PipelineArtifacts {
  HarnessConfig cfg;
  world::Dataset train, test;
  std::array<double, 3> fill{0, 0, 0};
  world::Teacher teacher;
  double teacher_train_acc = 0.0, teacher_val_acc = 0.0;
  std::vector<vce::ConceptBank> banks;
  grn::GrnModel model;
  grn::DistillResult distill_history;
  std::vector<grn::DistillSample> train_samples;  // with masked variants
  std::vector<grn::DistillSample> test_samples;   // originals only
  double fidelity_agreement = 0.0;  // student/teacher top-1 on held-out images
  nlohmann::json fidelity_report;   // per-class prediction comparison table
};

// dataset -> teacher -> banks -> hypotheses -> distilled student, with a
// prediction-comparison table covering the concept-masked variants. Stage
// failures abort with the stage name in the message.
PipelineArtifacts run_pipeline(const HarnessConfig& cfg, std::ostream* log = nullptr);

struct ExperimentReport {
  std::string experiment_id;
  nlohmann::json config_snapshot;
  nlohmann::json trials = nlohmann::json::array();
  nlohmann::json aggregates;
  nlohmann::json thresholds;
  bool passed = false;
  double wall_clock_sec = 0.0;

  nlohmann::json to_json() const;
  // Canonical serialized form; identical runs hash identically (wall clock
  // excluded).
  std::string canonical_dump() const;
  std::uint64_t content_hash() const;
  std::string to_csv() const;
  void save(const std::string& dir) const;
};

// Three-arm correction study on teacher-misclassified images: score-guided
// concept substitution/occlusion vs random-patch and good-for-good controls,
// with an error-cause census (concept / structure / both).
ExperimentReport run_logic_consistency(PipelineArtifacts& art, std::ostream* log = nullptr);

// Paired perturbation study on correctly classified images: patch swaps must
// move node scores but not edge scores; part relocations the reverse.
ExperimentReport run_sensitivity(PipelineArtifacts& art, std::ostream* log = nullptr);

// Pose-bias diagnosis: biased teacher, unbiased test, score signature on the
// errors, then the two augmentation settings compared on test accuracy.
ExperimentReport run_bias_diagnosis(const HarnessConfig& cfg, std::ostream* log = nullptr);

}  // namespace vrx::harness
