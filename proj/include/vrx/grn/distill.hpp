#pragma once

#include <optional>

#include "vrx/grn/grn.hpp"
#include "vrx/world/teacher.hpp"

namespace vrx::grn {

struct DistillConfig {
  std::size_t epochs = 300;
  double base_lr = 0.01;
  std::size_t base_epochs = 100;   // constant-lr phase
  double decay = 0.5;              // lr multiplier per decay step
  std::size_t decay_every = 100;   // epochs per decay step after the base phase
  std::size_t batch_size = 128;
  double p_mask = 0.5;             // probability a sample uses its masked variant
  double beta1 = 0.9;
  double beta2 = 0.999;

  double lr_at(std::size_t epoch) const;
};

// One training sample: the image's hypothesis set paired with the teacher's
// normalized prediction, plus (when any concept was detected) the variant
// with one randomly chosen detected concept masked out and the teacher
// re-evaluated on the masked image.
struct DistillVariant {
  scg::HypothesisSet hypotheses;
  std::vector<double> teacher_probs;
};

struct DistillSample {
  std::size_t image_id = 0;
  std::size_t label = 0;
  DistillVariant original;
  std::optional<DistillVariant> masked;
  std::size_t masked_class = 0, masked_concept = 0;  // valid when masked is set
};

// Teacher output restricted to the classes of interest, then softmaxed.
std::vector<double> teacher_probs_restricted(const std::vector<double>& logits,
                                             const std::vector<std::size_t>& class_ids);

std::vector<DistillSample> build_distill_samples(const world::Dataset& dataset,
                                                 const world::Teacher& teacher,
                                                 const std::vector<vce::ConceptBank>& banks,
                                                 const scg::DetectConfig& det_cfg,
                                                 std::uint64_t seed, bool with_masked,
                                                 const std::array<double, 3>& fill);

struct DistillHistoryRow {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;       // mean batch L1 over the epoch
  double agreement = 0.0;  // teacher/student top-1 agreement over the epoch's batches
};

struct DistillResult {
  std::vector<DistillHistoryRow> history;
};

// Minimizes mean L1 between the softmax-normalized student and teacher
// predictions with Adam; deterministic given (samples, cfg, seed). Aborts on
// non-finite loss or an empty class bank.
DistillResult distill_train(GrnModel& model, const std::vector<DistillSample>& samples,
                            const DistillConfig& cfg, std::uint64_t seed);

void save_history_csv(const DistillResult& result, const std::string& path);

// Inference-mode student predictions for a batch of hypothesis sets.
std::vector<std::size_t> grn_predict(GrnModel& model,
                                     const std::vector<const scg::HypothesisSet*>& sets);

// Top-1 agreement between student predictions and teacher probability rows.
double grn_agreement(GrnModel& model, const std::vector<const scg::HypothesisSet*>& sets,
                     const std::vector<std::vector<double>>& teacher_probs);

}  // namespace vrx::grn
