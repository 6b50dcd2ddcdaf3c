#include "vrx/grn/distill.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vrx/tensor/optim.hpp"

namespace vrx::grn {

using ad::Tape;
using ad::Tensor;

double DistillConfig::lr_at(std::size_t epoch) const {
  if (epoch < base_epochs) return base_lr;
  const std::size_t steps = (epoch - base_epochs) / std::max<std::size_t>(1, decay_every) + 1;
  return base_lr * std::pow(decay, static_cast<double>(steps));
}

std::vector<double> teacher_probs_restricted(const std::vector<double>& logits,
                                             const std::vector<std::size_t>& class_ids) {
  std::vector<double> sel;
  sel.reserve(class_ids.size());
  for (std::size_t c : class_ids) {
    if (c >= logits.size())
      throw Error("teacher_probs_restricted: class id " + std::to_string(c) +
                  " outside teacher logits");
    sel.push_back(logits[c]);
  }
  const double m = *std::max_element(sel.begin(), sel.end());
  double total = 0.0;
  for (double& v : sel) {
    v = std::exp(v - m);
    total += v;
  }
  for (double& v : sel) v /= total;
  return sel;
}

std::vector<DistillSample> build_distill_samples(const world::Dataset& dataset,
                                                 const world::Teacher& teacher,
                                                 const std::vector<vce::ConceptBank>& banks,
                                                 const scg::DetectConfig& det_cfg,
                                                 std::uint64_t seed, bool with_masked,
                                                 const std::array<double, 3>& fill) {
  if (banks.empty()) throw ConfigError("build_distill_samples: no concept banks");
  for (const auto& b : banks)
    if (b.concepts.empty())
      throw ConfigError("build_distill_samples: bank for class " + std::to_string(b.class_id) +
                        " is empty");
  std::vector<std::size_t> class_ids;
  for (const auto& b : banks) class_ids.push_back(b.class_id);

  std::vector<DistillSample> samples(dataset.images.size());
  parallel_for(dataset.images.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const world::LabeledImage& im = dataset.images[i];
      DistillSample& s = samples[i];
      s.image_id = im.id;
      s.label = im.label;
      s.original.hypotheses = scg::build_hypotheses(im.pixels, banks, teacher, det_cfg, im.id);
      s.original.teacher_probs = teacher_probs_restricted(teacher.logits_for(im.pixels), class_ids);
      if (!with_masked) continue;
      // Collect detected (hypothesis, concept) pairs and mask one at random.
      std::vector<std::pair<std::size_t, std::size_t>> detected;
      for (const scg::Scg& g : s.original.hypotheses.hypotheses)
        for (const scg::ConceptDetection& d : g.nodes)
          if (d.detected) detected.emplace_back(g.class_id, d.concept_id);
      if (detected.empty()) continue;
      Rng rng(derive_seed(seed, 0xa5000000ULL + im.id));
      const auto [cls, slot] = detected[rng.uniform_index(detected.size())];
      scg::MaskedConcept mc = scg::mask_concept(im.pixels, s.original.hypotheses, cls, slot,
                                                banks, teacher, det_cfg, fill);
      DistillVariant variant;
      variant.hypotheses = std::move(mc.hypotheses);
      variant.teacher_probs = teacher_probs_restricted(teacher.logits_for(mc.image), class_ids);
      s.masked = std::move(variant);
      s.masked_class = cls;
      s.masked_concept = slot;
    }
  });
  return samples;
}

DistillResult distill_train(GrnModel& model, const std::vector<DistillSample>& samples,
                            const DistillConfig& cfg, std::uint64_t seed) {
  if (samples.empty()) throw ConfigError("distill_train: no samples");
  const GrnConfig& gcfg = model.config();
  ad::Adam opt(model.parameters(), cfg.beta1, cfg.beta2);

  DistillResult result;
  result.history.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(seed, 0xd15711ULL + epoch));
    auto perm = rng.permutation(samples.size());
    const double lr = cfg.lr_at(epoch);

    double epoch_loss = 0.0;
    std::size_t batches = 0, agree = 0, seen = 0;
    for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(perm.size(), start + cfg.batch_size);
      std::vector<const scg::HypothesisSet*> sets;
      Tensor targets(Shape{end - start, gcfg.n_classes});
      for (std::size_t i = start; i < end; ++i) {
        const DistillSample& s = samples[perm[i]];
        const bool use_masked = s.masked.has_value() && rng.uniform() < cfg.p_mask;
        const DistillVariant& v = use_masked ? *s.masked : s.original;
        sets.push_back(&v.hypotheses);
        std::copy(v.teacher_probs.begin(), v.teacher_probs.end(),
                  targets.ptr() + (i - start) * gcfg.n_classes);
      }
      GraphBatch gb = make_graph_batch(sets, gcfg);
      Tape tape;
      ForwardResult fwd = grn_forward(model, gb, /*training=*/true, &tape);
      Tensor student = ad::softmax(fwd.logits, &tape);
      Tensor loss = ad::l1_loss(student, targets, &tape);
      if (!std::isfinite(loss.value()))
        throw Error("distill_train: loss diverged to non-finite at epoch " +
                    std::to_string(epoch));
      epoch_loss += loss.value();
      ++batches;
      tape.backward(loss);
      opt.step(lr);

      // Batch-level top-1 agreement with the teacher targets.
      for (std::size_t r = 0; r < sets.size(); ++r) {
        const double* srow = fwd.logits.ptr() + r * gcfg.n_classes;
        const double* trow = targets.ptr() + r * gcfg.n_classes;
        const std::size_t sarg = static_cast<std::size_t>(
            std::max_element(srow, srow + gcfg.n_classes) - srow);
        const std::size_t targ = static_cast<std::size_t>(
            std::max_element(trow, trow + gcfg.n_classes) - trow);
        agree += (sarg == targ);
        ++seen;
      }
    }
    result.history.push_back({epoch, lr, batches ? epoch_loss / static_cast<double>(batches) : 0.0,
                              seen ? static_cast<double>(agree) / static_cast<double>(seen) : 0.0});
  }
  return result;
}

void save_history_csv(const DistillResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_history_csv: cannot open " + path);
  out << "epoch,lr,l1_loss,agreement\n";
  for (const auto& row : result.history)
    out << row.epoch << "," << row.lr << "," << row.loss << "," << row.agreement << "\n";
}

std::vector<std::size_t> grn_predict(GrnModel& model,
                                     const std::vector<const scg::HypothesisSet*>& sets) {
  if (sets.empty()) return {};
  const GrnConfig& gcfg = model.config();
  GraphBatch gb = make_graph_batch(sets, gcfg);
  ForwardResult fwd = grn_forward(model, gb, /*training=*/false, nullptr);
  std::vector<std::size_t> preds(sets.size());
  for (std::size_t r = 0; r < sets.size(); ++r) {
    const double* row = fwd.logits.ptr() + r * gcfg.n_classes;
    preds[r] = static_cast<std::size_t>(std::max_element(row, row + gcfg.n_classes) - row);
  }
  return preds;
}

double grn_agreement(GrnModel& model, const std::vector<const scg::HypothesisSet*>& sets,
                     const std::vector<std::vector<double>>& teacher_probs) {
  if (sets.size() != teacher_probs.size())
    throw Error("grn_agreement: set/teacher row count mismatch");
  if (sets.empty()) return 0.0;
  auto preds = grn_predict(model, sets);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& row = teacher_probs[i];
    const std::size_t targ =
        static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    agree += (preds[i] == targ);
  }
  return static_cast<double>(agree) / static_cast<double>(preds.size());
}

}  // namespace vrx::grn
