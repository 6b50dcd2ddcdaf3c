#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include "vrx/harness/harness.hpp"

namespace vrx::harness {

using nlohmann::json;

namespace {

template <typename F>
auto stage(const char* name, std::ostream* log, F&& f) {
  if (log) (*log) << "[pipeline] " << name << "...\n" << std::flush;
  try {
    return f();
  } catch (const Error& e) {
    throw Error(std::string("pipeline stage '") + name + "' failed: " + e.what());
  }
}

}  // namespace

PipelineArtifacts run_pipeline(const HarnessConfig& cfg, std::ostream* log) {
  PipelineArtifacts art;
  art.cfg = cfg;
  const world::WorldSpec spec = cfg.resolve_world();

  art.train = stage("generate-train", log, [&] {
    return world::generate_dataset(spec, cfg.train_per_class, derive_seed(cfg.seed, 1));
  });
  art.test = stage("generate-test", log, [&] {
    // For the pose-bias preset the held-out set always covers all poses.
    world::WorldSpec test_spec = spec;
    if (cfg.world_preset == "pose-bias") test_spec = world::pose_bias_world(false);
    return world::generate_dataset(test_spec, cfg.test_per_class, derive_seed(cfg.seed, 2));
  });
  art.fill = art.train.mean_pixel();

  stage("train-teacher", log, [&] {
    auto result = world::train_teacher(art.train, cfg.teacher_epochs, cfg.teacher_lr,
                                       derive_seed(cfg.seed, 3), cfg.teacher_batch);
    art.teacher = std::move(result.model);
    art.teacher_train_acc = result.train_accuracy;
    art.teacher_val_acc = result.val_accuracy;
    if (log)
      (*log) << "[pipeline]   teacher train acc " << art.teacher_train_acc << ", val acc "
             << art.teacher_val_acc << "\n";
    return 0;
  });

  stage("extract-concepts", log, [&] {
    for (std::size_t c = 0; c < spec.n_classes(); ++c) {
      std::vector<const world::LabeledImage*> class_images;
      for (const auto& im : art.train.images)
        if (im.label == c && class_images.size() < cfg.bank_images_per_class)
          class_images.push_back(&im);
      art.banks.push_back(vce::discover_concepts(class_images, art.teacher, c, cfg.vce,
                                                 derive_seed(cfg.seed, 4), art.fill));
      if (log) {
        (*log) << "[pipeline]   class " << c << " concepts:";
        for (const auto& e : art.banks.back().concepts)
          (*log) << " (id=" << e.id << " imp=" << e.importance << " members=" << e.member_count
                 << ")";
        (*log) << "\n";
      }
    }
    return 0;
  });

  stage("build-hypotheses", log, [&] {
    art.train_samples =
        grn::build_distill_samples(art.train, art.teacher, art.banks, cfg.detect,
                                   derive_seed(cfg.seed, 5), /*with_masked=*/true, art.fill);
    art.test_samples =
        grn::build_distill_samples(art.test, art.teacher, art.banks, cfg.detect,
                                   derive_seed(cfg.seed, 6), /*with_masked=*/false, art.fill);
    return 0;
  });

  stage("distill", log, [&] {
    grn::GrnConfig gcfg = cfg.grn;
    gcfg.n_classes = spec.n_classes();
    gcfg.node_dims[0] = art.teacher.feature_dim();
    art.model = grn::GrnModel(gcfg, derive_seed(cfg.seed, 7));
    art.distill_history =
        grn::distill_train(art.model, art.train_samples, cfg.distill, derive_seed(cfg.seed, 8));
    if (log && !art.distill_history.history.empty())
      (*log) << "[pipeline]   final train loss " << art.distill_history.history.back().loss
             << ", batch agreement " << art.distill_history.history.back().agreement << "\n";
    return 0;
  });

  stage("fidelity", log, [&] {
    std::vector<const scg::HypothesisSet*> sets;
    std::vector<std::vector<double>> probs;
    for (const auto& s : art.test_samples) {
      sets.push_back(&s.original.hypotheses);
      probs.push_back(s.original.teacher_probs);
    }
    art.fidelity_agreement = grn::grn_agreement(art.model, sets, probs);
    if (log) (*log) << "[pipeline]   student/teacher agreement " << art.fidelity_agreement << "\n";

    // Prediction-comparison table: mean teacher/student vectors per class and
    // per concept-masked variant group.
    const std::size_t n = art.model.config().n_classes;
    auto mean_rows = [&](const std::vector<const scg::HypothesisSet*>& ss,
                         const std::vector<const std::vector<double>*>& ps) {
      json row;
      std::vector<double> tmean(n, 0.0), smean(n, 0.0);
      grn::GraphBatch gb = grn::make_graph_batch(ss, art.model.config());
      grn::ForwardResult fwd = grn::grn_forward(art.model, gb, false, nullptr);
      ad::Tensor sp = ad::softmax(fwd.logits, nullptr);
      for (std::size_t i = 0; i < ss.size(); ++i)
        for (std::size_t c = 0; c < n; ++c) {
          tmean[c] += (*ps[i])[c];
          smean[c] += sp.data()[i * n + c];
        }
      for (std::size_t c = 0; c < n; ++c) {
        tmean[c] /= static_cast<double>(ss.size());
        smean[c] /= static_cast<double>(ss.size());
      }
      row["teacher_mean"] = tmean;
      row["student_mean"] = smean;
      row["count"] = ss.size();
      return row;
    };

    json table = json::array();
    for (std::size_t c = 0; c < n; ++c) {
      std::vector<const scg::HypothesisSet*> ss;
      std::vector<const std::vector<double>*> ps;
      for (const auto& s : art.test_samples)
        if (s.label == c) {
          ss.push_back(&s.original.hypotheses);
          ps.push_back(&s.original.teacher_probs);
        }
      if (ss.empty()) continue;
      json row = mean_rows(ss, ps);
      row["group"] = spec.classes[c].name;
      row["class"] = c;
      table.push_back(row);
      // Masked variants of this class's own concepts, one row per concept.
      for (std::size_t k = 0; k < cfg.grn.concepts_per_class; ++k) {
        std::vector<const scg::HypothesisSet*> ms;
        std::vector<const std::vector<double>*> mp;
        for (const auto& s : art.train_samples)
          if (s.label == c && s.masked && s.masked_class == c && s.masked_concept == k) {
            ms.push_back(&s.masked->hypotheses);
            mp.push_back(&s.masked->teacher_probs);
          }
        if (ms.empty()) continue;
        json mrow = mean_rows(ms, mp);
        mrow["group"] = spec.classes[c].name + "_detect" + std::to_string(k);
        mrow["class"] = c;
        mrow["masked_concept"] = k;
        table.push_back(mrow);
      }
    }
    art.fidelity_report = json();
    art.fidelity_report["agreement"] = art.fidelity_agreement;
    art.fidelity_report["teacher_val_accuracy"] = art.teacher_val_acc;
    art.fidelity_report["prediction_table"] = table;
    return 0;
  });

  return art;
}

}  // namespace vrx::harness
