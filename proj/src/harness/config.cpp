#include <fstream>

#include "vrx/harness/harness.hpp"

namespace vrx::harness {

using nlohmann::json;

world::WorldSpec HarnessConfig::resolve_world() const {
  if (world_preset == "default") return world::default_world();
  if (world_preset == "pose-bias") return world::pose_bias_world(true);
  if (world_preset == "pose-bias-unbiased") return world::pose_bias_world(false);
  throw ConfigError("unknown world preset '" + world_preset +
                    "' (expected default|pose-bias|pose-bias-unbiased)");
}

json HarnessConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["world_preset"] = world_preset;
  j["train_per_class"] = train_per_class;
  j["test_per_class"] = test_per_class;
  j["bank_images_per_class"] = bank_images_per_class;
  j["teacher"] = {{"epochs", teacher_epochs}, {"lr", teacher_lr}, {"batch", teacher_batch}};
  j["vce"] = {{"k_clusters", vce.k_clusters},
              {"top_n", vce.top_n},
              {"min_cluster_size", vce.min_cluster_size},
              {"tau", vce.tau},
              {"gradcam_filter", vce.gradcam_filter},
              {"grids", vce.segment.grids},
              {"max_masked_fraction", vce.segment.max_masked_fraction},
              {"max_exemplars", vce.max_exemplars},
              {"threshold_percentile", vce.threshold_percentile},
              {"threshold_scale", vce.threshold_scale}};
  j["detect"] = {{"epsilon", detect.epsilon},
                 {"grids", detect.segment.grids}};
  if (detect.global_threshold) j["detect"]["global_threshold"] = *detect.global_threshold;
  j["grn"] = {{"concepts_per_class", grn.concepts_per_class},
              {"node_dims", grn.node_dims},
              {"edge_dims", grn.edge_dims},
              {"edge_concat", grn.edge_concat}};
  j["distill"] = {{"epochs", distill.epochs},
                  {"base_lr", distill.base_lr},
                  {"base_epochs", distill.base_epochs},
                  {"decay", distill.decay},
                  {"decay_every", distill.decay_every},
                  {"batch_size", distill.batch_size},
                  {"p_mask", distill.p_mask},
                  {"beta1", distill.beta1},
                  {"beta2", distill.beta2}};
  j["logic"] = {{"pool_min", logic_pool_min},
                {"pool_max", logic_pool_max},
                {"margin", logic_margin}};
  j["sensitivity"] = {{"trials", sensitivity_trials},
                      {"band", sensitivity_band},
                      {"rate", sensitivity_rate}};
  j["bias"] = {{"train_per_class", bias_train_per_class},
               {"test_per_class", bias_test_per_class},
               {"aug_class", bias_aug_class},
               {"aug_per_pose", bias_aug_per_pose},
               {"accuracy_margin", bias_accuracy_margin},
               {"signature_rate", bias_signature_rate},
               {"signature_cap", bias_signature_cap},
               {"distill_epochs", bias_distill_epochs}};
  return j;
}

HarnessConfig HarnessConfig::from_json(const json& j) {
  HarnessConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.world_preset = j.value("world_preset", c.world_preset);
    c.train_per_class = j.value("train_per_class", c.train_per_class);
    c.test_per_class = j.value("test_per_class", c.test_per_class);
    c.bank_images_per_class = j.value("bank_images_per_class", c.bank_images_per_class);
    if (j.contains("teacher")) {
      const auto& t = j["teacher"];
      c.teacher_epochs = t.value("epochs", c.teacher_epochs);
      c.teacher_lr = t.value("lr", c.teacher_lr);
      c.teacher_batch = t.value("batch", c.teacher_batch);
    }
    if (j.contains("vce")) {
      const auto& v = j["vce"];
      c.vce.k_clusters = v.value("k_clusters", c.vce.k_clusters);
      c.vce.top_n = v.value("top_n", c.vce.top_n);
      c.vce.min_cluster_size = v.value("min_cluster_size", c.vce.min_cluster_size);
      c.vce.tau = v.value("tau", c.vce.tau);
      c.vce.gradcam_filter = v.value("gradcam_filter", c.vce.gradcam_filter);
      c.vce.segment.grids = v.value("grids", c.vce.segment.grids);
      c.vce.segment.max_masked_fraction =
          v.value("max_masked_fraction", c.vce.segment.max_masked_fraction);
      c.vce.max_exemplars = v.value("max_exemplars", c.vce.max_exemplars);
      c.vce.threshold_percentile = v.value("threshold_percentile", c.vce.threshold_percentile);
      c.vce.threshold_scale = v.value("threshold_scale", c.vce.threshold_scale);
    }
    if (j.contains("detect")) {
      const auto& d = j["detect"];
      c.detect.epsilon = d.value("epsilon", c.detect.epsilon);
      c.detect.segment.grids = d.value("grids", c.detect.segment.grids);
      if (d.contains("global_threshold"))
        c.detect.global_threshold = d["global_threshold"].get<double>();
    }
    if (j.contains("grn")) {
      const auto& g = j["grn"];
      c.grn.concepts_per_class = g.value("concepts_per_class", c.grn.concepts_per_class);
      c.grn.node_dims = g.value("node_dims", c.grn.node_dims);
      c.grn.edge_dims = g.value("edge_dims", c.grn.edge_dims);
      c.grn.edge_concat = g.value("edge_concat", c.grn.edge_concat);
    }
    if (j.contains("distill")) {
      const auto& d = j["distill"];
      c.distill.epochs = d.value("epochs", c.distill.epochs);
      c.distill.base_lr = d.value("base_lr", c.distill.base_lr);
      c.distill.base_epochs = d.value("base_epochs", c.distill.base_epochs);
      c.distill.decay = d.value("decay", c.distill.decay);
      c.distill.decay_every = d.value("decay_every", c.distill.decay_every);
      c.distill.batch_size = d.value("batch_size", c.distill.batch_size);
      c.distill.p_mask = d.value("p_mask", c.distill.p_mask);
      c.distill.beta1 = d.value("beta1", c.distill.beta1);
      c.distill.beta2 = d.value("beta2", c.distill.beta2);
    }
    if (j.contains("logic")) {
      const auto& l = j["logic"];
      c.logic_pool_min = l.value("pool_min", c.logic_pool_min);
      c.logic_pool_max = l.value("pool_max", c.logic_pool_max);
      c.logic_margin = l.value("margin", c.logic_margin);
    }
    if (j.contains("sensitivity")) {
      const auto& s = j["sensitivity"];
      c.sensitivity_trials = s.value("trials", c.sensitivity_trials);
      c.sensitivity_band = s.value("band", c.sensitivity_band);
      c.sensitivity_rate = s.value("rate", c.sensitivity_rate);
    }
    if (j.contains("bias")) {
      const auto& b = j["bias"];
      c.bias_train_per_class = b.value("train_per_class", c.bias_train_per_class);
      c.bias_test_per_class = b.value("test_per_class", c.bias_test_per_class);
      c.bias_aug_class = b.value("aug_class", c.bias_aug_class);
      c.bias_aug_per_pose = b.value("aug_per_pose", c.bias_aug_per_pose);
      c.bias_accuracy_margin = b.value("accuracy_margin", c.bias_accuracy_margin);
      c.bias_signature_rate = b.value("signature_rate", c.bias_signature_rate);
      c.bias_signature_cap = b.value("signature_cap", c.bias_signature_cap);
      c.bias_distill_epochs = b.value("distill_epochs", c.bias_distill_epochs);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

HarnessConfig HarnessConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace vrx::harness
