#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vrx/kernels/kernels.hpp"
#include "vrx/vce/vce.hpp"

namespace vrx::vce {

using nlohmann::json;

json bank_to_json(const ConceptBank& bank) {
  json j;
  j["version"] = bank.version;
  j["class_id"] = bank.class_id;
  j["teacher_dim"] = bank.teacher_dim;
  j["config_hash"] = bank.config_hash;
  j["concepts"] = json::array();
  for (const ConceptEntry& c : bank.concepts) {
    json jc;
    jc["id"] = c.id;
    jc["mean_feature"] = c.mean_feature;
    jc["importance"] = c.importance;
    jc["members"] = c.member_count;
    jc["threshold"] = c.threshold;
    jc["exemplars"] = json::array();
    for (const ConceptExemplar& e : c.exemplars)
      jc["exemplars"].push_back(
          {{"image", e.image_id}, {"box", {e.box.x0, e.box.y0, e.box.x1, e.box.y1}}});
    j["concepts"].push_back(jc);
  }
  return j;
}

ConceptBank bank_from_json(const json& j) {
  ConceptBank bank;
  try {
    bank.version = j.at("version").get<int>();
    bank.class_id = j.at("class_id").get<std::size_t>();
    bank.teacher_dim = j.at("teacher_dim").get<std::size_t>();
    bank.config_hash = j.value("config_hash", "");
    for (const auto& jc : j.at("concepts")) {
      ConceptEntry c;
      c.id = jc.at("id").get<std::size_t>();
      c.mean_feature = jc.at("mean_feature").get<std::vector<double>>();
      c.importance = jc.at("importance").get<double>();
      c.member_count = jc.at("members").get<std::size_t>();
      c.threshold = jc.value("threshold", 0.0);
      if (jc.contains("exemplars"))
        for (const auto& je : jc.at("exemplars")) {
          ConceptExemplar e;
          e.image_id = je.at("image").get<std::size_t>();
          auto b = je.at("box").get<std::array<int, 4>>();
          e.box = world::Box{b[0], b[1], b[2], b[3]};
          c.exemplars.push_back(e);
        }
      bank.concepts.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("concept bank: ") + e.what());
  }
  for (const ConceptEntry& c : bank.concepts)
    if (c.mean_feature.size() != bank.teacher_dim)
      throw SchemaError("concept bank: concept " + std::to_string(c.id) + " mean_feature has " +
                        std::to_string(c.mean_feature.size()) + " dims, teacher_dim is " +
                        std::to_string(bank.teacher_dim));
  return bank;
}

void save_bank(const ConceptBank& bank, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_bank: cannot open " + path);
  out << bank_to_json(bank).dump(2);
}

ConceptBank load_bank(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_bank: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("load_bank: " + path + ": " + e.what());
  }
  return bank_from_json(j);
}

void check_bank_compatible(const ConceptBank& bank, const world::Teacher& teacher) {
  if (bank.teacher_dim != teacher.feature_dim())
    throw Error("concept bank for class " + std::to_string(bank.class_id) + " has teacher_dim " +
                std::to_string(bank.teacher_dim) + " but the teacher produces " +
                std::to_string(teacher.feature_dim()) + "-dim features");
}

ConceptBank discover_concepts(const std::vector<const world::LabeledImage*>& class_images,
                              const world::Teacher& teacher, std::size_t class_id,
                              const DiscoverConfig& cfg, std::uint64_t seed,
                              const std::array<double, 3>& occlusion_fill) {
  if (class_images.size() < 20)
    throw ConfigError("discover_concepts: needs at least 20 class images, got " +
                      std::to_string(class_images.size()));
  if (cfg.k_clusters < cfg.top_n)
    throw ConfigError("discover_concepts: K (" + std::to_string(cfg.k_clusters) +
                      ") must be >= N (" + std::to_string(cfg.top_n) + ")");

  // Stage 1+2: attention masking and patch featurization, per image. The
  // mask gates which cells become candidates; features always come from the
  // raw pixels so detection-time distances stay comparable.
  std::vector<std::vector<Patch>> per_image(class_images.size());
  parallel_for(class_images.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const world::LabeledImage& im = *class_images[i];
      ad::Tensor masked;
      if (cfg.gradcam_filter) {
        world::AttentionMap att = world::grad_attention(teacher, im.pixels, class_id);
        // A dead map carries no signal; fall back to the raw image.
        if (!att.dead) masked = world::mask_image(im.pixels, att.map, cfg.tau);
      }
      try {
        per_image[i] = segment_multiresolution(im.pixels, teacher, cfg.segment, im.id,
                                               masked.defined() ? &masked : nullptr);
      } catch (const Error&) {
        per_image[i] = {};  // fully masked image contributes no candidates
      }
    }
  });

  std::vector<Patch> patches;
  for (auto& v : per_image)
    for (auto& p : v) patches.push_back(std::move(p));
  if (patches.empty())
    throw Error("discover_concepts: no concept candidates survived masking; lower tau");

  // Stage 3: cluster candidate features.
  std::vector<std::vector<double>> feats;
  feats.reserve(patches.size());
  for (const Patch& p : patches) feats.push_back(p.feature);
  KMeansResult km = kmeans(feats, cfg.k_clusters, seed, cfg.kmeans_max_iters, cfg.kmeans_rel_tol);

  // Stage 4: census, dropping small clusters.
  const std::size_t k = km.centroids.size();
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < patches.size(); ++i) members[km.assignment[i]].push_back(i);

  std::vector<std::size_t> alive;
  for (std::size_t c = 0; c < k; ++c)
    if (members[c].size() >= cfg.min_cluster_size) alive.push_back(c);

  auto census = [&]() {
    std::ostringstream os;
    for (std::size_t c = 0; c < k; ++c) os << (c ? ", " : "") << c << ":" << members[c].size();
    return os.str();
  };
  if (alive.size() < cfg.top_n)
    throw Error("discover_concepts: only " + std::to_string(alive.size()) +
                " clusters of size >= " + std::to_string(cfg.min_cluster_size) +
                " survived, need " + std::to_string(cfg.top_n) + " (cluster census: " + census() +
                ")");

  // Stage 5: importance = mean drop of the class logit under member occlusion.
  // Baseline logits per source image, then all occluded variants in batches.
  std::vector<double> base_logit(class_images.size());
  {
    std::vector<const ad::Tensor*> ptrs;
    for (const auto* im : class_images) ptrs.push_back(&im->pixels);
    auto logits = teacher.logits_batch(ptrs);
    for (std::size_t i = 0; i < logits.size(); ++i) base_logit[i] = logits[i][class_id];
  }
  std::vector<std::size_t> image_index_of(patches.size());
  {
    // Map dataset image id -> position in class_images.
    std::vector<std::size_t> pos_lookup;
    for (std::size_t i = 0; i < class_images.size(); ++i) {
      if (class_images[i]->id >= pos_lookup.size()) pos_lookup.resize(class_images[i]->id + 1, SIZE_MAX);
      pos_lookup[class_images[i]->id] = i;
    }
    for (std::size_t i = 0; i < patches.size(); ++i) image_index_of[i] = pos_lookup[patches[i].image_id];
  }

  std::vector<double> occluded_logit(patches.size());
  {
    constexpr std::size_t kBatch = 64;
    std::vector<ad::Tensor> occluded;
    occluded.resize(std::min(kBatch, patches.size()));
    for (std::size_t start = 0; start < patches.size(); start += kBatch) {
      const std::size_t end = std::min(patches.size(), start + kBatch);
      std::vector<const ad::Tensor*> ptrs;
      for (std::size_t i = start; i < end; ++i) {
        occluded[i - start] = world::occlude_region(
            class_images[image_index_of[i]]->pixels, patches[i].box, occlusion_fill);
        ptrs.push_back(&occluded[i - start]);
      }
      auto logits = teacher.logits_batch(ptrs);
      for (std::size_t i = start; i < end; ++i)
        occluded_logit[i] = logits[i - start][class_id];
    }
  }

  struct Scored {
    std::size_t cluster;
    double importance;
  };
  std::vector<Scored> scored;
  for (std::size_t c : alive) {
    double drop = 0.0;
    for (std::size_t i : members[c]) drop += base_logit[image_index_of[i]] - occluded_logit[i];
    scored.push_back({c, drop / static_cast<double>(members[c].size())});
  }
  // Descending importance, ties to the lower cluster id.
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.importance != b.importance) return a.importance > b.importance;
    return a.cluster < b.cluster;
  });

  // Spatial non-max suppression over the ranked clusters: near-duplicate
  // clusters of the same image region (the same part at two grid scales)
  // would otherwise crowd out whole parts. Skipped clusters refill the list
  // if too few spatially distinct ones exist.
  auto cluster_typical_box = [&](std::size_t c) {
    std::vector<int> x0, y0, x1, y1;
    for (std::size_t i : members[c]) {
      x0.push_back(patches[i].box.x0);
      y0.push_back(patches[i].box.y0);
      x1.push_back(patches[i].box.x1);
      y1.push_back(patches[i].box.y1);
    }
    auto med = [](std::vector<int>& v) {
      std::sort(v.begin(), v.end());
      return v[v.size() / 2];
    };
    return world::Box{med(x0), med(y0), med(x1), med(y1)};
  };
  {
    std::vector<Scored> accepted, skipped;
    std::vector<world::Box> boxes;
    for (const Scored& sc : scored) {
      if (accepted.size() == cfg.top_n) break;
      world::Box b = cluster_typical_box(sc.cluster);
      bool dup = false;
      for (const world::Box& ab : boxes)
        if (world::box_iou(b, ab) > 0.4) dup = true;
      if (dup) {
        skipped.push_back(sc);
      } else {
        accepted.push_back(sc);
        boxes.push_back(b);
      }
    }
    for (const Scored& sc : skipped) {
      if (accepted.size() == cfg.top_n) break;
      accepted.push_back(sc);
    }
    scored = std::move(accepted);
  }
  scored.resize(cfg.top_n);

  // Stage 6: assemble the bank.
  const auto& kt = kern::active();
  const std::size_t dim = teacher.feature_dim();
  ConceptBank bank;
  bank.class_id = class_id;
  bank.teacher_dim = dim;
  {
    std::ostringstream cfg_key;
    cfg_key << cfg.k_clusters << "|" << cfg.top_n << "|" << cfg.min_cluster_size << "|" << cfg.tau
            << "|" << cfg.gradcam_filter << "|" << cfg.threshold_percentile << "|"
            << cfg.threshold_scale << "|" << seed;
    bank.config_hash = hex64(fnv1a(cfg_key.str()));
  }
  for (const Scored& sc : scored) {
    ConceptEntry entry;
    entry.id = sc.cluster;
    entry.importance = sc.importance;
    entry.member_count = members[sc.cluster].size();
    // Exact arithmetic mean of member features (recomputable).
    entry.mean_feature.assign(dim, 0.0);
    for (std::size_t i : members[sc.cluster])
      kt.axpy(1.0, patches[i].feature.data(), entry.mean_feature.data(), dim);
    kt.scale(1.0 / static_cast<double>(entry.member_count), entry.mean_feature.data(),
             entry.mean_feature.data(), dim);

    std::vector<std::pair<double, std::size_t>> by_dist;
    for (std::size_t i : members[sc.cluster])
      by_dist.emplace_back(kt.sqdist(patches[i].feature.data(), entry.mean_feature.data(), dim), i);
    std::sort(by_dist.begin(), by_dist.end());
    // Per-concept detection threshold from the member distance distribution.
    const std::size_t pct_idx = std::min(
        by_dist.size() - 1,
        static_cast<std::size_t>(cfg.threshold_percentile * static_cast<double>(by_dist.size())));
    entry.threshold = cfg.threshold_scale * std::sqrt(by_dist[pct_idx].first);
    for (std::size_t e = 0; e < std::min(cfg.max_exemplars, by_dist.size()); ++e)
      entry.exemplars.push_back(
          {patches[by_dist[e].second].image_id, patches[by_dist[e].second].box});
    bank.concepts.push_back(std::move(entry));
  }
  return bank;
}

}  // namespace vrx::vce
