#include "vrx/scg/scg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "vrx/kernels/kernels.hpp"

namespace vrx::scg {

using nlohmann::json;

std::vector<ConceptDetection> detect_concepts(const std::vector<vce::Patch>& patches,
                                              const vce::ConceptBank& bank,
                                              const DetectConfig& cfg) {
  const auto& kt = kern::active();
  const std::size_t n_concepts = bank.concepts.size();
  const std::size_t dim = bank.teacher_dim;

  // All (concept, patch) distances.
  struct Cand {
    double dist;
    std::size_t concept_idx;
    std::size_t patch_idx;
  };
  std::vector<Cand> cands;
  cands.reserve(n_concepts * patches.size());
  std::vector<double> best_any(n_concepts, std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < n_concepts; ++c) {
    const auto& mean = bank.concepts[c].mean_feature;
    for (std::size_t p = 0; p < patches.size(); ++p) {
      if (patches[p].feature.size() != dim)
        throw ShapeError("detect_concepts: patch feature dim " +
                         std::to_string(patches[p].feature.size()) + " vs bank dim " +
                         std::to_string(dim));
      const double d = std::sqrt(kt.sqdist(patches[p].feature.data(), mean.data(), dim));
      cands.push_back({d, c, p});
      best_any[c] = std::min(best_any[c], d);
    }
  }
  // Greedy ascending-distance matching; ties resolved by (concept, patch) id
  // so assignment is a total order.
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.concept_idx != b.concept_idx) return a.concept_idx < b.concept_idx;
    return a.patch_idx < b.patch_idx;
  });

  std::vector<ConceptDetection> out(n_concepts);
  std::vector<bool> concept_done(n_concepts, false), patch_used(patches.size(), false);
  std::size_t assigned = 0;
  for (const Cand& cd : cands) {
    if (assigned == n_concepts) break;
    if (concept_done[cd.concept_idx] || patch_used[cd.patch_idx]) continue;
    concept_done[cd.concept_idx] = true;
    patch_used[cd.patch_idx] = true;
    ++assigned;
    const double threshold = cfg.global_threshold ? *cfg.global_threshold
                                                  : bank.concepts[cd.concept_idx].threshold;
    ConceptDetection& det = out[cd.concept_idx];
    det.concept_id = cd.concept_idx;
    det.distance = cd.dist;
    if (cd.dist <= threshold) {
      const vce::Patch& p = patches[cd.patch_idx];
      det.detected = true;
      det.patch_index = cd.patch_idx;
      det.box = p.box;
      det.feature = p.feature;
      det.location = p.centroid;
    }
  }
  for (std::size_t c = 0; c < n_concepts; ++c) {
    ConceptDetection& det = out[c];
    det.concept_id = c;
    if (!det.detected) {
      det.feature.assign(dim, cfg.epsilon);
      det.location = {0.0, 0.0};
      if (!concept_done[c])
        det.distance = std::isinf(best_any[c]) ? 0.0 : best_any[c];
    }
  }
  return out;
}

std::vector<ConceptDetection> detect_concepts(const ad::Tensor& image,
                                              const vce::ConceptBank& bank,
                                              const world::Teacher& teacher,
                                              const DetectConfig& cfg) {
  vce::check_bank_compatible(bank, teacher);
  auto patches = vce::segment_multiresolution(image, teacher, cfg.segment);
  return detect_concepts(patches, bank, cfg);
}

Scg build_scg(const std::vector<vce::Patch>& patches, const vce::ConceptBank& bank,
              const DetectConfig& cfg, std::size_t image_id) {
  Scg g;
  g.class_id = bank.class_id;
  g.image_id = image_id;
  g.nodes = detect_concepts(patches, bank, cfg);
  const std::size_t n = g.nodes.size();
  g.edges.reserve(n * (n - 1));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      if (i == j) continue;
      ScgEdge e;
      e.from = j;
      e.to = i;
      e.spatial = {g.nodes[j].location[0], g.nodes[j].location[1], g.nodes[i].location[0],
                   g.nodes[i].location[1]};
      g.edges.push_back(e);
    }
  return g;
}

HypothesisSet build_hypotheses(const ad::Tensor& image,
                               const std::vector<vce::ConceptBank>& banks,
                               const world::Teacher& teacher, const DetectConfig& cfg,
                               std::size_t image_id) {
  if (banks.empty()) throw ConfigError("build_hypotheses: needs at least one concept bank");
  for (const auto& bank : banks) vce::check_bank_compatible(bank, teacher);
  // Segment and featurize once; reuse across every class hypothesis.
  auto patches = vce::segment_multiresolution(image, teacher, cfg.segment, image_id);
  HypothesisSet hs;
  hs.image_id = image_id;
  hs.hypotheses.reserve(banks.size());
  for (const auto& bank : banks) hs.hypotheses.push_back(build_scg(patches, bank, cfg, image_id));
  return hs;
}

MaskedConcept mask_concept(const ad::Tensor& image, const HypothesisSet& hs,
                           std::size_t class_id, std::size_t concept_id,
                           const std::vector<vce::ConceptBank>& banks,
                           const world::Teacher& teacher, const DetectConfig& cfg,
                           const std::array<double, 3>& fill) {
  const Scg* target = nullptr;
  for (const Scg& g : hs.hypotheses)
    if (g.class_id == class_id) target = &g;
  if (!target) throw Error("mask_concept: no hypothesis for class " + std::to_string(class_id));
  if (concept_id >= target->nodes.size())
    throw Error("mask_concept: concept " + std::to_string(concept_id) + " out of range");
  const ConceptDetection& det = target->nodes[concept_id];
  if (!det.detected)
    throw Error("mask_concept: concept " + std::to_string(concept_id) + " of class " +
                std::to_string(class_id) + " is not detected in this hypothesis");
  MaskedConcept out;
  out.box = det.box;
  out.image = world::occlude_region(image, det.box, fill);
  out.hypotheses = build_hypotheses(out.image, banks, teacher, cfg, hs.image_id);
  return out;
}

json serialize_scg(const Scg& g) {
  json j;
  j["version"] = 1;
  j["class_id"] = g.class_id;
  j["image_id"] = g.image_id;
  j["nodes"] = json::array();
  for (const ConceptDetection& n : g.nodes) {
    json jn;
    jn["concept_id"] = n.concept_id;
    jn["detected"] = n.detected;
    jn["feature"] = n.feature;
    jn["location"] = n.location;
    jn["distance"] = n.distance;
    if (n.detected) jn["box"] = {n.box.x0, n.box.y0, n.box.x1, n.box.y1};
    j["nodes"].push_back(jn);
  }
  j["edges"] = json::array();
  for (const ScgEdge& e : g.edges)
    j["edges"].push_back({{"from", e.from}, {"to", e.to}, {"spatial", e.spatial}});
  return j;
}

Scg parse_scg(const json& j) {
  Scg g;
  try {
    g.class_id = j.at("class_id").get<std::size_t>();
    g.image_id = j.value("image_id", 0u);
    for (const auto& jn : j.at("nodes")) {
      ConceptDetection n;
      n.concept_id = jn.at("concept_id").get<std::size_t>();
      n.detected = jn.at("detected").get<bool>();
      n.feature = jn.at("feature").get<std::vector<double>>();
      n.location = jn.at("location").get<std::array<double, 2>>();
      n.distance = jn.at("distance").get<double>();
      if (jn.contains("box")) {
        auto b = jn.at("box").get<std::array<int, 4>>();
        n.box = world::Box{b[0], b[1], b[2], b[3]};
      }
      g.nodes.push_back(std::move(n));
    }
    for (const auto& je : j.at("edges")) {
      ScgEdge e;
      e.from = je.at("from").get<std::size_t>();
      e.to = je.at("to").get<std::size_t>();
      e.spatial = je.at("spatial").get<std::array<double, 4>>();
      g.edges.push_back(e);
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("scg: ") + e.what());
  }
  const std::size_t n = g.nodes.size();
  for (std::size_t i = 0; i < n; ++i)
    if (g.nodes[i].concept_id != i)
      throw SchemaError("scg: nodes must be in concept-id order (node " + std::to_string(i) +
                        " has concept_id " + std::to_string(g.nodes[i].concept_id) + ")");
  // Full connectivity: every ordered pair exactly once.
  std::vector<std::vector<int>> seen(n, std::vector<int>(n, 0));
  for (const ScgEdge& e : g.edges) {
    if (e.from >= n || e.to >= n || e.from == e.to)
      throw SchemaError("scg: edge (" + std::to_string(e.from) + ", " + std::to_string(e.to) +
                        ") is invalid for " + std::to_string(n) + " nodes");
    if (seen[e.from][e.to]++)
      throw SchemaError("scg: duplicate edge (" + std::to_string(e.from) + ", " +
                        std::to_string(e.to) + ")");
  }
  for (std::size_t jdx = 0; jdx < n; ++jdx)
    for (std::size_t idx = 0; idx < n; ++idx)
      if (jdx != idx && !seen[jdx][idx])
        throw SchemaError("scg: missing edge (" + std::to_string(jdx) + ", " +
                          std::to_string(idx) + ")");
  for (const ScgEdge& e : g.edges) {
    const auto& lj = g.nodes[e.from].location;
    const auto& li = g.nodes[e.to].location;
    if (e.spatial[0] != lj[0] || e.spatial[1] != lj[1] || e.spatial[2] != li[0] ||
        e.spatial[3] != li[1])
      throw SchemaError("scg: edge (" + std::to_string(e.from) + ", " + std::to_string(e.to) +
                        ") spatial feature disagrees with endpoint locations");
  }
  // Canonical lexicographic edge order.
  std::sort(g.edges.begin(), g.edges.end(), [](const ScgEdge& a, const ScgEdge& b) {
    return a.from != b.from ? a.from < b.from : a.to < b.to;
  });
  return g;
}

}  // namespace vrx::scg
