#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "vrx/kernels/kernels.hpp"
#include "vrx/vdi/vdi.hpp"

namespace vrx::vdi {

using ad::Tape;
using ad::Tensor;
using nlohmann::json;

std::vector<std::vector<double>> contribution_weights(const grn::ForwardResult& fwd,
                                                      std::size_t class_index, Tape& tape) {
  if (fwd.logits.dim(0) != 1)
    throw Error("contribution_weights: expects a single-image forward pass");
  if (class_index >= fwd.logits.dim(1))
    throw Error("contribution_weights: class index out of range");
  Tensor target = ad::pick(fwd.logits, class_index, &tape);
  tape.backward(target);
  std::vector<std::vector<double>> alpha;
  alpha.reserve(fwd.embeddings.size());
  for (const Tensor& emb : fwd.embeddings) alpha.push_back(emb.grad());
  return alpha;
}

std::vector<HypothesisScores> contribution_scores(
    const std::vector<std::vector<double>>& alpha, const grn::ForwardResult& fwd,
    const grn::GrnConfig& cfg) {
  if (alpha.size() != fwd.embeddings.size())
    throw Error("contribution_scores: alpha/embedding count mismatch");
  const auto& kt = kern::active();
  const std::size_t N = cfg.concepts_per_class;
  const std::size_t node_out = cfg.node_dims.back(), edge_out = cfg.edge_dims.back();

  std::vector<HypothesisScores> out;
  out.reserve(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const std::vector<double>& a = alpha[i];
    const std::vector<double>& emb = fwd.embeddings[i].data();
    if (a.size() != emb.size() || emb.size() != cfg.per_hypothesis_dim())
      throw ShapeError("contribution_scores: embedding layout mismatch");
    HypothesisScores hs;
    hs.hypothesis_class = i;
    hs.score = kt.dot(a.data(), emb.data(), emb.size());
    hs.node_scores.resize(N);
    for (std::size_t s = 0; s < N; ++s)
      hs.node_scores[s] = kt.dot(a.data() + s * node_out, emb.data() + s * node_out, node_out);
    const std::size_t edge_base = N * node_out;
    hs.edge_scores.resize(cfg.edge_pairs());
    for (std::size_t p = 0; p < cfg.edge_pairs(); ++p)
      hs.edge_scores[p] = kt.dot(a.data() + edge_base + p * edge_out,
                                 emb.data() + edge_base + p * edge_out, edge_out);
    out.push_back(std::move(hs));
  }
  return out;
}

ContributionScale::Bucket ContributionScale::bucket(double v) const {
  if (v == 0.0) return Bucket::Neutral;
  if (v > 0.0) {
    if (v <= weak) return Bucket::WeakPositive;
    if (v <= strong) return Bucket::Positive;
    return Bucket::StrongPositive;
  }
  if (v >= -weak) return Bucket::WeakNegative;
  if (v >= -strong) return Bucket::Negative;
  return Bucket::StrongNegative;
}

const char* ContributionScale::bucket_name(Bucket b) {
  switch (b) {
    case Bucket::StrongNegative: return "strong-negative";
    case Bucket::Negative: return "negative";
    case Bucket::WeakNegative: return "weak-negative";
    case Bucket::Neutral: return "neutral";
    case Bucket::WeakPositive: return "weak-positive";
    case Bucket::Positive: return "positive";
    case Bucket::StrongPositive: return "strong-positive";
  }
  return "neutral";
}

const char* ContributionScale::bucket_color(Bucket b) {
  switch (b) {
    case Bucket::StrongNegative: return "#c62828";
    case Bucket::Negative: return "#e8833a";
    case Bucket::WeakNegative: return "#f3cf8a";
    case Bucket::Neutral: return "#bdbdbd";
    case Bucket::WeakPositive: return "#a9c4f5";
    case Bucket::Positive: return "#5b8def";
    case Bucket::StrongPositive: return "#1f4fd8";
  }
  return "#bdbdbd";
}

Explanation explain_hypotheses(const scg::HypothesisSet& hs, grn::GrnModel& model,
                               const std::vector<double>& teacher_probs, std::size_t image_id) {
  const grn::GrnConfig& cfg = model.config();
  if (hs.size() != cfg.n_classes)
    throw Error("explain: hypothesis set size " + std::to_string(hs.size()) +
                " vs model classes " + std::to_string(cfg.n_classes));

  Explanation e;
  e.image_id = image_id;
  e.teacher_prediction = teacher_probs;
  for (const scg::Scg& g : hs.hypotheses) e.class_ids.push_back(g.class_id);

  e.no_concepts_detected = true;
  for (const scg::Scg& g : hs.hypotheses) {
    std::vector<NodeMeta> metas;
    for (const scg::ConceptDetection& d : g.nodes) {
      if (d.detected) e.no_concepts_detected = false;
      metas.push_back({d.concept_id, d.detected, d.box, d.location, d.distance});
    }
    e.detections.push_back(std::move(metas));
  }

  std::vector<const scg::HypothesisSet*> one{&hs};
  const double* bias = model.embedding_bias().ptr();

  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    // Fresh forward per target class; the tape is consumed by backward.
    grn::GraphBatch gb = grn::make_graph_batch(one, cfg);
    Tape tape;
    grn::ForwardResult fwd = grn::grn_forward(model, gb, /*training=*/false, &tape);
    if (c == 0) {
      Tensor sp = ad::softmax(fwd.logits, nullptr);
      e.student_prediction = sp.data();
    }
    auto alpha = contribution_weights(fwd, c, tape);
    ClassSection sec;
    sec.target_class = c;
    sec.y = fwd.logits.data()[c];
    sec.bias = bias[c];
    sec.hypotheses = contribution_scores(alpha, fwd, cfg);

    // Linear-decomposition identity: y^c = b_c + sum_i s_i.
    double total = sec.bias;
    for (const HypothesisScores& h : sec.hypotheses) {
      total += h.score;
      double sliced = 0.0;
      for (double v : h.node_scores) sliced += v;
      for (double v : h.edge_scores) sliced += v;
      if (std::abs(sliced - h.score) > 1e-8)
        throw Error("explain: slice additivity violated for hypothesis " +
                    std::to_string(h.hypothesis_class) + " (|" + std::to_string(sliced) + " - " +
                    std::to_string(h.score) + "| > 1e-8)");
    }
    if (std::abs(total - sec.y) > 1e-8)
      throw Error("explain: contribution identity violated for class " + std::to_string(c) +
                  " (sum=" + std::to_string(total) + ", y=" + std::to_string(sec.y) + ")");
    e.sections.push_back(std::move(sec));
  }

  e.teacher_top1 = static_cast<std::size_t>(
      std::max_element(e.teacher_prediction.begin(), e.teacher_prediction.end()) -
      e.teacher_prediction.begin());
  e.student_top1 = static_cast<std::size_t>(
      std::max_element(e.student_prediction.begin(), e.student_prediction.end()) -
      e.student_prediction.begin());

  double norm = 0.0;
  for (const ClassSection& sec : e.sections)
    for (const HypothesisScores& h : sec.hypotheses) {
      norm = std::max(norm, std::abs(h.score));
      for (double v : h.node_scores) norm = std::max(norm, std::abs(v));
      for (double v : h.edge_scores) norm = std::max(norm, std::abs(v));
    }
  e.normalization = norm > 0.0 ? norm : 1.0;
  return e;
}

Explanation explain(const ad::Tensor& image, grn::GrnModel& model, const world::Teacher& teacher,
                    const std::vector<vce::ConceptBank>& banks, const scg::DetectConfig& det_cfg,
                    std::size_t image_id) {
  scg::HypothesisSet hs = scg::build_hypotheses(image, banks, teacher, det_cfg, image_id);
  std::vector<std::size_t> class_ids;
  for (const auto& b : banks) class_ids.push_back(b.class_id);
  auto probs = grn::teacher_probs_restricted(teacher.logits_for(image), class_ids);
  Explanation e = explain_hypotheses(hs, model, probs, image_id);
  e.image = image;
  return e;
}

json explanation_to_json(const Explanation& e) {
  json j;
  j["version"] = e.version;
  j["image_id"] = e.image_id;
  j["class_ids"] = e.class_ids;
  j["teacher_prediction"] = e.teacher_prediction;
  j["student_prediction"] = e.student_prediction;
  j["teacher_top1"] = e.teacher_top1;
  j["student_top1"] = e.student_top1;
  j["no_concepts_detected"] = e.no_concepts_detected;
  j["normalization"] = e.normalization;
  j["detections"] = json::array();
  for (const auto& metas : e.detections) {
    json jm = json::array();
    for (const NodeMeta& m : metas) {
      json jn;
      jn["concept_id"] = m.concept_id;
      jn["detected"] = m.detected;
      jn["location"] = m.location;
      jn["distance"] = m.distance;
      if (m.detected) jn["box"] = {m.box.x0, m.box.y0, m.box.x1, m.box.y1};
      jm.push_back(jn);
    }
    j["detections"].push_back(jm);
  }
  j["sections"] = json::array();
  for (const ClassSection& sec : e.sections) {
    json js;
    js["target_class"] = sec.target_class;
    js["y"] = sec.y;
    js["bias"] = sec.bias;
    js["hypotheses"] = json::array();
    for (const HypothesisScores& h : sec.hypotheses) {
      json jh;
      jh["hypothesis_class"] = h.hypothesis_class;
      jh["score"] = h.score;
      jh["node_scores"] = h.node_scores;
      jh["edge_scores"] = h.edge_scores;
      auto normed = [&](const std::vector<double>& v) {
        std::vector<double> out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / e.normalization;
        return out;
      };
      jh["score_norm"] = h.score / e.normalization;
      jh["node_scores_norm"] = normed(h.node_scores);
      jh["edge_scores_norm"] = normed(h.edge_scores);
      js["hypotheses"].push_back(jh);
    }
    j["sections"].push_back(js);
  }
  return j;
}

Explanation explanation_from_json(const json& j) {
  Explanation e;
  try {
    e.version = j.at("version").get<int>();
    e.image_id = j.at("image_id").get<std::size_t>();
    e.class_ids = j.at("class_ids").get<std::vector<std::size_t>>();
    e.teacher_prediction = j.at("teacher_prediction").get<std::vector<double>>();
    e.student_prediction = j.at("student_prediction").get<std::vector<double>>();
    e.teacher_top1 = j.at("teacher_top1").get<std::size_t>();
    e.student_top1 = j.at("student_top1").get<std::size_t>();
    e.no_concepts_detected = j.at("no_concepts_detected").get<bool>();
    e.normalization = j.at("normalization").get<double>();
    for (const auto& jm : j.at("detections")) {
      std::vector<NodeMeta> metas;
      for (const auto& jn : jm) {
        NodeMeta m;
        m.concept_id = jn.at("concept_id").get<std::size_t>();
        m.detected = jn.at("detected").get<bool>();
        m.location = jn.at("location").get<std::array<double, 2>>();
        m.distance = jn.at("distance").get<double>();
        if (jn.contains("box")) {
          auto b = jn.at("box").get<std::array<int, 4>>();
          m.box = world::Box{b[0], b[1], b[2], b[3]};
        }
        metas.push_back(m);
      }
      e.detections.push_back(std::move(metas));
    }
    for (const auto& js : j.at("sections")) {
      ClassSection sec;
      sec.target_class = js.at("target_class").get<std::size_t>();
      sec.y = js.at("y").get<double>();
      sec.bias = js.at("bias").get<double>();
      for (const auto& jh : js.at("hypotheses")) {
        HypothesisScores h;
        h.hypothesis_class = jh.at("hypothesis_class").get<std::size_t>();
        h.score = jh.at("score").get<double>();
        h.node_scores = jh.at("node_scores").get<std::vector<double>>();
        h.edge_scores = jh.at("edge_scores").get<std::vector<double>>();
        sec.hypotheses.push_back(std::move(h));
      }
      e.sections.push_back(std::move(sec));
    }
  } catch (const json::exception& ex) {
    throw SchemaError(std::string("explanation: ") + ex.what());
  }
  return e;
}

}  // namespace vrx::vdi
