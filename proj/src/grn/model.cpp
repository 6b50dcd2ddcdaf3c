#include "vrx/grn/grn.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vrx/tensor/io.hpp"

namespace vrx::grn {

using ad::Tape;
using ad::Tensor;
namespace fs = std::filesystem;

void GrnConfig::validate() const {
  if (n_classes == 0) throw ConfigError("grn: n_classes must be positive");
  if (concepts_per_class < 2) throw ConfigError("grn: needs at least 2 concepts per class");
  if (node_dims.size() < 2) throw ConfigError("grn: node_dims must list input and output dims");
  if (edge_dims.size() != node_dims.size())
    throw ConfigError("grn: edge_dims length (" + std::to_string(edge_dims.size()) +
                      ") must match node_dims length (" + std::to_string(node_dims.size()) + ")");
  for (std::size_t d : node_dims)
    if (d == 0) throw ConfigError("grn: zero node dim");
  for (std::size_t d : edge_dims)
    if (d == 0) throw ConfigError("grn: zero edge dim");
}

GrnModel::GrnModel(GrnConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(derive_seed(seed, 0x62d));
  const std::size_t L = cfg_.layer_count();
  layers_.resize(L);
  for (std::size_t k = 0; k < L; ++k) {
    const std::size_t nin = cfg_.node_dims[k], nout = cfg_.node_dims[k + 1];
    const std::size_t ein = cfg_.edge_dims[k], eout = cfg_.edge_dims[k + 1];
    auto init = [&](std::size_t rows, std::size_t cols) {
      const double stddev = std::sqrt(2.0 / static_cast<double>(rows));
      return Tensor::randn(Shape{rows, cols}, rng, stddev).set_requires_grad(true);
    };
    layers_[k].w1 = init(nin, nout);
    layers_[k].w2 = init(nin, nout);
    layers_[k].w3 = init(nout + ein, nout);
    layers_[k].w4 = init(ein, eout);
    layers_[k].bn = ad::BatchNorm(nout);
  }
  const std::size_t N = cfg_.concepts_per_class;
  for (std::size_t c = 0; c < cfg_.n_classes; ++c)
    class_edge_weights_.push_back(Tensor(Shape{N, N}, 1.0, true));
  const std::size_t in = cfg_.embedding_input_dim();
  const double stddev = std::sqrt(1.0 / static_cast<double>(in));
  emb_w_ = Tensor::randn(Shape{in, cfg_.n_classes}, rng, stddev).set_requires_grad(true);
  emb_b_ = Tensor(Shape{cfg_.n_classes}, 0.0, true);
}

Tensor& GrnModel::edge_weights(std::size_t class_id) {
  if (class_id >= class_edge_weights_.size())
    throw Error("grn: unknown class id " + std::to_string(class_id));
  return class_edge_weights_[class_id];
}

const Tensor& GrnModel::edge_weights(std::size_t class_id) const {
  if (class_id >= class_edge_weights_.size())
    throw Error("grn: unknown class id " + std::to_string(class_id));
  return class_edge_weights_[class_id];
}

std::vector<std::vector<double>> GrnModel::export_edge_weights(std::size_t class_id) const {
  const Tensor& e = edge_weights(class_id);
  const std::size_t N = cfg_.concepts_per_class;
  std::vector<std::vector<double>> m(N, std::vector<double>(N, 0.0));
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t i = 0; i < N; ++i)
      if (i != j) m[j][i] = e.data()[j * N + i];
  return m;
}

std::vector<Tensor> GrnModel::parameters() {
  std::vector<Tensor> ps;
  for (GrnLayer& layer : layers_) {
    ps.push_back(layer.w1);
    ps.push_back(layer.w2);
    ps.push_back(layer.w3);
    ps.push_back(layer.w4);
    ps.push_back(layer.bn.gamma);
    ps.push_back(layer.bn.beta);
  }
  for (Tensor& e : class_edge_weights_) ps.push_back(e);
  ps.push_back(emb_w_);
  ps.push_back(emb_b_);
  return ps;
}

GraphBatch make_graph_batch(const std::vector<const scg::HypothesisSet*>& sets,
                            const GrnConfig& cfg) {
  if (sets.empty()) throw Error("make_graph_batch: empty batch");
  const std::size_t B = sets.size();
  const std::size_t n = cfg.n_classes, N = cfg.concepts_per_class;
  const std::size_t D = cfg.node_dims.front(), E = cfg.edge_dims.front();
  if (E != 4) throw ConfigError("make_graph_batch: edge input dim must be 4 (two endpoints)");

  GraphBatch gb;
  gb.batch = B;
  gb.node_feats.assign(n, {});
  gb.edge_feats.assign(n, {});
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t s = 0; s < N; ++s) gb.node_feats[c].push_back(Tensor(Shape{B, D}));
    for (std::size_t p = 0; p < cfg.edge_pairs(); ++p)
      gb.edge_feats[c].push_back(Tensor(Shape{B, E}));
  }
  for (std::size_t b = 0; b < B; ++b) {
    const scg::HypothesisSet& hs = *sets[b];
    if (hs.size() != n)
      throw ShapeError("make_graph_batch: hypothesis set has " + std::to_string(hs.size()) +
                       " hypotheses, config expects " + std::to_string(n));
    for (std::size_t c = 0; c < n; ++c) {
      const scg::Scg& g = hs.hypotheses[c];
      if (g.n_nodes() != N)
        throw ShapeError("make_graph_batch: hypothesis " + std::to_string(c) + " has " +
                         std::to_string(g.n_nodes()) + " nodes, config expects " +
                         std::to_string(N));
      if (g.edges.size() != cfg.edge_pairs())
        throw ShapeError("make_graph_batch: hypothesis " + std::to_string(c) +
                         " edge count mismatch");
      for (std::size_t s = 0; s < N; ++s) {
        if (g.nodes[s].feature.size() != D)
          throw ShapeError("make_graph_batch: node feature dim " +
                           std::to_string(g.nodes[s].feature.size()) + " vs config " +
                           std::to_string(D));
        std::copy(g.nodes[s].feature.begin(), g.nodes[s].feature.end(),
                  gb.node_feats[c][s].ptr() + b * D);
      }
      for (std::size_t p = 0; p < g.edges.size(); ++p)
        std::copy(g.edges[p].spatial.begin(), g.edges[p].spatial.end(),
                  gb.edge_feats[c][p].ptr() + b * E);
    }
  }
  return gb;
}

LayerIo graph_conv_layer(const LayerIo& in, GrnLayer& layer, const Tensor& e_class,
                         const GrnConfig& cfg, bool training, Tape* tape) {
  const std::size_t N = cfg.concepts_per_class;
  if (in.nodes.size() != N) throw ShapeError("graph_conv_layer: node slot count mismatch");
  if (in.edges.size() != N * (N - 1)) throw ShapeError("graph_conv_layer: edge count mismatch");

  // Pair (j, i) -> lexicographic edge index.
  auto pair_index = [N](std::size_t j, std::size_t i) { return j * (N - 1) + (i > j ? i - 1 : i); };

  // Shared transforms of every node.
  std::vector<Tensor> w1f(N), w2f(N);
  for (std::size_t s = 0; s < N; ++s) {
    w1f[s] = ad::matmul(in.nodes[s], layer.w1, tape);
    w2f[s] = ad::matmul(in.nodes[s], layer.w2, tape);
  }

  LayerIo out;
  out.nodes.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    Tensor acc = w1f[i];
    for (std::size_t j = 0; j < N; ++j) {
      if (j == i) continue;
      Tensor eji = ad::pick(e_class, j * N + i, tape);
      Tensor msg = ad::scalar_mul(w2f[j], eji, tape);
      if (cfg.edge_concat) {
        Tensor cm = ad::concat({msg, in.edges[pair_index(j, i)]}, 1, tape);
        msg = ad::matmul(cm, layer.w3, tape);
      }
      acc = ad::add(acc, msg, tape);
    }
    out.nodes[i] = ad::relu(acc, tape);
  }

  // One shared batch-norm over all node rows of this hypothesis.
  Tensor stacked = ad::concat(std::span<const Tensor>(out.nodes), 0, tape);
  Tensor normed = ad::batch_norm(stacked, layer.bn, training, tape);
  const std::size_t rows = out.nodes[0].dim(0);
  for (std::size_t s = 0; s < N; ++s) out.nodes[s] = ad::slice(normed, 0, s * rows, rows, tape);

  out.edges.resize(in.edges.size());
  for (std::size_t p = 0; p < in.edges.size(); ++p)
    out.edges[p] = ad::matmul(in.edges[p], layer.w4, tape);
  return out;
}

ForwardResult grn_forward(GrnModel& model, const GraphBatch& batch, bool training, Tape* tape) {
  const GrnConfig& cfg = model.config();
  if (batch.node_feats.size() != cfg.n_classes)
    throw ShapeError("grn_forward: batch covers " + std::to_string(batch.node_feats.size()) +
                     " classes, config expects " + std::to_string(cfg.n_classes));
  ForwardResult res;
  res.embeddings.reserve(cfg.n_classes);
  for (std::size_t c = 0; c < cfg.n_classes; ++c) {
    LayerIo io;
    io.nodes = batch.node_feats[c];
    io.edges = batch.edge_feats[c];
    for (std::size_t k = 0; k < cfg.layer_count(); ++k)
      io = graph_conv_layer(io, model.layers()[k], model.edge_weights(c), cfg, training, tape);
    // Embedding: final node features in slot order, then final edge features
    // in lexicographic pair order.
    std::vector<Tensor> parts = io.nodes;
    parts.insert(parts.end(), io.edges.begin(), io.edges.end());
    res.embeddings.push_back(ad::concat(std::span<const Tensor>(parts), 1, tape));
  }
  Tensor all = ad::concat(std::span<const Tensor>(res.embeddings), 1, tape);
  res.logits = ad::bias_add(ad::matmul(all, model.embedding_weight(), tape),
                            model.embedding_bias(), tape);
  return res;
}

void GrnModel::save(const std::string& dir, const std::vector<std::string>& bank_hashes) const {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["kind"] = "grn";
  manifest["config"] = {{"n_classes", cfg_.n_classes},
                        {"concepts_per_class", cfg_.concepts_per_class},
                        {"node_dims", cfg_.node_dims},
                        {"edge_dims", cfg_.edge_dims},
                        {"edge_concat", cfg_.edge_concat}};
  manifest["bank_hashes"] = bank_hashes;
  std::vector<std::string> files;
  auto dump = [&](const Tensor& t, const std::string& name) {
    ad::save_tensor(t, (fs::path(dir) / (name + ".tensor")).string());
    files.push_back(name);
  };
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const std::string p = "layer" + std::to_string(k) + "_";
    dump(layers_[k].w1, p + "w1");
    dump(layers_[k].w2, p + "w2");
    dump(layers_[k].w3, p + "w3");
    dump(layers_[k].w4, p + "w4");
    dump(layers_[k].bn.gamma, p + "bn_gamma");
    dump(layers_[k].bn.beta, p + "bn_beta");
    dump(Tensor::from_data(Shape{layers_[k].bn.running_mean.size()}, layers_[k].bn.running_mean),
         p + "bn_mean");
    dump(Tensor::from_data(Shape{layers_[k].bn.running_var.size()}, layers_[k].bn.running_var),
         p + "bn_var");
  }
  for (std::size_t c = 0; c < class_edge_weights_.size(); ++c)
    dump(class_edge_weights_[c], "e_class" + std::to_string(c));
  dump(emb_w_, "emb_w");
  dump(emb_b_, "emb_b");
  manifest["tensors"] = files;
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << manifest.dump(2);
}

GrnModel GrnModel::load(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw Error("GrnModel::load: missing manifest.json in " + dir);
  nlohmann::json manifest;
  in >> manifest;
  if (manifest.value("kind", "") != "grn")
    throw SchemaError("GrnModel::load: manifest kind is not 'grn'");
  GrnConfig cfg;
  const auto& jc = manifest.at("config");
  cfg.n_classes = jc.at("n_classes").get<std::size_t>();
  cfg.concepts_per_class = jc.at("concepts_per_class").get<std::size_t>();
  cfg.node_dims = jc.at("node_dims").get<std::vector<std::size_t>>();
  cfg.edge_dims = jc.at("edge_dims").get<std::vector<std::size_t>>();
  cfg.edge_concat = jc.at("edge_concat").get<bool>();
  cfg.validate();

  GrnModel m;
  m.cfg_ = cfg;
  auto grab = [&](const std::string& name, bool trainable = true) {
    Tensor v = ad::load_tensor((fs::path(dir) / (name + ".tensor")).string());
    v.set_requires_grad(trainable);
    return v;
  };
  m.layers_.resize(cfg.layer_count());
  for (std::size_t k = 0; k < cfg.layer_count(); ++k) {
    const std::string p = "layer" + std::to_string(k) + "_";
    m.layers_[k].w1 = grab(p + "w1");
    m.layers_[k].w2 = grab(p + "w2");
    m.layers_[k].w3 = grab(p + "w3");
    m.layers_[k].w4 = grab(p + "w4");
    m.layers_[k].bn = ad::BatchNorm(cfg.node_dims[k + 1]);
    m.layers_[k].bn.gamma = grab(p + "bn_gamma");
    m.layers_[k].bn.beta = grab(p + "bn_beta");
    m.layers_[k].bn.running_mean = grab(p + "bn_mean", false).data();
    m.layers_[k].bn.running_var = grab(p + "bn_var", false).data();
  }
  for (std::size_t c = 0; c < cfg.n_classes; ++c)
    m.class_edge_weights_.push_back(grab("e_class" + std::to_string(c)));
  m.emb_w_ = grab("emb_w");
  m.emb_b_ = grab("emb_b");
  return m;
}

}  // namespace vrx::grn
