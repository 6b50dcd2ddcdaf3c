#pragma once

#include <string>
#include <vector>

#include "vrx/scg/scg.hpp"
#include "vrx/tensor/ops.hpp"

namespace vrx::grn {

struct GrnConfig {
  std::size_t n_classes = 3;
  std::size_t concepts_per_class = 4;  // N
  // Per-layer dims; length = layer count + 1.
  std::vector<std::size_t> node_dims = {64, 64, 32, 32};
  std::vector<std::size_t> edge_dims = {4, 5, 5, 5};
  // Concatenate edge features into the aggregation message (the full update
  // rule). When false, falls back to the plain shared-transform aggregation
  // for ablation.
  bool edge_concat = true;

  std::size_t layer_count() const { return node_dims.empty() ? 0 : node_dims.size() - 1; }
  std::size_t edge_pairs() const { return concepts_per_class * (concepts_per_class - 1); }
  std::size_t per_hypothesis_dim() const {
    return concepts_per_class * node_dims.back() + edge_pairs() * edge_dims.back();
  }
  std::size_t embedding_input_dim() const { return n_classes * per_hypothesis_dim(); }
  void validate() const;
};

struct GrnLayer {
  ad::Tensor w1, w2;  // [node_in, node_out]
  ad::Tensor w3;      // [node_out + edge_in, node_out]
  ad::Tensor w4;      // [edge_in, edge_out]
  ad::BatchNorm bn;   // over node_out features
};

// Student network: a shared GraphConv stack whose only class-specific
// parameters are the per-class aggregation matrices, plus one linear fusion
// layer mapping all hypothesis embeddings to class logits.
class GrnModel {
 public:
  GrnModel() = default;
  GrnModel(GrnConfig cfg, std::uint64_t seed);

  const GrnConfig& config() const { return cfg_; }
  std::vector<GrnLayer>& layers() { return layers_; }
  const std::vector<GrnLayer>& layers() const { return layers_; }

  // e^c as an [N, N] tensor; entry (j, i) scales the j -> i message for
  // class c. The diagonal is unused.
  ad::Tensor& edge_weights(std::size_t class_id);
  const ad::Tensor& edge_weights(std::size_t class_id) const;
  // Raw learned scalars, row = start node, column = end node, zero diagonal.
  std::vector<std::vector<double>> export_edge_weights(std::size_t class_id) const;

  ad::Tensor& embedding_weight() { return emb_w_; }
  ad::Tensor& embedding_bias() { return emb_b_; }
  const ad::Tensor& embedding_weight() const { return emb_w_; }
  const ad::Tensor& embedding_bias() const { return emb_b_; }

  std::vector<ad::Tensor> parameters();

  void save(const std::string& dir, const std::vector<std::string>& bank_hashes = {}) const;
  static GrnModel load(const std::string& dir);

 private:
  GrnConfig cfg_;
  std::vector<GrnLayer> layers_;
  std::vector<ad::Tensor> class_edge_weights_;  // per class, [N, N]
  ad::Tensor emb_w_;                            // [n * per_hyp, n]
  ad::Tensor emb_b_;                            // [n]
};

// Numeric graph inputs for a batch of images: per class and node slot a
// [B, D] feature matrix, per class and ordered pair a [B, 4] spatial matrix.
struct GraphBatch {
  std::size_t batch = 0;
  std::vector<std::vector<ad::Tensor>> node_feats;  // [class][slot]
  std::vector<std::vector<ad::Tensor>> edge_feats;  // [class][pair]
};

GraphBatch make_graph_batch(const std::vector<const scg::HypothesisSet*>& sets,
                            const GrnConfig& cfg);

struct ForwardResult {
  std::vector<ad::Tensor> embeddings;  // per class, [B, per_hypothesis_dim]
  ad::Tensor logits;                   // [B, n_classes]
};

// One GraphConv layer on a single class hypothesis: node update, ReLU,
// shared batch norm over all node rows, plus the linear edge update.
struct LayerIo {
  std::vector<ad::Tensor> nodes;  // per slot [B, d]
  std::vector<ad::Tensor> edges;  // per pair [B, e]
};
LayerIo graph_conv_layer(const LayerIo& in, GrnLayer& layer, const ad::Tensor& e_class,
                         const GrnConfig& cfg, bool training, ad::Tape* tape);

// Full forward: each class hypothesis through the shared stack equipped with
// its own aggregation weights, embeddings concatenated in class order, one
// linear fusion to logits.
ForwardResult grn_forward(GrnModel& model, const GraphBatch& batch, bool training,
                          ad::Tape* tape);

}  // namespace vrx::grn
