#pragma once

// Dynamic relation-attentive GNN.
//
// Per layer every relation gets its own dynamic multi-head attention over the
// relation's neighbors, a self-transformation MLP adds one more candidate
// representation, and a second attention mixes the m+1 candidates per node.
// A third attention mixes the representations of all layers, scored against
// the raw input features, before the output MLP.

#include "drag/diff.hpp"
#include "drag/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace drag::model {

using diff::Index;
using diff::IndexList;
using diff::Matrix;
using diff::Tape;
using diff::Tensor;
using diff::Var;

enum class Activation { Elu, LeakyRelu };

enum class AblationMode { Full, NoRelTypes, NoLayerAgg, SingleLayer };

std::string mode_name(AblationMode mode);
AblationMode parse_mode(const std::string& name);
std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct HyperParams {
  Index layers = 2;  // L
  Index hidden = 64;
  Index heads_alpha = 2;
  Index heads_beta = 2;
  Index heads_gamma = 2;
  Activation activation = Activation::Elu;
  double score_slope = 0.2;  // LeakyReLU inside every attention score
  // Run relation blocks for l = 0..L (L+1 blocks) instead of l = 0..L-1.
  bool literal_blocks = false;

  void validate() const;
  bool operator==(const HyperParams&) const = default;
};

/// Two affine maps with the activation between: y = act(x W1ᵀ + b1) W2ᵀ + b2.
struct Mlp {
  Tensor w1, b1, w2, b2;
};

/// One attention head: value projection P, score map W over [query ‖ key],
/// and score vector a (stored as a 1×d′ row).
struct AttentionHead {
  Tensor projection;
  Tensor score_weight;
  Tensor score_vector;
};

struct ParamRef {
  std::string name;
  Tensor* tensor;
  bool decayed;  // weights and score vectors; biases are not decayed
};

struct DragParams {
  HyperParams hp;
  Index num_relations = 0;
  Index feature_dim = 0;

  Mlp input_mlp;
  std::vector<std::vector<std::vector<AttentionHead>>> relation_heads;  // [layer][relation][head]
  std::vector<Mlp> self_mlp;                                          // [layer]
  std::vector<std::vector<AttentionHead>> relation_agg_heads;          // [layer][head]
  std::vector<AttentionHead> layer_agg_heads;                          // [head]
  Mlp output_mlp;

  /// Parameter blocks allocated per stage; always L + 1 (l = 0..L).
  Index blocks() const { return static_cast<Index>(self_mlp.size()); }

  /// Every tensor with a stable dotted name, in a fixed canonical order.
  std::vector<ParamRef> tensors();
  std::vector<diff::NamedTensor> named_tensors();
  void zero_grad();
};

/// Glorot-uniform weights and score vectors, zero biases; deterministic in seed.
DragParams init_params(const HyperParams& hp, Index num_relations, Index feature_dim, std::uint64_t seed);

/// Edge index lists of one relation, in neighbor-list order: entry e
/// connects target node target[e] to neighbor source[e].
struct EdgeIndex {
  IndexList target;
  IndexList source;
  bool covers_all = false;  // every node has at least one neighbor
};

EdgeIndex make_edge_index(const graph::Adjacency& adj, Index num_nodes);

/// Graph-derived index structures for one ablation mode, built once and
/// reused by every forward pass.
class PreparedGraph {
 public:
  PreparedGraph(const graph::MultiRelationGraph& g, AblationMode mode = AblationMode::Full);

  AblationMode mode() const { return mode_; }
  Index num_nodes() const { return graph_.num_nodes(); }
  Index num_relations() const { return graph_.num_relations(); }
  const graph::MultiRelationGraph& graph() const { return graph_; }
  const EdgeIndex& relation(Index k) const { return edges_.at(static_cast<std::size_t>(k)); }

 private:
  AblationMode mode_;
  graph::MultiRelationGraph graph_;
  std::vector<EdgeIndex> edges_;
};

/// Puts parameters on a tape, either as trainable leaves or as constants.
struct Binder {
  Tape& tape;
  bool trainable = true;
  Var operator()(Tensor& t) const { return trainable ? tape.parameter(t) : tape.constant(t.value); }
};

struct EdgeAttention {
  IndexList target;
  IndexList source;
  Matrix coefficients;  // entries × heads
};

struct ForwardState {
  bool cached = false;
  AblationMode mode = AblationMode::Full;
  Index num_relations = 0;           // effective relation count for the mode
  std::vector<Matrix> layer_repr;    // h⁽⁰⁾ .. h⁽ᴸ⁾ and the final representation last
  std::vector<std::vector<Matrix>> relation_repr;      // [layer][k], k = m is the self-transformation
  std::vector<std::vector<EdgeAttention>> alpha;       // [layer][relation]
  std::vector<std::vector<Matrix>> beta;               // [layer][head], nodes × (m+1)
  std::vector<Matrix> gamma;                           // [head], nodes × layers aggregated
  Matrix logits;                                       // nodes × 1
  std::vector<double> yhat;
};

// Building blocks. Each takes representations already on the tape and, when
// the coefficient pointer is non-null, stores per-head softmax weights.

/// Relation-specific representation: per head ELU(Σ_j α_ij P h_j) with
/// α = softmax over N_ik of a·LeakyReLU(W[h_i ‖ h_j]); heads concatenated.
Var relation_attention(const Binder& bind, const EdgeIndex& edges, std::vector<AttentionHead>& heads, Var h,
                       const HyperParams& hp, Matrix* alpha_out = nullptr);

Var self_transform(const Binder& bind, Mlp& mlp, Var h, const HyperParams& hp);

/// Mixes the m+1 candidate representations of each node; beta_out gets one
/// nodes × (m+1) matrix per head.
Var relation_aggregate(const Binder& bind, std::vector<AttentionHead>& heads, std::span<const Var> candidates, Var h,
                       const HyperParams& hp, std::vector<Matrix>* beta_out = nullptr);

/// Mixes layer representations, scoring each against the raw features x.
Var layer_aggregate(const Binder& bind, std::vector<AttentionHead>& heads, Var x, std::span<const Var> layers,
                    const HyperParams& hp, std::vector<Matrix>* gamma_out = nullptr);

Var apply_mlp(const Binder& bind, Mlp& mlp, Var x, const HyperParams& hp);

/// Pre-sigmoid scores of the output MLP (nodes × 1).
Var predict_logits(const Binder& bind, Mlp& output, Var final_repr, const HyperParams& hp);

/// Probabilities of fraud, sigmoid(output MLP), nodes × 1.
Var predict(const Binder& bind, Mlp& output, Var final_repr, const HyperParams& hp);

struct ForwardOptions {
  bool cache_attention = true;
  bool trainable = true;
};

/// Records the full pipeline on the tape and returns ŷ (nodes × 1). When state
/// is non-null it receives representations and attention caches.
Var forward_on_tape(Tape& tape, const PreparedGraph& g, DragParams& params, const ForwardOptions& options,
                    ForwardState* state = nullptr);

/// Largest |Σ coefficients − 1| over every cached softmax group (α per node
/// and relation, β per node, γ per node, for every head and layer).
double normalization_error(const ForwardState& state);

/// Evaluation forward on a private tape; parameters enter as constants.
ForwardState forward(const PreparedGraph& g, DragParams& params, bool cache_attention = true);

struct LossOptions {
  double epsilon = 1e-12;
  // Only −Σ y log ŷ, without the normal-class term. Kept for comparison; it
  // is minimized by predicting fraud everywhere.
  bool positive_term_only = false;
};

/// Summed binary cross-entropy over the batch. Probabilities are clamped into
/// [ε, 1−ε]; clamped_out receives the number of clamped entries.
Var bce_loss(Var yhat, std::span<const int> labels, std::span<const Index> batch, const LossOptions& options = {},
             std::size_t* clamped_out = nullptr);

enum class AttentionKind { Alpha, Beta, Gamma };
AttentionKind parse_attention_kind(const std::string& name);

/// CSV dump of cached coefficients. Columns:
///   beta/gamma: node_id,layer,relation_or_layer_index,head,coefficient
///   alpha:      node_id,layer,relation_or_layer_index,neighbor_id,head,coefficient
/// For gamma the layer column holds the index of the aggregated layer
/// (number of layer representations).
std::string export_attention(const ForwardState& state, AttentionKind which);

/// Flat binary container: "DRAGCKPT", u32 version, u64 header length, JSON
/// header, u64 tensor count, then per tensor u32 name length, name, u64 rows,
/// u64 cols and rows·cols little-endian doubles in row-major order.
void save_checkpoint(const std::filesystem::path& path, DragParams& params, const std::string& metadata_json = "{}");

struct Checkpoint {
  DragParams params;
  std::string metadata_json;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace drag::model
