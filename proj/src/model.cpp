#include "drag/model.hpp"

#include "drag/error.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>

namespace drag::model {

namespace {

Var activate(Var x, const HyperParams& hp) {
  return hp.activation == Activation::Elu ? diff::elu(x) : diff::leaky_relu(x, 0.2);
}

Mlp make_mlp(Index in, Index hidden, Index out) {
  return Mlp{Tensor(Matrix::Zero(hidden, in)), Tensor(Matrix::Zero(1, hidden)), Tensor(Matrix::Zero(out, hidden)),
             Tensor(Matrix::Zero(1, out))};
}

AttentionHead make_head(Index head_width, Index hidden, Index query_dim) {
  return AttentionHead{Tensor(Matrix::Zero(head_width, hidden)), Tensor(Matrix::Zero(hidden, query_dim + hidden)),
                       Tensor(Matrix::Zero(1, hidden))};
}

std::vector<AttentionHead> make_heads(Index count, Index hidden, Index query_dim) {
  std::vector<AttentionHead> heads;
  for (Index t = 0; t < count; ++t) heads.push_back(make_head(hidden / count, hidden, query_dim));
  return heads;
}

void push_mlp(std::vector<ParamRef>& out, const std::string& prefix, Mlp& mlp) {
  out.push_back({prefix + ".w1", &mlp.w1, true});
  out.push_back({prefix + ".b1", &mlp.b1, false});
  out.push_back({prefix + ".w2", &mlp.w2, true});
  out.push_back({prefix + ".b2", &mlp.b2, false});
}

void push_head(std::vector<ParamRef>& out, const std::string& prefix, AttentionHead& head) {
  out.push_back({prefix + ".P", &head.projection, true});
  out.push_back({prefix + ".W", &head.score_weight, true});
  out.push_back({prefix + ".a", &head.score_vector, true});
}

// Shared multi-head dynamic attention. Pair e attends from query row
// query[e] of query_repr to key row key[e] of key_repr; softmax groups are the
// query rows. Returns act(concat over heads of Σ_e coeff_e · P key_repr[key_e]).
Var attend(const Binder& bind, std::vector<AttentionHead>& heads, Var query_repr, Var key_repr,
           const IndexList& query, const IndexList& key, Index num_queries, const HyperParams& hp,
           std::vector<Matrix>* coeff_out) {
  const Index qdim = query_repr.cols();
  std::vector<Var> outputs;
  outputs.reserve(heads.size());
  for (auto& head : heads) {
    Var w = bind(head.score_weight);
    Var a = bind(head.score_vector);
    Var p = bind(head.projection);
    if (w.cols() != qdim + key_repr.cols()) {
      throw ShapeError("attention score weight has " + std::to_string(w.cols()) + " columns, expected " +
                       std::to_string(qdim + key_repr.cols()));
    }
    Var left = diff::matmul_bt(query_repr, diff::slice_cols(w, 0, qdim));
    Var right = diff::matmul_bt(key_repr, diff::slice_cols(w, qdim, key_repr.cols()));
    Var scores = diff::pair_scores(left, right, a, query, key, hp.score_slope);
    Var coeff = diff::segment_softmax(scores, query, num_queries);
    Var values = diff::matmul_bt(key_repr, p);
    outputs.push_back(diff::segment_weighted_sum(coeff, values, query, num_queries, key));
    if (coeff_out != nullptr) coeff_out->push_back(coeff.value());
  }
  return activate(diff::concat_cols(outputs), hp);
}

// Candidate c of node i sits at row c·n + i of the stacked matrix.
std::pair<IndexList, IndexList> stacked_lists(Index n, Index candidates) {
  std::vector<Index> owner(static_cast<std::size_t>(n * candidates));
  std::vector<Index> row(owner.size());
  for (Index r = 0; r < n * candidates; ++r) {
    owner[r] = r % n;
    row[r] = r;
  }
  return {diff::make_index_list(std::move(owner)), diff::make_index_list(std::move(row))};
}

Var attend_candidates(const Binder& bind, std::vector<AttentionHead>& heads, Var query_repr,
                      std::span<const Var> candidates, const HyperParams& hp, std::vector<Matrix>* coeff_out) {
  if (candidates.empty()) throw ShapeError("attention over an empty candidate set");
  const Index n = query_repr.rows();
  const Index count = static_cast<Index>(candidates.size());
  for (const Var& c : candidates) {
    if (c.rows() != n) {
      throw ShapeError("candidate representation has " + std::to_string(c.rows()) + " rows, expected " +
                       std::to_string(n));
    }
  }
  Var stacked = diff::concat_rows(candidates);
  auto [owner, row] = stacked_lists(n, count);
  std::vector<Matrix> per_head;
  Var out = attend(bind, heads, query_repr, stacked, owner, row, n, hp, coeff_out ? &per_head : nullptr);
  if (coeff_out != nullptr) {
    for (const Matrix& c : per_head) {
      Matrix grid(n, count);
      for (Index r = 0; r < n * count; ++r) grid(r % n, r / n) = c(r, 0);
      coeff_out->push_back(std::move(grid));
    }
  }
  return out;
}

}  // namespace

std::string mode_name(AblationMode mode) {
  switch (mode) {
    case AblationMode::Full: return "full";
    case AblationMode::NoRelTypes: return "no-rel-types";
    case AblationMode::NoLayerAgg: return "no-layer-agg";
    case AblationMode::SingleLayer: return "single-layer";
  }
  return "full";
}

AblationMode parse_mode(const std::string& name) {
  for (auto mode : {AblationMode::Full, AblationMode::NoRelTypes, AblationMode::NoLayerAgg, AblationMode::SingleLayer}) {
    if (name == mode_name(mode)) return mode;
  }
  throw ValidationError("unknown ablation mode `" + name +
                        "` (expected full, no-rel-types, no-layer-agg or single-layer)");
}

std::string activation_name(Activation a) { return a == Activation::Elu ? "elu" : "leaky_relu"; }

Activation parse_activation(const std::string& name) {
  if (name == "elu") return Activation::Elu;
  if (name == "leaky_relu") return Activation::LeakyRelu;
  throw ValidationError("unknown activation `" + name + "`");
}

void HyperParams::validate() const {
  if (layers < 1) throw ValidationError("layer count must be at least 1");
  if (hidden < 1) throw ValidationError("hidden width must be positive");
  for (Index heads : {heads_alpha, heads_beta, heads_gamma}) {
    if (heads < 1 || hidden % heads != 0) {
      throw ValidationError("hidden width " + std::to_string(hidden) + " is not divisible by head count " +
                            std::to_string(heads));
    }
  }
  if (!(score_slope >= 0.0)) throw ValidationError("score slope must be non-negative");
}

std::vector<ParamRef> DragParams::tensors() {
  std::vector<ParamRef> out;
  push_mlp(out, "input_mlp", input_mlp);
  for (std::size_t l = 0; l < relation_heads.size(); ++l) {
    for (std::size_t k = 0; k < relation_heads[l].size(); ++k) {
      for (std::size_t t = 0; t < relation_heads[l][k].size(); ++t) {
        push_head(out, "relation.l" + std::to_string(l) + ".r" + std::to_string(k) + ".h" + std::to_string(t),
                  relation_heads[l][k][t]);
      }
    }
    push_mlp(out, "self_mlp.l" + std::to_string(l), self_mlp[l]);
    for (std::size_t t = 0; t < relation_agg_heads[l].size(); ++t) {
      push_head(out, "relation_agg.l" + std::to_string(l) + ".h" + std::to_string(t), relation_agg_heads[l][t]);
    }
  }
  for (std::size_t t = 0; t < layer_agg_heads.size(); ++t) {
    push_head(out, "layer_agg.h" + std::to_string(t), layer_agg_heads[t]);
  }
  push_mlp(out, "output_mlp", output_mlp);
  return out;
}

std::vector<diff::NamedTensor> DragParams::named_tensors() {
  std::vector<diff::NamedTensor> out;
  for (auto& ref : tensors()) out.push_back({ref.name, ref.tensor});
  return out;
}

void DragParams::zero_grad() {
  for (auto& ref : tensors()) ref.tensor->zero_grad();
}

DragParams init_params(const HyperParams& hp, Index num_relations, Index feature_dim, std::uint64_t seed) {
  hp.validate();
  if (num_relations < 1) throw ValidationError("the model needs at least one relation");
  if (feature_dim < 1) throw ValidationError("the model needs at least one feature");
  const Index h = hp.hidden;
  DragParams p;
  p.hp = hp;
  p.num_relations = num_relations;
  p.feature_dim = feature_dim;
  p.input_mlp = make_mlp(feature_dim, h, h);
  for (Index l = 0; l <= hp.layers; ++l) {
    auto& per_relation = p.relation_heads.emplace_back();
    for (Index k = 0; k < num_relations; ++k) per_relation.push_back(make_heads(hp.heads_alpha, h, h));
    p.self_mlp.push_back(make_mlp(h, h, h));
    p.relation_agg_heads.push_back(make_heads(hp.heads_beta, h, h));
  }
  p.layer_agg_heads = make_heads(hp.heads_gamma, h, feature_dim);
  p.output_mlp = make_mlp(h, h, 1);

  std::mt19937_64 rng(seed);
  for (auto& ref : p.tensors()) {
    Matrix& v = ref.tensor->value;
    if (!ref.decayed) {
      v.setZero();
      continue;
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(v.rows() + v.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Index i = 0; i < v.size(); ++i) v.data()[i] = dist(rng);
  }
  return p;
}

EdgeIndex make_edge_index(const graph::Adjacency& adj, Index num_nodes) {
  std::vector<Index> target;
  std::vector<Index> source;
  target.reserve(adj.entry_count());
  source.reserve(adj.entry_count());
  bool covers = true;
  for (Index i = 0; i < num_nodes; ++i) {
    auto row = adj.neighbors_of(i);
    if (row.empty()) covers = false;
    for (Index j : row) {
      target.push_back(i);
      source.push_back(j);
    }
  }
  return EdgeIndex{diff::make_index_list(std::move(target)), diff::make_index_list(std::move(source)), covers};
}

PreparedGraph::PreparedGraph(const graph::MultiRelationGraph& g, AblationMode mode)
    : mode_(mode), graph_(mode == AblationMode::NoRelTypes ? graph::merge_relations(g) : g) {
  for (Index k = 0; k < graph_.num_relations(); ++k) {
    edges_.push_back(make_edge_index(graph_.relation(k), graph_.num_nodes()));
  }
}

Var relation_attention(const Binder& bind, const EdgeIndex& edges, std::vector<AttentionHead>& heads, Var h,
                       const HyperParams& hp, Matrix* alpha_out) {
  if (!edges.covers_all) {
    throw ValidationError("a node has an empty neighbor set; run add_self_loops on the graph first");
  }
  const Index n = h.rows();
  std::vector<Matrix> per_head;
  Var out = attend(bind, heads, h, h, edges.target, edges.source, n, hp, alpha_out ? &per_head : nullptr);
  if (alpha_out != nullptr) {
    *alpha_out = Matrix(static_cast<Index>(edges.target->size()), static_cast<Index>(per_head.size()));
    for (std::size_t t = 0; t < per_head.size(); ++t) alpha_out->col(static_cast<Index>(t)) = per_head[t].col(0);
  }
  return out;
}

Var apply_mlp(const Binder& bind, Mlp& mlp, Var x, const HyperParams& hp) {
  Var hidden = activate(diff::add_bias(diff::matmul_bt(x, bind(mlp.w1)), bind(mlp.b1)), hp);
  return diff::add_bias(diff::matmul_bt(hidden, bind(mlp.w2)), bind(mlp.b2));
}

Var self_transform(const Binder& bind, Mlp& mlp, Var h, const HyperParams& hp) { return apply_mlp(bind, mlp, h, hp); }

Var relation_aggregate(const Binder& bind, std::vector<AttentionHead>& heads, std::span<const Var> candidates, Var h,
                       const HyperParams& hp, std::vector<Matrix>* beta_out) {
  return attend_candidates(bind, heads, h, candidates, hp, beta_out);
}

Var layer_aggregate(const Binder& bind, std::vector<AttentionHead>& heads, Var x, std::span<const Var> layers,
                    const HyperParams& hp, std::vector<Matrix>* gamma_out) {
  return attend_candidates(bind, heads, x, layers, hp, gamma_out);
}

Var predict_logits(const Binder& bind, Mlp& output, Var final_repr, const HyperParams& hp) {
  return apply_mlp(bind, output, final_repr, hp);
}

Var predict(const Binder& bind, Mlp& output, Var final_repr, const HyperParams& hp) {
  return diff::sigmoid(predict_logits(bind, output, final_repr, hp));
}

Var forward_on_tape(Tape& tape, const PreparedGraph& g, DragParams& params, const ForwardOptions& options,
                    ForwardState* state) {
  const HyperParams& hp = params.hp;
  const Index n = g.num_nodes();
  const Index m = g.num_relations();
  if (params.num_relations != m) {
    throw ValidationError("parameters were built for " + std::to_string(params.num_relations) +
                          " relations but the " + mode_name(g.mode()) + " graph has " + std::to_string(m));
  }
  if (params.feature_dim != g.graph().feature_dim()) {
    throw ValidationError("parameters expect " + std::to_string(params.feature_dim) + " features, graph has " +
                          std::to_string(g.graph().feature_dim()));
  }
  const Index layers = g.mode() == AblationMode::SingleLayer ? 1 : hp.layers;
  const Index blocks = layers + (hp.literal_blocks ? 1 : 0);
  if (blocks > params.blocks()) throw ValidationError("parameters hold too few layer blocks for this forward pass");

  const bool cache = state != nullptr && options.cache_attention;
  if (state != nullptr) {
    *state = ForwardState{};
    state->cached = cache;
    state->mode = g.mode();
    state->num_relations = m;
  }

  Binder bind{tape, options.trainable};
  Var x = tape.constant(g.graph().features());
  std::vector<Var> reprs{apply_mlp(bind, params.input_mlp, x, hp)};

  for (Index l = 0; l < blocks; ++l) {
    Var h = reprs.back();
    std::vector<Var> candidates;
    std::vector<EdgeAttention> alphas;
    for (Index k = 0; k < m; ++k) {
      Matrix alpha;
      candidates.push_back(
          relation_attention(bind, g.relation(k), params.relation_heads[l][k], h, hp, cache ? &alpha : nullptr));
      if (cache) alphas.push_back(EdgeAttention{g.relation(k).target, g.relation(k).source, std::move(alpha)});
    }
    candidates.push_back(self_transform(bind, params.self_mlp[l], h, hp));
    std::vector<Matrix> beta;
    reprs.push_back(relation_aggregate(bind, params.relation_agg_heads[l], candidates, h, hp, cache ? &beta : nullptr));
    if (state != nullptr) {
      auto& rel = state->relation_repr.emplace_back();
      for (const Var& c : candidates) rel.push_back(c.value());
    }
    if (cache) {
      state->alpha.push_back(std::move(alphas));
      state->beta.push_back(std::move(beta));
    }
  }

  Var final_repr;
  if (g.mode() == AblationMode::NoLayerAgg) {
    std::vector<Var> heads;
    for (auto& head : params.layer_agg_heads) heads.push_back(diff::matmul_bt(reprs.back(), bind(head.projection)));
    final_repr = activate(diff::concat_cols(heads), hp);
  } else {
    final_repr = layer_aggregate(bind, params.layer_agg_heads, x, reprs, hp, cache ? &state->gamma : nullptr);
  }
  Var logits = predict_logits(bind, params.output_mlp, final_repr, hp);
  Var yhat = diff::sigmoid(logits);

  if (state != nullptr) {
    for (const Var& r : reprs) state->layer_repr.push_back(r.value());
    state->layer_repr.push_back(final_repr.value());
    state->logits = logits.value();
    state->yhat.assign(yhat.value().data(), yhat.value().data() + n);
  }
  return yhat;
}

double normalization_error(const ForwardState& state) {
  if (!state.cached) throw ValidationError("attention coefficients were not cached during the forward pass");
  double worst = 0.0;
  for (const auto& layer : state.alpha) {
    for (const auto& att : layer) {
      const Index n = static_cast<Index>(state.yhat.size());
      Matrix sums = Matrix::Zero(n, att.coefficients.cols());
      for (Index e = 0; e < att.coefficients.rows(); ++e) sums.row((*att.target)[e]) += att.coefficients.row(e);
      worst = std::max(worst, (sums.array() - 1.0).abs().maxCoeff());
    }
  }
  auto check_rows = [&worst](const Matrix& m) {
    if (m.size() > 0) worst = std::max(worst, (m.rowwise().sum().array() - 1.0).abs().maxCoeff());
  };
  for (const auto& layer : state.beta) {
    for (const auto& m : layer) check_rows(m);
  }
  for (const auto& m : state.gamma) check_rows(m);
  return worst;
}

ForwardState forward(const PreparedGraph& g, DragParams& params, bool cache_attention) {
  Tape tape;
  ForwardState state;
  forward_on_tape(tape, g, params, ForwardOptions{cache_attention, false}, &state);
  return state;
}

Var bce_loss(Var yhat, std::span<const int> labels, std::span<const Index> batch, const LossOptions& options,
             std::size_t* clamped_out) {
  if (yhat.cols() != 1) throw ShapeError("bce_loss: predictions must be a column");
  if (static_cast<Index>(labels.size()) != yhat.rows()) throw ShapeError("bce_loss: labels and predictions differ");
  Tape& tape = *yhat.tape();
  std::vector<Index> rows(batch.begin(), batch.end());
  Matrix y(static_cast<Index>(rows.size()), 1);
  std::size_t clamped = 0;
  for (std::size_t b = 0; b < rows.size(); ++b) {
    if (rows[b] < 0 || rows[b] >= yhat.rows()) throw ShapeError("bce_loss: batch index out of range");
    y(static_cast<Index>(b), 0) = labels[rows[b]];
    const double p = yhat.value()(rows[b], 0);
    if (p < options.epsilon || p > 1.0 - options.epsilon) ++clamped;
  }
  if (clamped_out != nullptr) {
    *clamped_out = clamped;
  } else if (clamped > 0) {
    std::clog << "bce_loss: clamped " << clamped << " predictions into [" << options.epsilon << ", 1 - "
              << options.epsilon << "]\n";
  }
  Var p = diff::clamp(diff::gather_rows(yhat, diff::make_index_list(std::move(rows))), options.epsilon,
                      1.0 - options.epsilon);
  Var positive = diff::mul(tape.constant(y), diff::log(p));
  if (options.positive_term_only) return diff::scale(diff::sum(positive), -1.0);
  Var negative = diff::mul(tape.constant((1.0 - y.array()).matrix()), diff::log(diff::affine_scalar(p, -1.0, 1.0)));
  return diff::scale(diff::sum(diff::add(positive, negative)), -1.0);
}

}  // namespace drag::model
