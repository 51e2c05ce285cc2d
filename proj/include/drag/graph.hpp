#pragma once

#include "drag/diff.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace drag::graph {

using Index = diff::Index;
using Matrix = diff::Matrix;
using Edge = std::pair<Index, Index>;

/// Neighbor lists of one relation in compressed-row form. Row i lists N_ik in
/// ascending order.
struct Adjacency {
  std::vector<Index> offsets;  // size n + 1
  std::vector<Index> neighbors;

  std::span<const Index> neighbors_of(Index i) const {
    return {neighbors.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
  bool contains(Index i, Index j) const;
  std::size_t entry_count() const { return neighbors.size(); }
};

/// Undirected multi-relation graph with node features and binary labels.
/// Immutable after construction.
class MultiRelationGraph {
 public:
  MultiRelationGraph() = default;

  /// Builds and validates a graph. Edges may be listed in one or both
  /// directions and may repeat; each relation is symmetrized and deduplicated.
  /// Throws ValidationError on dangling ids, bad labels or shape mismatches.
  MultiRelationGraph(Matrix features, std::vector<int> labels, std::vector<std::string> relation_names,
                     const std::vector<std::vector<Edge>>& edges);

  Index num_nodes() const { return static_cast<Index>(labels_.size()); }
  Index num_relations() const { return static_cast<Index>(relations_.size()); }
  Index feature_dim() const { return features_.cols(); }

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<std::string>& relation_names() const { return relation_names_; }
  const Adjacency& relation(Index k) const { return relations_.at(static_cast<std::size_t>(k)); }

  /// Each undirected edge once, as (i, j) with i <= j.
  std::vector<Edge> edge_list(Index k) const;
  std::size_t undirected_edge_count(Index k) const;
  Index fraud_count() const;

  bool has_self_loops() const;
  bool is_symmetric() const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  std::vector<std::string> relation_names_;
  std::vector<Adjacency> relations_;
};

struct DedupResult {
  MultiRelationGraph graph;
  std::vector<Index> removed;  // original ids, ascending
};

/// Drops every node whose feature row is bitwise identical to another node's,
/// together with incident edges, and compacts the remaining ids.
DedupResult deduplicate_nodes(const MultiRelationGraph& g);

MultiRelationGraph add_self_loops(const MultiRelationGraph& g);

/// Union of all relations as a single relation named "merged".
MultiRelationGraph merge_relations(const MultiRelationGraph& g);

/// Applies new_id = perm[old_id] to nodes, features, labels and edges.
MultiRelationGraph relabel_nodes(const MultiRelationGraph& g, std::span<const Index> perm);

struct SplitMasks {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;
  double label_fraction = 0.0;  // percent
};

/// Stratified split: round(p% · n) training nodes, the rest divided 1:2 into
/// validation and test. Per class counts follow the global fraud ratio up to
/// rounding. Deterministic in seed.
SplitMasks split_labels(const MultiRelationGraph& g, double percent, std::uint64_t seed);

struct SyntheticSpec {
  Index n = 1000;
  Index m = 3;
  Index d = 16;
  double fraud_ratio = 0.15;
  Index informative_relation = 0;
  // Empty means: informative relation 0.9, others 0.5.
  std::vector<double> homophily_per_relation;
  std::uint64_t seed = 0;
  double avg_degree = 8.0;       // mean non-loop degree per relation
  double feature_signal = 1.0;   // distance between class means in feature space
};

void validate(const SyntheticSpec& spec);

/// Planted-signal generator. Exactly round(fraud_ratio · n) frauds; features
/// are class-conditional Gaussians; each edge of relation k joins a same-class
/// pair with probability homophily[k] and a cross-class pair otherwise.
MultiRelationGraph gen_synthetic(const SyntheticSpec& spec);

/// Reads `key = value` lines (# comments allowed). Keys are the SyntheticSpec
/// field names; homophily_per_relation is a comma-separated list.
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);
SyntheticSpec parse_synthetic_spec(const std::string& text, const std::string& source = "<string>");

enum class Format { TriplesCsv, ContainerJson };

Format parse_format(const std::string& name);
std::string format_name(Format f);

/// triples-csv: `path` is a directory holding nodes.csv (id,label,f1..fd),
/// edges.csv (src,relation,dst) and optionally relations.txt (one name per
/// line, fixing relation order). container-json: `path` is a single JSON file.
MultiRelationGraph load_graph(const std::filesystem::path& path, Format format);
void save_graph(const MultiRelationGraph& g, const std::filesystem::path& path, Format format);

}  // namespace drag::graph
