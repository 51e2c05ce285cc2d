#pragma once

#include "drag/graph.hpp"
#include "drag/model.hpp"

#include <random>
#include <vector>

namespace fixtures {

using drag::diff::Index;
using drag::diff::Matrix;

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

/// Random multi-relation graph with self-loops; both classes present when n >= 2.
inline drag::graph::MultiRelationGraph random_graph(Index n, Index m, Index d, std::mt19937_64& rng,
                                                    double edge_prob = 0.4) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[i] = static_cast<int>(rng() % 2);
  if (n >= 2) {
    labels[0] = 0;
    labels[1] = 1;
  }
  std::bernoulli_distribution coin(edge_prob);
  std::vector<std::vector<drag::graph::Edge>> edges(static_cast<std::size_t>(m));
  std::vector<std::string> names;
  for (Index k = 0; k < m; ++k) {
    names.push_back("r" + std::to_string(k));
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) {
        if (coin(rng)) edges[k].emplace_back(i, j);
      }
    }
  }
  drag::graph::MultiRelationGraph g(random_matrix(n, d, rng), std::move(labels), std::move(names), edges);
  return drag::graph::add_self_loops(g);
}

/// Perturbs every parameter so that no score, bias or weight sits at an
/// initialization-specific value (zero biases would hide bias bugs).
inline void jitter(drag::model::DragParams& p, std::mt19937_64& rng, double scale = 0.3) {
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& ref : p.tensors()) {
    for (Index i = 0; i < ref.tensor->value.size(); ++i) ref.tensor->value.data()[i] += dist(rng);
  }
}

}  // namespace fixtures
