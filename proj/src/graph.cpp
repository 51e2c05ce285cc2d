#include "drag/graph.hpp"

#include "drag/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace drag::graph {

namespace {

Adjacency build_adjacency(Index n, const std::vector<Edge>& edges) {
  std::vector<std::vector<Index>> rows(static_cast<std::size_t>(n));
  for (const auto& [u, v] : edges) {
    rows[u].push_back(v);
    if (u != v) rows[v].push_back(u);
  }
  Adjacency adj;
  adj.offsets.reserve(static_cast<std::size_t>(n) + 1);
  adj.offsets.push_back(0);
  for (auto& row : rows) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    adj.neighbors.insert(adj.neighbors.end(), row.begin(), row.end());
    adj.offsets.push_back(static_cast<Index>(adj.neighbors.size()));
  }
  return adj;
}

std::vector<std::vector<Edge>> all_edges(const MultiRelationGraph& g) {
  std::vector<std::vector<Edge>> out;
  for (Index k = 0; k < g.num_relations(); ++k) out.push_back(g.edge_list(k));
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

bool Adjacency::contains(Index i, Index j) const {
  auto row = neighbors_of(i);
  return std::binary_search(row.begin(), row.end(), j);
}

MultiRelationGraph::MultiRelationGraph(Matrix features, std::vector<int> labels,
                                       std::vector<std::string> relation_names,
                                       const std::vector<std::vector<Edge>>& edges)
    : features_(std::move(features)), labels_(std::move(labels)), relation_names_(std::move(relation_names)) {
  const Index n = static_cast<Index>(labels_.size());
  if (features_.rows() != n) {
    throw ValidationError("feature matrix has " + std::to_string(features_.rows()) + " rows but there are " +
                          std::to_string(n) + " labels");
  }
  for (Index i = 0; i < n; ++i) {
    if (labels_[i] != 0 && labels_[i] != 1) {
      throw ValidationError("node " + std::to_string(i) + " has label " + std::to_string(labels_[i]) +
                            ", expected 0 or 1");
    }
  }
  if (!features_.allFinite()) throw ValidationError("feature matrix contains non-finite values");
  if (relation_names_.size() != edges.size()) {
    throw ValidationError("got " + std::to_string(relation_names_.size()) + " relation names for " +
                          std::to_string(edges.size()) + " edge lists");
  }
  for (std::size_t k = 0; k < edges.size(); ++k) {
    for (const auto& [u, v] : edges[k]) {
      if (u < 0 || u >= n || v < 0 || v >= n) {
        throw ValidationError("relation " + relation_names_[k] + ": edge (" + std::to_string(u) + ", " +
                              std::to_string(v) + ") references a node outside [0, " + std::to_string(n) + ")");
      }
    }
    relations_.push_back(build_adjacency(n, edges[k]));
  }
}

std::vector<Edge> MultiRelationGraph::edge_list(Index k) const {
  const Adjacency& adj = relation(k);
  std::vector<Edge> out;
  for (Index i = 0; i < num_nodes(); ++i) {
    for (Index j : adj.neighbors_of(i)) {
      if (i <= j) out.emplace_back(i, j);
    }
  }
  return out;
}

std::size_t MultiRelationGraph::undirected_edge_count(Index k) const {
  const Adjacency& adj = relation(k);
  std::size_t loops = 0;
  for (Index i = 0; i < num_nodes(); ++i) loops += adj.contains(i, i) ? 1 : 0;
  return (adj.entry_count() - loops) / 2 + loops;
}

Index MultiRelationGraph::fraud_count() const {
  return static_cast<Index>(std::count(labels_.begin(), labels_.end(), 1));
}

bool MultiRelationGraph::has_self_loops() const {
  for (const auto& adj : relations_) {
    for (Index i = 0; i < num_nodes(); ++i) {
      if (!adj.contains(i, i)) return false;
    }
  }
  return true;
}

bool MultiRelationGraph::is_symmetric() const {
  for (const auto& adj : relations_) {
    for (Index i = 0; i < num_nodes(); ++i) {
      for (Index j : adj.neighbors_of(i)) {
        if (!adj.contains(j, i)) return false;
      }
    }
  }
  return true;
}

DedupResult deduplicate_nodes(const MultiRelationGraph& g) {
  const Index n = g.num_nodes();
  const Index d = g.feature_dim();
  const Matrix& x = g.features();
  auto row_bytes = [&](Index i) {
    std::string key(static_cast<std::size_t>(d) * sizeof(double), '\0');
    if (d > 0) std::memcpy(key.data(), x.row(i).data(), key.size());
    return key;
  };
  std::map<std::string, Index> multiplicity;
  for (Index i = 0; i < n; ++i) ++multiplicity[row_bytes(i)];

  DedupResult result;
  std::vector<Index> new_id(static_cast<std::size_t>(n), -1);
  Index kept = 0;
  for (Index i = 0; i < n; ++i) {
    if (multiplicity[row_bytes(i)] > 1) {
      result.removed.push_back(i);
    } else {
      new_id[i] = kept++;
    }
  }
  if (result.removed.empty()) {
    result.graph = g;
    return result;
  }

  Matrix features(kept, d);
  std::vector<int> labels(static_cast<std::size_t>(kept));
  for (Index i = 0; i < n; ++i) {
    if (new_id[i] < 0) continue;
    features.row(new_id[i]) = x.row(i);
    labels[new_id[i]] = g.labels()[i];
  }
  std::vector<std::vector<Edge>> edges;
  for (Index k = 0; k < g.num_relations(); ++k) {
    auto& out = edges.emplace_back();
    for (const auto& [u, v] : g.edge_list(k)) {
      if (new_id[u] >= 0 && new_id[v] >= 0) out.emplace_back(new_id[u], new_id[v]);
    }
  }
  result.graph = MultiRelationGraph(std::move(features), std::move(labels), g.relation_names(), edges);
  return result;
}

MultiRelationGraph add_self_loops(const MultiRelationGraph& g) {
  auto edges = all_edges(g);
  for (auto& rel : edges) {
    for (Index i = 0; i < g.num_nodes(); ++i) rel.emplace_back(i, i);
  }
  return MultiRelationGraph(g.features(), g.labels(), g.relation_names(), edges);
}

MultiRelationGraph merge_relations(const MultiRelationGraph& g) {
  std::vector<std::vector<Edge>> merged(1);
  for (Index k = 0; k < g.num_relations(); ++k) {
    auto rel = g.edge_list(k);
    merged[0].insert(merged[0].end(), rel.begin(), rel.end());
  }
  return MultiRelationGraph(g.features(), g.labels(), {"merged"}, merged);
}

MultiRelationGraph relabel_nodes(const MultiRelationGraph& g, std::span<const Index> perm) {
  const Index n = g.num_nodes();
  if (static_cast<Index>(perm.size()) != n) throw ValidationError("permutation length does not match node count");
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (Index p : perm) {
    if (p < 0 || p >= n || seen[p]) throw ValidationError("relabel_nodes: not a permutation");
    seen[p] = true;
  }
  Matrix features(n, g.feature_dim());
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    features.row(perm[i]) = g.features().row(i);
    labels[perm[i]] = g.labels()[i];
  }
  auto edges = all_edges(g);
  for (auto& rel : edges) {
    for (auto& [u, v] : rel) {
      u = perm[u];
      v = perm[v];
    }
  }
  return MultiRelationGraph(std::move(features), std::move(labels), g.relation_names(), edges);
}

SplitMasks split_labels(const MultiRelationGraph& g, double percent, std::uint64_t seed) {
  if (!(percent > 0.0 && percent < 100.0)) {
    throw ValidationError("label percentage must lie in (0, 100), got " + std::to_string(percent));
  }
  const Index n = g.num_nodes();
  std::vector<Index> by_class[2];
  for (Index i = 0; i < n; ++i) by_class[g.labels()[i]].push_back(i);
  std::mt19937_64 rng(seed);
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);

  const Index n_fraud = static_cast<Index>(by_class[1].size());
  const Index train_total = std::llround(percent * static_cast<double>(n) / 100.0);
  const Index train_fraud =
      n > 0 ? std::llround(static_cast<double>(train_total) * static_cast<double>(n_fraud) / static_cast<double>(n))
            : 0;
  if (train_fraud == 0) {
    throw ValidationError("a " + std::to_string(percent) + "% split of " + std::to_string(n) + " nodes with " +
                          std::to_string(n_fraud) + " frauds leaves no fraud in the training set");
  }
  const Index train_normal = train_total - train_fraud;
  const Index rest_fraud = n_fraud - train_fraud;
  const Index rest_total = n - train_total;
  const Index val_total = std::llround(static_cast<double>(rest_total) / 3.0);
  const Index val_fraud =
      rest_total > 0 ? std::llround(static_cast<double>(val_total) * static_cast<double>(rest_fraud) /
                                    static_cast<double>(rest_total))
                     : 0;
  const Index val_normal = val_total - val_fraud;

  SplitMasks masks;
  masks.label_fraction = percent;
  auto take = [](const std::vector<Index>& src, Index begin, Index count, std::vector<Index>& dst) {
    dst.insert(dst.end(), src.begin() + begin, src.begin() + begin + count);
  };
  const auto& fraud = by_class[1];
  const auto& normal = by_class[0];
  take(fraud, 0, train_fraud, masks.train);
  take(normal, 0, train_normal, masks.train);
  take(fraud, train_fraud, val_fraud, masks.val);
  take(normal, train_normal, val_normal, masks.val);
  take(fraud, train_fraud + val_fraud, n_fraud - train_fraud - val_fraud, masks.test);
  take(normal, train_normal + val_normal, static_cast<Index>(normal.size()) - train_normal - val_normal, masks.test);
  for (auto* part : {&masks.train, &masks.val, &masks.test}) std::sort(part->begin(), part->end());
  return masks;
}

void validate(const SyntheticSpec& spec) {
  if (spec.n < 2) throw ValidationError("synthetic spec: n must be at least 2");
  if (spec.m < 1) throw ValidationError("synthetic spec: m must be at least 1");
  if (spec.d < 1) throw ValidationError("synthetic spec: d must be at least 1");
  if (!(spec.fraud_ratio > 0.0 && spec.fraud_ratio < 1.0)) {
    throw ValidationError("synthetic spec: fraud_ratio must lie in (0, 1)");
  }
  if (spec.informative_relation < 0 || spec.informative_relation >= spec.m) {
    throw ValidationError("synthetic spec: informative_relation must lie in [0, m)");
  }
  if (!spec.homophily_per_relation.empty()) {
    if (static_cast<Index>(spec.homophily_per_relation.size()) != spec.m) {
      throw ValidationError("synthetic spec: homophily_per_relation needs exactly m values");
    }
    for (double h : spec.homophily_per_relation) {
      if (!(h >= 0.0 && h <= 1.0)) throw ValidationError("synthetic spec: homophily values must lie in [0, 1]");
    }
  }
  if (!(spec.avg_degree >= 0.0)) throw ValidationError("synthetic spec: avg_degree must be non-negative");
  if (!(spec.feature_signal >= 0.0)) throw ValidationError("synthetic spec: feature_signal must be non-negative");
}

MultiRelationGraph gen_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  const Index n = spec.n;
  std::mt19937_64 rng(spec.seed);

  const Index n_fraud = std::llround(spec.fraud_ratio * static_cast<double>(n));
  if (n_fraud < 1 || n_fraud >= n) throw ValidationError("synthetic spec: fraud_ratio leaves a class empty");
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n_fraud; ++i) labels[order[i]] = 1;

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::RowVectorXd direction(spec.d);
  for (Index c = 0; c < spec.d; ++c) direction(c) = normal(rng);
  direction.normalize();
  Matrix features(n, spec.d);
  for (Index i = 0; i < n; ++i) {
    const double side = labels[i] == 1 ? 0.5 : -0.5;
    for (Index c = 0; c < spec.d; ++c) features(i, c) = normal(rng) + side * spec.feature_signal * direction(c);
  }

  std::vector<Index> members[2];
  for (Index i = 0; i < n; ++i) members[labels[i]].push_back(i);

  std::vector<double> homophily = spec.homophily_per_relation;
  if (homophily.empty()) {
    homophily.assign(static_cast<std::size_t>(spec.m), 0.5);
    homophily[spec.informative_relation] = 0.9;
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<Edge>> edges(static_cast<std::size_t>(spec.m));
  std::vector<std::string> names;
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.avg_degree / 2.0));
  for (Index k = 0; k < spec.m; ++k) {
    names.push_back("rel" + std::to_string(k));
    std::set<Edge> chosen;
    std::uniform_int_distribution<Index> pick_node(0, n - 1);
    const std::size_t max_attempts = 20 * target + 100;
    for (std::size_t attempt = 0; attempt < max_attempts && chosen.size() < target; ++attempt) {
      const Index i = pick_node(rng);
      const int ci = labels[i];
      const bool same = unit(rng) < homophily[k];
      const auto& pool = members[same ? ci : 1 - ci];
      if (pool.size() < 2 && same) continue;
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const Index j = pool[pick(rng)];
      if (j == i) continue;
      chosen.emplace(std::min(i, j), std::max(i, j));
    }
    edges[k].assign(chosen.begin(), chosen.end());
  }
  return MultiRelationGraph(std::move(features), std::move(labels), std::move(names), edges);
}

SyntheticSpec parse_synthetic_spec(const std::string& text, const std::string& source) {
  SyntheticSpec spec;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected `key = value`");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ParseError(source, line_no, "duplicate key `" + key + "`");
    try {
      std::size_t used = 0;
      auto as_int = [&](const std::string& s) {
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return static_cast<Index>(v);
      };
      auto as_real = [&](const std::string& s) {
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      };
      if (key == "n") {
        spec.n = as_int(value);
      } else if (key == "m") {
        spec.m = as_int(value);
      } else if (key == "d") {
        spec.d = as_int(value);
      } else if (key == "fraud_ratio") {
        spec.fraud_ratio = as_real(value);
      } else if (key == "informative_relation") {
        spec.informative_relation = as_int(value);
      } else if (key == "seed") {
        const Index s = as_int(value);
        if (s < 0) throw std::invalid_argument(value);
        spec.seed = static_cast<std::uint64_t>(s);
      } else if (key == "avg_degree") {
        spec.avg_degree = as_real(value);
      } else if (key == "feature_signal") {
        spec.feature_signal = as_real(value);
      } else if (key == "homophily_per_relation") {
        spec.homophily_per_relation.clear();
        std::istringstream items(value);
        std::string item;
        while (std::getline(items, item, ',')) spec.homophily_per_relation.push_back(as_real(trim(item)));
      } else {
        throw ParseError(source, line_no, "unknown key `" + key + "`");
      }
    } catch (const std::invalid_argument&) {
      throw ParseError(source, line_no, "invalid value `" + value + "` for `" + key + "`");
    } catch (const std::out_of_range&) {
      throw ParseError(source, line_no, "value out of range for `" + key + "`");
    }
  }
  validate(spec);
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open synthetic spec " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_synthetic_spec(buf.str(), path.string());
}

}  // namespace drag::graph
