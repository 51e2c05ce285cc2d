#include "drag/error.hpp"
#include "drag/graph.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace drag::graph {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_int(const std::string& s, Index& out) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return false;
  out = static_cast<Index>(v);
  return true;
}

bool parse_real(const std::string& s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

MultiRelationGraph load_triples(const std::filesystem::path& dir) {
  const auto nodes_path = dir / "nodes.csv";
  const auto edges_path = dir / "edges.csv";
  const auto relations_path = dir / "relations.txt";

  struct Row {
    int label;
    std::vector<double> features;
  };
  std::map<Index, Row> rows;
  Index dim = -1;
  {
    auto in = open_input(nodes_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      auto fields = split_csv(line);
      Index id = 0;
      if (!parse_int(fields[0], id)) {
        if (line_no == 1) continue;  // header
        throw ParseError(nodes_path.string(), line_no, "node id `" + fields[0] + "` is not an integer");
      }
      if (fields.size() < 2) throw ParseError(nodes_path.string(), line_no, "expected id,label,features...");
      Index label = 0;
      if (!parse_int(fields[1], label)) {
        throw ParseError(nodes_path.string(), line_no, "label `" + fields[1] + "` is not an integer");
      }
      if (label != 0 && label != 1) {
        throw ValidationError(nodes_path.string() + ":" + std::to_string(line_no) + ": label " +
                              std::to_string(label) + " is not 0 or 1");
      }
      const Index row_dim = static_cast<Index>(fields.size()) - 2;
      if (dim < 0) dim = row_dim;
      if (row_dim != dim) {
        throw ParseError(nodes_path.string(), line_no,
                         "expected " + std::to_string(dim) + " features, found " + std::to_string(row_dim));
      }
      Row row{static_cast<int>(label), std::vector<double>(static_cast<std::size_t>(row_dim))};
      for (Index c = 0; c < row_dim; ++c) {
        if (!parse_real(fields[c + 2], row.features[c])) {
          throw ParseError(nodes_path.string(), line_no, "feature `" + fields[c + 2] + "` is not a number");
        }
      }
      if (id < 0) throw ParseError(nodes_path.string(), line_no, "negative node id");
      if (!rows.emplace(id, std::move(row)).second) {
        throw ParseError(nodes_path.string(), line_no, "duplicate node id " + std::to_string(id));
      }
    }
  }
  const Index n = static_cast<Index>(rows.size());
  if (n > 0 && rows.rbegin()->first != n - 1) {
    throw ValidationError(nodes_path.string() + ": node ids must be exactly 0.." + std::to_string(n - 1));
  }
  Matrix features(n, std::max<Index>(dim, 0));
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (const auto& [id, row] : rows) {
    labels[id] = row.label;
    for (Index c = 0; c < features.cols(); ++c) features(id, c) = row.features[c];
  }

  std::vector<std::string> names;
  bool fixed_names = false;
  if (std::filesystem::exists(relations_path)) {
    auto in = open_input(relations_path);
    std::string line;
    while (std::getline(in, line)) {
      if (blank(line)) continue;
      auto fields = split_csv(line);
      names.push_back(fields.empty() ? line : fields[0]);
    }
    fixed_names = true;
  }
  std::map<std::string, std::size_t> relation_index;
  for (std::size_t k = 0; k < names.size(); ++k) relation_index[names[k]] = k;
  std::vector<std::vector<Edge>> edges(names.size());
  {
    auto in = open_input(edges_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      auto fields = split_csv(line);
      if (fields.size() != 3) {
        if (line_no == 1 && !fields.empty() && fields[0] == "src") continue;
        throw ParseError(edges_path.string(), line_no, "expected src,relation,dst");
      }
      Index src = 0;
      Index dst = 0;
      if (!parse_int(fields[0], src) || !parse_int(fields[2], dst)) {
        if (line_no == 1) continue;  // header
        throw ParseError(edges_path.string(), line_no, "node ids must be integers");
      }
      if (src < 0 || src >= n || dst < 0 || dst >= n) {
        throw ValidationError(edges_path.string() + ":" + std::to_string(line_no) + ": edge (" +
                              std::to_string(src) + ", " + std::to_string(dst) + ") references a node outside [0, " +
                              std::to_string(n) + ")");
      }
      auto it = relation_index.find(fields[1]);
      if (it == relation_index.end()) {
        if (fixed_names) {
          throw ValidationError(edges_path.string() + ":" + std::to_string(line_no) + ": relation `" + fields[1] +
                                "` is not listed in relations.txt");
        }
        it = relation_index.emplace(fields[1], names.size()).first;
        names.push_back(fields[1]);
        edges.emplace_back();
      }
      edges[it->second].emplace_back(src, dst);
    }
  }
  return MultiRelationGraph(std::move(features), std::move(labels), std::move(names), edges);
}

MultiRelationGraph load_container(const std::filesystem::path& path) {
  auto in = open_input(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; recover the line for the message.
    std::ifstream again(path);
    std::size_t line = 1;
    char c = 0;
    for (std::size_t pos = 0; pos + 1 < e.byte && again.get(c); ++pos) line += c == '\n' ? 1 : 0;
    throw ParseError(path.string(), line, e.what());
  }
  try {
    const Index n = doc.at("num_nodes").get<Index>();
    const Index m = doc.at("num_relations").get<Index>();
    if (n < 0 || m < 0) throw ValidationError(path.string() + ": counts must be non-negative");
    auto names = doc.at("relation_names").get<std::vector<std::string>>();
    auto labels = doc.at("labels").get<std::vector<int>>();
    auto rows = doc.at("features").get<std::vector<std::vector<double>>>();
    const auto& edge_lists = doc.at("edges");
    if (static_cast<Index>(names.size()) != m || static_cast<Index>(edge_lists.size()) != m) {
      throw ValidationError(path.string() + ": relation_names and edges must both have num_relations entries");
    }
    if (static_cast<Index>(labels.size()) != n || static_cast<Index>(rows.size()) != n) {
      throw ValidationError(path.string() + ": labels and features must both have num_nodes entries");
    }
    const Index d = rows.empty() ? doc.value("feature_dim", Index{0}) : static_cast<Index>(rows.front().size());
    Matrix features(n, d);
    for (Index i = 0; i < n; ++i) {
      if (static_cast<Index>(rows[i].size()) != d) {
        throw ValidationError(path.string() + ": feature row " + std::to_string(i) + " has the wrong length");
      }
      for (Index c = 0; c < d; ++c) features(i, c) = rows[i][c];
    }
    std::vector<std::vector<Edge>> edges(static_cast<std::size_t>(m));
    for (Index k = 0; k < m; ++k) {
      for (const auto& pair : edge_lists[k]) {
        if (!pair.is_array() || pair.size() != 2) {
          throw ValidationError(path.string() + ": relation " + names[k] + " has an edge that is not a pair");
        }
        edges[k].emplace_back(pair[0].get<Index>(), pair[1].get<Index>());
      }
    }
    return MultiRelationGraph(std::move(features), std::move(labels), std::move(names), edges);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace

Format parse_format(const std::string& name) {
  if (name == "triples-csv") return Format::TriplesCsv;
  if (name == "container-json") return Format::ContainerJson;
  throw ValidationError("unknown graph format `" + name + "` (expected triples-csv or container-json)");
}

std::string format_name(Format f) { return f == Format::TriplesCsv ? "triples-csv" : "container-json"; }

MultiRelationGraph load_graph(const std::filesystem::path& path, Format format) {
  if (!std::filesystem::exists(path)) throw ValidationError("dataset path does not exist: " + path.string());
  return format == Format::TriplesCsv ? load_triples(path) : load_container(path);
}

void save_graph(const MultiRelationGraph& g, const std::filesystem::path& path, Format format) {
  if (format == Format::TriplesCsv) {
    std::filesystem::create_directories(path);
    std::ofstream nodes(path / "nodes.csv");
    nodes << "id,label";
    for (Index c = 0; c < g.feature_dim(); ++c) nodes << ",f" << (c + 1);
    nodes << '\n';
    for (Index i = 0; i < g.num_nodes(); ++i) {
      nodes << i << ',' << g.labels()[i];
      for (Index c = 0; c < g.feature_dim(); ++c) nodes << ',' << format_real(g.features()(i, c));
      nodes << '\n';
    }
    std::ofstream relations(path / "relations.txt");
    for (const auto& name : g.relation_names()) relations << name << '\n';
    std::ofstream edges(path / "edges.csv");
    edges << "src,relation,dst\n";
    for (Index k = 0; k < g.num_relations(); ++k) {
      for (const auto& [u, v] : g.edge_list(k)) edges << u << ',' << g.relation_names()[k] << ',' << v << '\n';
    }
    if (!nodes || !relations || !edges) throw Error("failed writing graph to " + path.string());
    return;
  }

  json doc;
  doc["num_nodes"] = g.num_nodes();
  doc["num_relations"] = g.num_relations();
  doc["feature_dim"] = g.feature_dim();
  doc["relation_names"] = g.relation_names();
  doc["labels"] = g.labels();
  json rows = json::array();
  for (Index i = 0; i < g.num_nodes(); ++i) {
    json row = json::array();
    for (Index c = 0; c < g.feature_dim(); ++c) row.push_back(g.features()(i, c));
    rows.push_back(std::move(row));
  }
  doc["features"] = std::move(rows);
  json edges = json::array();
  for (Index k = 0; k < g.num_relations(); ++k) {
    json rel = json::array();
    for (const auto& [u, v] : g.edge_list(k)) rel.push_back({u, v});
    edges.push_back(std::move(rel));
  }
  doc["edges"] = std::move(edges);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << doc.dump() << '\n';
  if (!out) throw Error("failed writing graph to " + path.string());
}

}  // namespace drag::graph
