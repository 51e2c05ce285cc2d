#include "drag/error.hpp"
#include "drag/graph.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <unistd.h>

using namespace drag::graph;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("drag_graph_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(path / name) << text; }
};

std::vector<Index> as_vec(std::span<const Index> s) { return {s.begin(), s.end()}; }

MultiRelationGraph isolated(Index n, Index m) {
  std::vector<std::string> names;
  for (Index k = 0; k < m; ++k) names.push_back("r" + std::to_string(k));
  return MultiRelationGraph(Matrix::Zero(n, 1), std::vector<int>(static_cast<std::size_t>(n), 0), names,
                            std::vector<std::vector<Edge>>(static_cast<std::size_t>(m)));
}

}  // namespace

TEST_CASE("empty edge file gives isolated nodes") {
  TempDir dir;
  dir.write("nodes.csv", "id,label,f1\n0,0,1.0\n1,1,2.0\n2,0,3.0\n");
  dir.write("edges.csv", "src,relation,dst\n");
  dir.write("relations.txt", "r1\n");
  auto g = load_graph(dir.path, Format::TriplesCsv);
  CHECK(g.num_nodes() == 3);
  CHECK(g.num_relations() == 1);
  for (Index i = 0; i < 3; ++i) CHECK(g.relation(0).neighbors_of(i).empty());
}

TEST_CASE("a single triple is stored on both endpoints") {
  TempDir dir;
  dir.write("nodes.csv", "0,0,0.5\n1,1,-0.5\n");
  dir.write("edges.csv", "0,r1,1\n");
  auto g = load_graph(dir.path, Format::TriplesCsv);
  CHECK(as_vec(g.relation(0).neighbors_of(0)) == std::vector<Index>{1});
  CHECK(as_vec(g.relation(0).neighbors_of(1)) == std::vector<Index>{0});
  CHECK(g.undirected_edge_count(0) == 1);
}

TEST_CASE("edges listed in both directions are not doubled") {
  auto g = MultiRelationGraph(Matrix::Zero(3, 1), {0, 1, 0}, {"r"}, {{{0, 1}, {1, 0}, {2, 1}}});
  CHECK(g.undirected_edge_count(0) == 2);
  CHECK(g.relation(0).entry_count() == 4);
  CHECK(g.is_symmetric());
}

TEST_CASE("loader errors") {
  TempDir dir;
  SUBCASE("malformed row names its line") {
    dir.write("nodes.csv", "id,label,f1\n0,0,1.0\n1,zero,2.0\n");
    dir.write("edges.csv", "");
    try {
      load_graph(dir.path, Format::TriplesCsv);
      FAIL("expected ParseError");
    } catch (const drag::ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
  SUBCASE("dangling node id") {
    dir.write("nodes.csv", "0,0,1.0\n1,1,2.0\n");
    dir.write("edges.csv", "0,r,5\n");
    CHECK_THROWS_AS(load_graph(dir.path, Format::TriplesCsv), drag::ValidationError);
  }
  SUBCASE("label outside {0,1}") {
    dir.write("nodes.csv", "0,2,1.0\n1,1,2.0\n");
    dir.write("edges.csv", "");
    CHECK_THROWS_AS(load_graph(dir.path, Format::TriplesCsv), drag::ValidationError);
  }
  SUBCASE("json edge beyond declared n") {
    dir.write("g.json", R"({"num_nodes":2,"num_relations":1,"relation_names":["r"],"labels":[0,1],
                           "features":[[1.0],[2.0]],"edges":[[[0,2]]]})");
    CHECK_THROWS_AS(load_graph(dir.path / "g.json", Format::ContainerJson), drag::ValidationError);
  }
  SUBCASE("json with more labels than declared n") {
    dir.write("g.json", R"({"num_nodes":1,"num_relations":1,"relation_names":["r"],"labels":[0,1],
                           "features":[[1.0],[2.0]],"edges":[[]]})");
    CHECK_THROWS_AS(load_graph(dir.path / "g.json", Format::ContainerJson), drag::ValidationError);
  }
  SUBCASE("missing path") { CHECK_THROWS(load_graph(dir.path / "nope", Format::TriplesCsv)); }
}

TEST_CASE("save and load round-trip in both formats") {
  std::mt19937_64 rng(11);
  auto g = fixtures::random_graph(9, 3, 4, rng, 0.3);
  for (Format f : {Format::TriplesCsv, Format::ContainerJson}) {
    TempDir dir;
    const fs::path target = f == Format::TriplesCsv ? dir.path / "csv" : dir.path / "g.json";
    save_graph(g, target, f);
    auto back = load_graph(target, f);
    CHECK(back.features() == g.features());
    CHECK(back.labels() == g.labels());
    CHECK(back.relation_names() == g.relation_names());
    for (Index k = 0; k < g.num_relations(); ++k) CHECK(back.edge_list(k) == g.edge_list(k));
  }
}

TEST_CASE("add_self_loops") {
  auto looped = add_self_loops(isolated(3, 2));
  std::size_t entries = 0;
  for (Index k = 0; k < 2; ++k) {
    for (Index i = 0; i < 3; ++i) CHECK(as_vec(looped.relation(k).neighbors_of(i)) == std::vector<Index>{i});
    entries += looped.relation(k).entry_count();
  }
  CHECK(entries == 6);

  auto g = MultiRelationGraph(Matrix::Zero(2, 1), {0, 1}, {"r"}, {{{0, 1}}});
  CHECK(as_vec(add_self_loops(g).relation(0).neighbors_of(0)) == std::vector<Index>{0, 1});

  std::mt19937_64 rng(12);
  auto r = fixtures::random_graph(8, 3, 2, rng);  // already looped
  auto twice = add_self_loops(r);
  for (Index k = 0; k < 3; ++k) {
    CHECK(twice.relation(k).neighbors == r.relation(k).neighbors);
    CHECK(twice.relation(k).offsets == r.relation(k).offsets);
  }
}

TEST_CASE("random graphs are symmetric") {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 20; ++t) {
    auto g = fixtures::random_graph(2 + static_cast<Index>(rng() % 10), 1 + static_cast<Index>(rng() % 3), 2, rng);
    for (Index k = 0; k < g.num_relations(); ++k) {
      for (Index i = 0; i < g.num_nodes(); ++i) {
        for (Index j : g.relation(k).neighbors_of(i)) CHECK(g.relation(k).contains(j, i));
      }
    }
  }
}

TEST_CASE("deduplicate_nodes") {
  SUBCASE("rows {a,a,b,c} lose both copies of a") {
    Matrix x(4, 2);
    x << 1, 2, 1, 2, 3, 4, 5, 6;
    MultiRelationGraph g(x, {0, 1, 0, 1}, {"r"}, {{{0, 2}, {1, 3}, {2, 3}}});
    auto res = deduplicate_nodes(g);
    CHECK(res.removed == std::vector<Index>{0, 1});
    CHECK(res.graph.num_nodes() == 2);
    CHECK(res.graph.labels() == std::vector<int>{0, 1});
    CHECK(res.graph.edge_list(0) == std::vector<Edge>{{0, 1}});
  }
  SUBCASE("distinct rows are untouched and a second pass removes nothing") {
    std::mt19937_64 rng(14);
    auto g = fixtures::random_graph(10, 2, 3, rng);
    auto res = deduplicate_nodes(g);
    CHECK(res.removed.empty());
    CHECK(res.graph.features() == g.features());
    CHECK(deduplicate_nodes(res.graph).removed.empty());
  }
  SUBCASE("no identical rows survive, checked against exhaustive comparison") {
    std::mt19937_64 rng(15);
    for (int t = 0; t < 20; ++t) {
      const Index n = 12;
      Matrix x(n, 2);
      for (Index i = 0; i < n; ++i) x.row(i) << static_cast<double>(rng() % 4), static_cast<double>(rng() % 2);
      MultiRelationGraph g(x, std::vector<int>(n, 0), {"r"}, {{}});
      std::vector<Index> expected;
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
          if (i != j && x.row(i) == x.row(j)) {
            expected.push_back(i);
            break;
          }
        }
      }
      auto res = deduplicate_nodes(g);
      CHECK(res.removed == expected);
      const auto& f = res.graph.features();
      for (Index i = 0; i < f.rows(); ++i) {
        for (Index j = i + 1; j < f.rows(); ++j) CHECK(f.row(i) != f.row(j));
      }
    }
  }
}

TEST_CASE("split_labels arithmetic") {
  SUBCASE("n=100, 10 frauds, p=10") {
    std::vector<int> labels(100, 0);
    for (int i = 0; i < 10; ++i) labels[i * 7] = 1;
    MultiRelationGraph g(Matrix::Zero(100, 1), labels, {"r"}, {{}});
    auto s = split_labels(g, 10.0, 3);
    CHECK(s.train.size() == 10);
    CHECK(std::count_if(s.train.begin(), s.train.end(), [&](Index i) { return labels[i] == 1; }) == 1);
    CHECK(s.val.size() == 30);
    CHECK(s.test.size() == 60);
    auto frauds = [&](const std::vector<Index>& v) {
      return std::count_if(v.begin(), v.end(), [&](Index i) { return labels[i] == 1; });
    };
    CHECK(frauds(s.val) == 3);
    CHECK(frauds(s.test) == 6);
  }
  SUBCASE("p=40, n=45954") {
    std::vector<int> labels(45954, 0);
    for (std::size_t i = 0; i < 6677; ++i) labels[i] = 1;
    MultiRelationGraph g(Matrix::Zero(45954, 1), labels, {"r"}, {{}});
    auto s = split_labels(g, 40.0, 1);
    CHECK(s.train.size() == 18382);
    CHECK(s.train.size() + s.val.size() + s.test.size() == 45954);
  }
  SUBCASE("disjoint, covering, deterministic") {
    std::mt19937_64 rng(16);
    auto g = fixtures::random_graph(40, 1, 1, rng);
    auto a = split_labels(g, 25.0, 9);
    auto b = split_labels(g, 25.0, 9);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);
    std::set<Index> all;
    for (const auto* v : {&a.train, &a.val, &a.test}) all.insert(v->begin(), v->end());
    CHECK(all.size() == 40);
    CHECK(a.train.size() + a.val.size() + a.test.size() == 40);
    CHECK(split_labels(g, 25.0, 10).train != a.train);
  }
  SUBCASE("zero training frauds is an error") {
    std::vector<int> labels(100, 0);
    labels[0] = 1;
    MultiRelationGraph g(Matrix::Zero(100, 1), labels, {"r"}, {{}});
    CHECK_THROWS_AS(split_labels(g, 1.0, 0), drag::ValidationError);
  }
  SUBCASE("p out of range") {
    auto g = isolated(10, 1);
    CHECK_THROWS_AS(split_labels(g, 0.0, 0), drag::ValidationError);
    CHECK_THROWS_AS(split_labels(g, 100.0, 0), drag::ValidationError);
  }
}

TEST_CASE("gen_synthetic") {
  SyntheticSpec spec;
  spec.n = 1000;
  spec.fraud_ratio = 0.15;
  spec.seed = 1;
  auto g = gen_synthetic(spec);
  CHECK(g.fraud_count() == 150);
  CHECK(g.num_relations() == 3);
  CHECK_FALSE(g.has_self_loops());

  auto again = gen_synthetic(spec);
  CHECK(again.features() == g.features());
  CHECK(again.labels() == g.labels());
  for (Index k = 0; k < 3; ++k) CHECK(again.edge_list(k) == g.edge_list(k));

  spec.homophily_per_relation = {1.0, 1.0, 1.0};
  auto pure = gen_synthetic(spec);
  for (Index k = 0; k < 3; ++k) {
    for (auto [i, j] : pure.edge_list(k)) CHECK(pure.labels()[i] == pure.labels()[j]);
  }

  SyntheticSpec bad;
  bad.fraud_ratio = 1.0;
  CHECK_THROWS_AS(gen_synthetic(bad), drag::ValidationError);
  bad = SyntheticSpec{};
  bad.homophily_per_relation = {0.5, 1.5, 0.5};
  CHECK_THROWS_AS(gen_synthetic(bad), drag::ValidationError);
}

TEST_CASE("synthetic spec files") {
  auto spec = parse_synthetic_spec("# comment\nn = 200\nm=2\nfraud_ratio = 0.2\nhomophily_per_relation = 0.9, 0.4\nseed = 7\n");
  CHECK(spec.n == 200);
  CHECK(spec.m == 2);
  CHECK(spec.fraud_ratio == 0.2);
  CHECK(spec.homophily_per_relation == std::vector<double>{0.9, 0.4});
  CHECK(spec.seed == 7);
  try {
    parse_synthetic_spec("n = 10\nbogus = 3\n");
    FAIL("expected ParseError");
  } catch (const drag::ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_synthetic_spec("n = 10\nn = 11\n"), drag::ParseError);
  CHECK_THROWS_AS(parse_synthetic_spec("n = ten\n"), drag::ParseError);
}

TEST_CASE("merge_relations and relabel_nodes") {
  MultiRelationGraph g(Matrix::Zero(3, 1), {0, 1, 0}, {"a", "b"}, {{{0, 1}}, {{0, 1}, {1, 2}}});
  auto merged = merge_relations(g);
  CHECK(merged.num_relations() == 1);
  CHECK(merged.edge_list(0) == std::vector<Edge>{{0, 1}, {1, 2}});

  std::vector<Index> perm{2, 0, 1};
  auto r = relabel_nodes(g, perm);
  CHECK(r.labels() == std::vector<int>{1, 0, 0});
  CHECK(r.relation(1).contains(2, 0));
  CHECK(r.relation(1).contains(0, 1));
}
