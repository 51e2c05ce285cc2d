// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any gated criterion fails; criterion 8 is informational only.
//
// usage: drag_acceptance <path-to-drag-cli> [criterion numbers...]

#include "drag/diff.hpp"
#include "drag/graph.hpp"
#include "drag/metrics.hpp"
#include "drag/model.hpp"
#include "drag/train.hpp"
#include "fixtures.hpp"
#include "oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>

namespace fs = std::filesystem;
using namespace drag;
using diff::Index;
using diff::Matrix;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Largest softmax normalization error over every cached forward pass below.
double g_norm_error = 0.0;
std::size_t g_norm_forwards = 0;

void track(const model::ForwardState& s) {
  g_norm_error = std::max(g_norm_error, model::normalization_error(s));
  ++g_norm_forwards;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  auto g = fixtures::random_graph(6, 2, 3, rng);
  model::HyperParams hp;
  hp.layers = 2;
  hp.hidden = 4;
  hp.heads_alpha = hp.heads_beta = hp.heads_gamma = 2;
  model::PreparedGraph pg(g);
  auto p = model::init_params(hp, 2, 3, 7);
  fixtures::jitter(p, rng, 0.1);
  const auto batch = metrics::all_indices(6);
  auto f = [&](diff::Tape& tape) {
    auto y = model::forward_on_tape(tape, pg, p, model::ForwardOptions{false, true});
    return model::bce_loss(y, g.labels(), batch);
  };
  auto named = p.named_tensors();
  const auto report = diff::grad_check(f, named, 1e-5, 1e-4);
  const double secs = seconds_since(t0);
  return {report.passed && report.max_rel_error < 1e-4 && secs < 60.0,
          fmt("6 nodes, 2 relations, L=2, %zu tensors: max rel err %.2e (< 1e-4, h=1e-5), %.1fs (< 60s)",
              report.tensors.size(), report.max_rel_error, secs)};
}

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index n = 1 + static_cast<Index>(rng() % 6);
    const Index m = 1 + static_cast<Index>(rng() % 3);
    const Index d = 1 + static_cast<Index>(rng() % 4);
    auto g = fixtures::random_graph(n, m, d, rng, 0.2 + 0.6 * static_cast<double>(rng() % 100) / 100.0);
    model::HyperParams hp;
    hp.layers = 1 + static_cast<Index>(rng() % 2);
    hp.hidden = rng() % 2 ? 4 : 2;
    hp.heads_alpha = 1 + static_cast<Index>(rng() % 2);
    hp.heads_beta = 1 + static_cast<Index>(rng() % 2);
    hp.heads_gamma = 1 + static_cast<Index>(rng() % 2);
    hp.literal_blocks = t % 4 == 3;
    auto p = model::init_params(hp, m, d, rng());
    fixtures::jitter(p, rng);
    auto state = model::forward(model::PreparedGraph(g), p);
    track(state);
    const auto ref = oracle::forward(g, p, model::AblationMode::Full);
    for (Index i = 0; i < n; ++i) worst = std::max(worst, std::abs(state.yhat[i] - ref.yhat[i]));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 60.0,
          fmt("100 random instances (n<=6, m<=3, L<=2): max |yhat - oracle| %.2e (<= 1e-10), %.1fs (< 60s)", worst, secs)};
}

Outcome dynamic_witness() {
  graph::MultiRelationGraph base(Matrix::Zero(4, 1), {0, 0, 1, 1}, {"r"}, {{{2, 0}, {2, 1}, {3, 0}, {3, 1}}});
  auto g = graph::add_self_loops(base);
  auto edges = model::make_edge_index(g.relation(0), 4);
  model::HyperParams hp;
  hp.layers = 1;
  hp.hidden = 2;
  hp.heads_alpha = hp.heads_beta = hp.heads_gamma = 1;
  auto p = model::init_params(hp, 1, 1, 0);
  auto& head = p.relation_heads[0][0][0];
  head.score_weight.value << 1, 0, 1, 0, 0, 1, 0, 1;
  head.score_vector.value << 1, 1;
  Matrix h(4, 2);
  h << 0, -5, -5, 0, 1, 0, 0, 1;
  diff::Tape tape;
  Matrix alpha;
  model::relation_attention(model::Binder{tape, false}, edges, p.relation_heads[0][0], tape.constant(h), hp, &alpha);
  auto coeff = [&](Index i, Index j) {
    for (Index e = 0; e < alpha.rows(); ++e) {
      if ((*edges.target)[e] == i && (*edges.source)[e] == j) return alpha(e, 0);
    }
    return -1.0;
  };
  const double a20 = coeff(2, 0), a21 = coeff(2, 1), a30 = coeff(3, 0), a31 = coeff(3, 1);
  return {a20 > a21 && a31 > a30,
          fmt("query 2: alpha(0)=%.4f > alpha(1)=%.4f; query 3: alpha(0)=%.4f < alpha(1)=%.4f", a20, a21, a30, a31)};
}

double pair_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

Outcome metric_oracles() {
  std::mt19937_64 rng(5);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng() % 49;
    const int levels = 1 + static_cast<int>(rng() % 10);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels) / levels;
      y[i] = static_cast<int>(rng() % 2);
    }
    const std::size_t pos = rng() % n;
    y[pos] = 1;
    y[(pos + 1 + rng() % (n - 1)) % n] = 0;
    if (metrics::auc(s, y, metrics::all_indices(n)) != pair_auc(s, y)) ++mismatches;
  }
  struct Case {
    std::vector<double> s;
    std::vector<int> y;
    double expected;  // from the hand-built confusion matrix
  };
  const std::vector<Case> cases{
      {{0.9, 0.8, 0.1, 0.3}, {1, 1, 0, 0}, 1.0},                         // all correct
      {{0.9, 0.2, 0.8, 0.1}, {1, 1, 0, 0}, 0.5},                         // tp=1 fn=1 fp=1 tn=1
      {{0.9, 0.9, 0.9}, {1, 1, 1}, 0.5},                                 // fraud F1 1, normal F1 0
      {{0.7, 0.6, 0.1, 0.4, 0.2}, {1, 0, 0, 1, 0}, (0.5 + 2.0 / 3.0) / 2},  // tp=1 fp=1 fn=1 tn=2
  };
  int f1_bad = 0;
  for (const auto& c : cases) {
    if (std::abs(metrics::f1_macro(c.s, c.y, metrics::all_indices(c.y.size())) - c.expected) > 1e-15) ++f1_bad;
  }
  return {mismatches == 0 && f1_bad == 0,
          fmt("AUC vs pair-count oracle: %d/1000 mismatches (exact equality, n<=50, ties); F1 worked examples: %d/%zu wrong",
              mismatches, f1_bad, cases.size())};
}

Outcome ablation_direction() {
  const auto t0 = Clock::now();
  double gap = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    graph::SyntheticSpec spec;
    spec.n = 2000;
    spec.m = 3;
    spec.d = 16;
    spec.fraud_ratio = 0.15;
    spec.informative_relation = 0;
    spec.homophily_per_relation = {0.9, 0.5, 0.5};
    spec.feature_signal = 0.5;
    spec.avg_degree = 8.0;
    spec.seed = seed;
    const auto g = graph::add_self_loops(graph::gen_synthetic(spec));
    const auto masks = graph::split_labels(g, 40.0, train::split_seed(seed, 0));
    double auc[2];
    for (int k = 0; k < 2; ++k) {
      train::TrainConfig cfg;
      cfg.hidden = 16;
      cfg.heads = 2;
      cfg.layers = 2;
      cfg.learning_rate = 0.01;
      cfg.weight_decay = 0.001;
      cfg.max_epochs = 150;
      cfg.patience = 50;
      cfg.seed = seed;
      cfg.ablation = k == 0 ? model::AblationMode::Full : model::AblationMode::NoRelTypes;
      auto out = train::train_model(g, masks, cfg);
      auto state = model::forward(model::PreparedGraph(g, cfg.ablation), out.params);
      track(state);
      auc[k] = out.result.test.auc;
    }
    gap += auc[0] - auc[1];
    per_seed += fmt(" %.3f/%.3f", auc[0], auc[1]);
  }
  gap /= 5.0;
  const double secs = seconds_since(t0);
  return {gap >= 0.05 && secs < 900.0,
          fmt("2000 nodes, 3 relations: mean test AUC gap Full - NoRelTypes %.4f (>= 0.05) over 5 seeds [full/norel:%s], %.0fs (< 900s)",
              gap, per_seed.c_str(), secs)};
}

Outcome learning_sanity() {
  graph::SyntheticSpec spec;
  spec.n = 200;
  spec.m = 2;
  spec.d = 8;
  spec.fraud_ratio = 0.2;
  spec.feature_signal = 8.0;
  spec.seed = 3;
  const auto g = graph::add_self_loops(graph::gen_synthetic(spec));
  auto masks = graph::split_labels(g, 40.0, 3);
  masks.val = masks.train;  // best epoch = best training F1
  train::TrainConfig cfg;
  cfg.hidden = 16;
  cfg.heads = 2;
  cfg.layers = 2;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  cfg.seed = 3;
  auto out = train::train_model(g, masks, cfg);
  auto state = model::forward(model::PreparedGraph(g), out.params);
  track(state);
  const double f1 = metrics::f1_macro(state.yhat, g.labels(), masks.train);
  return {f1 >= 0.99 && out.result.best_epoch <= 200,
          fmt("200-node separable graph: train F1-macro %.4f (>= 0.99) first reached by epoch %ld of 200", f1,
              static_cast<long>(out.result.best_epoch))};
}

Outcome yelpchi_reproduction() {
  const char* path = std::getenv("DRAG_YELPCHI");
  if (path == nullptr) return {true, "SKIP: set DRAG_YELPCHI to a prepared YelpChi container to run (not gated)"};
  const auto format = fs::path(path).extension() == ".json" ? graph::Format::ContainerJson : graph::Format::TriplesCsv;
  const auto g = graph::add_self_loops(graph::load_graph(path, format));
  train::TrainConfig base;
  const char* reps = std::getenv("DRAG_YELPCHI_REPS");
  base.repetitions = reps ? std::atoi(reps) : 10;
  const auto row = train::run_protocol(g, 40.0, train::Grid{}, base, static_cast<int>(std::thread::hardware_concurrency()));
  return {std::abs(row.auc.mean - 0.9233) <= 0.03,
          fmt("YelpChi p=40: F1 %s, AUC %s (target AUC 0.9233 +/- 0.03; not gated)", row.f1_macro.format().c_str(),
              row.auc.format().c_str())};
}

int run(const std::string& cmd) { return std::system(cmd.c_str()); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome cli_determinism(const std::string& cli) {
  if (cli.empty() || !fs::exists(cli)) return {false, "drag CLI binary not found (pass its path as the first argument)"};
  const fs::path dir = fs::temp_directory_path() / ("drag_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string q = "'" + cli + "'";
  const std::string d = "'" + dir.string() + "'";
  int rc = run(q + " gen-synthetic --n 300 --fraud-ratio 0.15 --seed 11 --out " + d + "/data > /dev/null");
  const std::string train = q + " train --dataset " + d + "/data/graph --p 40 --seed 5 --reps 2 --lr 0.01,0.001" +
                            " --weight-decay 0.001 --layers 1,2 --heads 2 --hidden 8 --max-epochs 15 --jobs 1";
  rc |= run(train + " --out " + d + "/a > /dev/null 2>&1");
  rc |= run(train + " --out " + d + "/b > /dev/null 2>&1");
  const std::string a = slurp(dir / "a" / "metrics.json");
  const std::string b = slurp(dir / "b" / "metrics.json");
  const bool same = rc == 0 && !a.empty() && a == b;
  fs::remove_all(dir);
  return {same, fmt("two `train --seed 5 --jobs 1` runs: metrics.json %s (%zu bytes), exit status %d",
                    same ? "bitwise identical" : "DIFFERENT", a.size(), rc)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  std::set<int> only;
  for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int c) { return only.empty() || only.count(c) > 0; };

  struct Criterion {
    int id;
    const char* name;
    bool gated;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", true, gradient_check},
      {2, "oracle equivalence", true, oracle_equivalence},
      {4, "dynamic-attention witness", true, dynamic_witness},
      {5, "metric oracles", true, metric_oracles},
      {6, "synthetic ablation direction", true, ablation_direction},
      {7, "learning sanity", true, learning_sanity},
      {8, "YelpChi reproduction", false, yelpchi_reproduction},
      {9, "CLI determinism", true, [&] { return cli_determinism(cli); }},
  };

  int failures = 0;
  auto report = [&](int id, const char* name, bool gated, const Outcome& o) {
    const char* status = o.pass ? "PASS" : (gated ? "FAIL" : "INFO");
    if (!gated && o.detail.rfind("SKIP", 0) == 0) status = "SKIP";
    std::printf("criterion %d %-4s %s: %s\n", id, status, name, o.detail.c_str());
    std::fflush(stdout);
    if (gated && !o.pass) ++failures;
  };

  for (const auto& c : criteria) {
    if (!wanted(c.id)) continue;
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(c.id, c.name, c.gated, o);
  }
  if (wanted(3)) {
    if (g_norm_forwards == 0) oracle_equivalence();
    report(3, "normalization invariants", true,
           {g_norm_forwards > 0 && g_norm_error <= 1e-9,
            fmt("max |sum - 1| over alpha, beta, gamma groups of %zu cached forwards: %.2e (<= 1e-9)", g_norm_forwards,
                g_norm_error)});
  }
  std::printf("%s: %d gated criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
