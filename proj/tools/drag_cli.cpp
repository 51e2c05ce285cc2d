// drag: command-line front end for training, evaluation, ablations, attention
// export, synthetic data and gradient checks.

#include "drag/error.hpp"
#include "drag/graph.hpp"
#include "drag/metrics.hpp"
#include "drag/model.hpp"
#include "drag/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using drag::diff::Index;

namespace {

struct Options {
  std::string dataset;
  std::string format = "auto";
  double p = 40.0;
  std::uint64_t seed = 0;
  Index reps = 10;
  std::vector<double> lr{0.01, 0.001};
  std::vector<double> weight_decay{0.001, 0.0001};
  std::vector<Index> layers{1, 2, 3};
  std::vector<Index> heads{2, 8};
  std::vector<std::string> ablation;
  std::string out;
  int jobs = 0;

  // command-specific
  std::string config;
  std::string checkpoint;
  bool dedup = false;
  Index hidden = 64;
  Index max_epochs = 1000;
  Index patience = 100;
  Index batch_size = 1024;
  bool literal_blocks = false;

  Index n = 1000;
  Index m = 3;
  Index d = 16;
  double fraud_ratio = 0.15;
  Index informative = 0;
  std::vector<double> homophily;
  double avg_degree = 8.0;
  double signal = 1.0;
  std::string spec;
};

std::string now_stamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  localtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

std::string hash_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 8);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw drag::Error("cannot write " + path.string());
  out << text;
  if (!out) throw drag::Error("failed writing " + path.string());
}

/// Output directory: --out if given, else runs/<timestamp>-<config-hash>/.
/// The resolved config is echoed to stderr and saved as config.json.
fs::path prepare_out(const std::string& requested, json& config) {
  fs::path dir = requested.empty() ? fs::path("runs") / (now_stamp() + "-" + hash_hex(config.dump())) : fs::path(requested);
  fs::create_directories(dir);
  config["out"] = dir.string();
  std::cerr << "config " << config.dump() << "\n";
  write_text(dir / "config.json", config.dump(2) + "\n");
  return dir;
}

drag::graph::Format resolve_format(const std::string& name, const std::string& path) {
  if (name != "auto") return drag::graph::parse_format(name);
  return fs::is_regular_file(path) && fs::path(path).extension() == ".json" ? drag::graph::Format::ContainerJson
                                                                            : drag::graph::Format::TriplesCsv;
}

drag::graph::MultiRelationGraph load_dataset(const Options& o, drag::graph::Format format) {
  auto g = drag::graph::load_graph(o.dataset, format);
  if (o.dedup) {
    auto res = drag::graph::deduplicate_nodes(g);
    if (!res.removed.empty()) std::cerr << "removed " << res.removed.size() << " duplicated nodes\n";
    g = std::move(res.graph);
  }
  return drag::graph::add_self_loops(g);
}

int resolve_jobs(int requested) {
  const char* env = std::getenv("DRAG_DETERMINISM");
  if (env != nullptr && std::string(env) == "1") return 1;
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

drag::train::TrainConfig base_config(const Options& o) {
  drag::train::TrainConfig cfg;
  cfg.seed = o.seed;
  cfg.repetitions = o.reps;
  cfg.hidden = o.hidden;
  cfg.max_epochs = o.max_epochs;
  cfg.patience = o.patience;
  cfg.batch_size = o.batch_size;
  cfg.literal_blocks = o.literal_blocks;
  cfg.learning_rate = o.lr.front();
  cfg.weight_decay = o.weight_decay.front();
  cfg.layers = o.layers.front();
  cfg.heads = o.heads.front();
  if (!o.ablation.empty()) cfg.ablation = drag::model::parse_mode(o.ablation.front());
  return cfg;
}

drag::train::Grid make_grid(const Options& o) { return {o.lr, o.weight_decay, o.layers, o.heads}; }

json grid_json(const drag::train::Grid& g) {
  return json{{"learning_rates", g.learning_rates}, {"weight_decays", g.weight_decays}, {"layers", g.layers},
              {"heads", g.heads}};
}

json resolved_config(const std::string& command, const Options& o, drag::graph::Format format, int jobs) {
  auto cfg = base_config(o);
  for (auto& t : expand_grid(make_grid(o), cfg)) t.validate();
  json j{{"command", command},
         {"dataset", o.dataset},
         {"format", drag::graph::format_name(format)},
         {"dedup", o.dedup},
         {"p", o.p},
         {"jobs", jobs},
         {"grid", grid_json(make_grid(o))},
         {"train", drag::train::to_json(cfg)}};
  if (command == "ablate") {
    std::vector<std::string> modes = o.ablation;
    if (modes.empty()) modes = {"full", "no-rel-types", "no-layer-agg", "single-layer"};
    for (const auto& m : modes) drag::model::parse_mode(m);
    j["ablations"] = modes;
  }
  return j;
}

/// Applies a config echo written by an earlier run; explicitly given flags win.
void apply_config_file(const std::string& path, Options& o, const CLI::App& sub) {
  std::ifstream in(path);
  if (!in) throw drag::ValidationError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw drag::ValidationError("config " + path + ": " + e.what());
  }
  auto given = [&](const char* flag) { return sub.count(flag) > 0; };
  if (!given("--dataset") && j.contains("dataset")) o.dataset = j["dataset"];
  if (!given("--format") && j.contains("format")) o.format = j["format"];
  if (!given("--p") && j.contains("p")) o.p = j["p"];
  if (j.contains("dedup") && !given("--dedup")) o.dedup = j["dedup"];
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    if (!given("--lr")) o.lr = g.value("learning_rates", o.lr);
    if (!given("--weight-decay")) o.weight_decay = g.value("weight_decays", o.weight_decay);
    if (!given("--layers")) o.layers = g.value("layers", o.layers);
    if (!given("--heads")) o.heads = g.value("heads", o.heads);
  }
  if (j.contains("train")) {
    const auto cfg = drag::train::config_from_json(j["train"]);
    if (!given("--seed")) o.seed = cfg.seed;
    if (!given("--reps")) o.reps = cfg.repetitions;
    if (!given("--hidden")) o.hidden = cfg.hidden;
    if (!given("--max-epochs")) o.max_epochs = cfg.max_epochs;
    if (!given("--patience")) o.patience = cfg.patience;
    if (!given("--batch-size")) o.batch_size = cfg.batch_size;
    if (!given("--literal-blocks")) o.literal_blocks = cfg.literal_blocks;
    if (!given("--ablation") && !j.contains("ablations")) o.ablation = {drag::model::mode_name(cfg.ablation)};
  }
  if (!given("--ablation") && j.contains("ablations")) o.ablation = j["ablations"].get<std::vector<std::string>>();
}

json checkpoint_meta(const json& config, Index repetition, std::uint64_t split) {
  return json{{"config", config}, {"repetition", repetition}, {"split_seed", split}};
}

int cmd_train(const Options& o, const std::string& command) {
  const auto format = resolve_format(o.format, o.dataset);
  const int jobs = resolve_jobs(o.jobs);
  json config = resolved_config(command, o, format, jobs);
  const auto g = load_dataset(o, format);
  const fs::path dir = prepare_out(o.out, config);
  std::cerr << "writing to " << dir.string() << "\n";

  const auto base = base_config(o);
  const auto grid = make_grid(o);
  std::vector<drag::train::ProtocolRow> rows;
  if (command == "train") {
    rows.push_back(drag::train::run_protocol(g, o.p, grid, base, jobs));
  } else {
    std::vector<drag::model::AblationMode> modes;
    for (const auto& name : config["ablations"]) modes.push_back(drag::model::parse_mode(name));
    rows = drag::train::run_ablations(g, o.p, grid, base, jobs, modes);
  }

  json metrics = json::array();
  json timing = json::array();
  for (const auto& row : rows) {
    metrics.push_back(drag::train::to_json(row));
    json t = json::array();
    for (const auto& r : row.repetitions) t.push_back(r.wall_seconds);
    timing.push_back(json{{"label", row.label}, {"wall_seconds", t}});
  }
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  write_text(dir / "timing.json", timing.dump(2) + "\n");
  const std::string table = drag::train::format_table(rows);
  write_text(dir / "table.txt", table);

  fs::create_directories(dir / "checkpoints");
  for (auto& row : rows) {
    for (std::size_t r = 0; r < row.params.size(); ++r) {
      json meta = checkpoint_meta(config, static_cast<Index>(r),
                                  drag::train::split_seed(base.seed, base.resample_split ? static_cast<Index>(r) : 0));
      meta["ablation"] = drag::model::mode_name(row.repetitions[r].config.ablation);
      meta["trial"] = drag::train::to_json(row.repetitions[r].config);
      const std::string name = drag::model::mode_name(row.repetitions[r].config.ablation) + "-rep" + std::to_string(r) + ".ckpt";
      drag::model::save_checkpoint(dir / "checkpoints" / name, row.params[r], meta.dump());
    }
  }
  std::cout << table;
  return 0;
}

struct Loaded {
  drag::model::Checkpoint ck;
  json meta;
  drag::model::AblationMode mode = drag::model::AblationMode::Full;
};

Loaded load_ckpt(const Options& o) {
  if (o.checkpoint.empty()) throw drag::ValidationError("--checkpoint is required");
  Loaded l{drag::model::load_checkpoint(o.checkpoint), {}, drag::model::AblationMode::Full};
  l.meta = json::parse(l.ck.metadata_json, nullptr, false);
  if (l.meta.is_discarded()) l.meta = json::object();
  if (!o.ablation.empty()) {
    l.mode = drag::model::parse_mode(o.ablation.front());
  } else if (l.meta.contains("ablation")) {
    l.mode = drag::model::parse_mode(l.meta["ablation"]);
  }
  return l;
}

int cmd_evaluate(const Options& o, const CLI::App& sub) {
  auto l = load_ckpt(o);
  const auto format = resolve_format(o.format, o.dataset);
  const auto g = load_dataset(o, format);
  // Split defaults come from the checkpoint so evaluation sees the training split.
  double p = o.p;
  std::uint64_t split = drag::train::split_seed(o.seed, 0);
  if (l.meta.contains("config") && !sub.count("--p")) p = l.meta["config"].value("p", p);
  if (l.meta.contains("split_seed") && !sub.count("--seed")) split = l.meta["split_seed"].get<std::uint64_t>();
  const auto masks = drag::graph::split_labels(g, p, split);
  const auto state = drag::model::forward(drag::model::PreparedGraph(g, l.mode), l.ck.params, false);
  const auto all = drag::metrics::all_indices(state.yhat.size());

  json config{{"command", "evaluate"},  {"dataset", o.dataset},       {"format", drag::graph::format_name(format)},
              {"dedup", o.dedup},       {"checkpoint", o.checkpoint}, {"p", p},
              {"split_seed", split},    {"ablation", drag::model::mode_name(l.mode)}};
  const fs::path dir = prepare_out(o.out, config);
  json result{{"train", drag::train::to_json(drag::metrics::evaluate(state.yhat, g.labels(), masks.train))},
              {"val", drag::train::to_json(drag::metrics::evaluate(state.yhat, g.labels(), masks.val))},
              {"test", drag::train::to_json(drag::metrics::evaluate(state.yhat, g.labels(), masks.test))},
              {"all", drag::train::to_json(drag::metrics::evaluate(state.yhat, g.labels(), all))}};
  write_text(dir / "eval.json", result.dump(2) + "\n");
  std::cout << result.dump(2) << "\n";
  return 0;
}

int cmd_export(const Options& o) {
  auto l = load_ckpt(o);
  const auto format = resolve_format(o.format, o.dataset);
  const auto g = load_dataset(o, format);
  const auto state = drag::model::forward(drag::model::PreparedGraph(g, l.mode), l.ck.params, true);
  json config{{"command", "export-attention"}, {"dataset", o.dataset},       {"format", drag::graph::format_name(format)},
              {"dedup", o.dedup},              {"checkpoint", o.checkpoint}, {"ablation", drag::model::mode_name(l.mode)}};
  const fs::path dir = prepare_out(o.out, config);
  write_text(dir / "alpha.csv", drag::model::export_attention(state, drag::model::AttentionKind::Alpha));
  write_text(dir / "beta.csv", drag::model::export_attention(state, drag::model::AttentionKind::Beta));
  if (!state.gamma.empty()) {
    write_text(dir / "gamma.csv", drag::model::export_attention(state, drag::model::AttentionKind::Gamma));
  } else {
    std::cerr << "no layer aggregation in " << drag::model::mode_name(l.mode) << " mode; gamma.csv skipped\n";
  }
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_gen(const Options& o, const CLI::App& sub) {
  drag::graph::SyntheticSpec spec;
  if (!o.spec.empty()) spec = drag::graph::load_synthetic_spec(o.spec);
  if (o.spec.empty() || sub.count("--n")) spec.n = o.n;
  if (o.spec.empty() || sub.count("--m")) spec.m = o.m;
  if (o.spec.empty() || sub.count("--d")) spec.d = o.d;
  if (o.spec.empty() || sub.count("--fraud-ratio")) spec.fraud_ratio = o.fraud_ratio;
  if (o.spec.empty() || sub.count("--informative")) spec.informative_relation = o.informative;
  if (o.spec.empty() || sub.count("--homophily")) spec.homophily_per_relation = o.homophily;
  if (o.spec.empty() || sub.count("--avg-degree")) spec.avg_degree = o.avg_degree;
  if (o.spec.empty() || sub.count("--signal")) spec.feature_signal = o.signal;
  if (o.spec.empty() || sub.count("--seed")) spec.seed = o.seed;
  drag::graph::validate(spec);
  const auto format = o.format == "auto" ? drag::graph::Format::TriplesCsv : drag::graph::parse_format(o.format);

  json config{{"command", "gen-synthetic"},
              {"format", drag::graph::format_name(format)},
              {"spec",
               {{"n", spec.n},
                {"m", spec.m},
                {"d", spec.d},
                {"fraud_ratio", spec.fraud_ratio},
                {"informative_relation", spec.informative_relation},
                {"homophily_per_relation", spec.homophily_per_relation},
                {"seed", spec.seed},
                {"avg_degree", spec.avg_degree},
                {"feature_signal", spec.feature_signal}}}};
  const auto g = drag::graph::gen_synthetic(spec);
  const fs::path dir = prepare_out(o.out, config);
  const fs::path target = format == drag::graph::Format::TriplesCsv ? dir / "graph" : dir / "graph.json";
  drag::graph::save_graph(g, target, format);
  std::cout << target.string() << "\n";
  return 0;
}

int cmd_grad_check(const Options& o, const CLI::App& sub) {
  drag::graph::SyntheticSpec spec;
  spec.n = 6;
  spec.m = 2;
  spec.d = 3;
  spec.fraud_ratio = 0.5;
  spec.avg_degree = 2.0;
  spec.seed = o.seed;
  const auto g = drag::graph::add_self_loops(drag::graph::gen_synthetic(spec));

  drag::model::HyperParams hp;
  hp.layers = sub.count("--layers") ? o.layers.front() : 2;
  hp.heads_alpha = hp.heads_beta = hp.heads_gamma = sub.count("--heads") ? o.heads.front() : 2;
  hp.hidden = sub.count("--hidden") ? o.hidden : 4;
  hp.literal_blocks = o.literal_blocks;
  hp.validate();
  const auto mode = o.ablation.empty() ? drag::model::AblationMode::Full : drag::model::parse_mode(o.ablation.front());
  const drag::model::PreparedGraph pg(g, mode);
  auto params = drag::model::init_params(hp, pg.num_relations(), g.feature_dim(), o.seed);
  // Move biases off zero so their gradients are exercised at a generic point.
  std::mt19937_64 rng(o.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> jitter(0.0, 0.1);
  for (auto& ref : params.tensors()) {
    for (Index i = 0; i < ref.tensor->value.size(); ++i) ref.tensor->value.data()[i] += jitter(rng);
  }
  const double decay = sub.count("--weight-decay") ? o.weight_decay.front() : 0.0;
  const auto batch = drag::metrics::all_indices(static_cast<std::size_t>(g.num_nodes()));
  auto f = [&](drag::diff::Tape& tape) {
    auto y = drag::model::forward_on_tape(tape, pg, params, drag::model::ForwardOptions{false, true});
    auto loss = drag::model::bce_loss(y, g.labels(), batch);
    return decay > 0.0 ? drag::diff::add(loss, drag::train::weight_penalty(tape, params, decay)) : loss;
  };
  const auto start = std::chrono::steady_clock::now();
  auto named = params.named_tensors();
  const auto report = drag::diff::grad_check(f, named, 1e-5, 1e-4);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  json tensors = json::array();
  for (const auto& e : report.tensors) {
    tensors.push_back(json{{"name", e.name}, {"count", e.count}, {"max_rel_error", e.max_rel_error},
                           {"mean_rel_error", e.mean_rel_error}});
  }
  json out{{"seed", o.seed},       {"nodes", g.num_nodes()},
           {"relations", g.num_relations()}, {"layers", hp.layers},
           {"h", 1e-5},            {"tolerance", report.tolerance},
           {"floor", report.floor}, {"max_rel_error", report.max_rel_error},
           {"passed", report.passed}, {"tensors", tensors}};
  if (!o.out.empty()) {
    json config{{"command", "grad-check"}, {"seed", o.seed}, {"layers", hp.layers}, {"heads", hp.heads_alpha},
                {"hidden", hp.hidden},     {"ablation", drag::model::mode_name(mode)}, {"weight_decay", decay}};
    const fs::path dir = prepare_out(o.out, config);
    write_text(dir / "grad_check.json", out.dump(2) + "\n");
  }
  std::printf("grad-check: %zu tensors, max relative error %.3e (tolerance %.0e), %.1fs: %s\n", report.tensors.size(),
              report.max_rel_error, report.tolerance, seconds, report.passed ? "PASS" : "FAIL");
  return report.passed ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DRAG: dynamic relation-attentive graph neural network for fraud detection"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool training) {
    sub->add_option("--dataset", o.dataset, "graph directory (triples-csv) or JSON container");
    sub->add_option("--format", o.format, "auto, triples-csv or container-json")
        ->check(CLI::IsMember({"auto", "triples-csv", "container-json"}));
    sub->add_option("--p", o.p, "percentage of labeled training nodes")->check(CLI::Range(0.0, 100.0));
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out, "output directory (default runs/<timestamp>-<config-hash>/)");
    sub->add_flag("--dedup", o.dedup, "remove nodes with duplicated feature rows before self-loops");
    sub->add_option("--ablation", o.ablation, "full, no-rel-types, no-layer-agg, single-layer")->delimiter(',');
    if (!training) return;
    sub->add_option("--reps", o.reps, "repetitions with fresh splits")->check(CLI::PositiveNumber);
    sub->add_option("--lr", o.lr, "learning rates searched")->delimiter(',');
    sub->add_option("--weight-decay", o.weight_decay, "weight decays searched")->delimiter(',');
    sub->add_option("--layers", o.layers, "layer counts searched")->delimiter(',');
    sub->add_option("--heads", o.heads, "head counts searched")->delimiter(',');
    sub->add_option("--jobs", o.jobs, "worker threads (DRAG_DETERMINISM=1 forces 1)")->check(CLI::NonNegativeNumber);
    sub->add_option("--hidden", o.hidden, "hidden width d'");
    sub->add_option("--max-epochs", o.max_epochs, "epoch cap");
    sub->add_option("--patience", o.patience, "early-stopping patience in epochs");
    sub->add_option("--batch-size", o.batch_size, "training nodes per optimizer step");
    sub->add_flag("--literal-blocks", o.literal_blocks, "run L+1 relation blocks");
    sub->add_option("--config", o.config, "config.json of an earlier run; explicit flags override it");
  };

  auto* train = app.add_subcommand("train", "repeated grid search and test metrics (mean±std)");
  add_common(train, true);
  auto* ablate = app.add_subcommand("ablate", "run the four ablation modes under identical splits");
  add_common(ablate, true);
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a dataset split");
  add_common(evaluate, false);
  evaluate->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  auto* exporter = app.add_subcommand("export-attention", "write alpha, beta and gamma coefficients as CSV");
  add_common(exporter, false);
  exporter->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();

  auto* gen = app.add_subcommand("gen-synthetic", "write a planted-signal synthetic graph");
  gen->add_option("--seed", o.seed, "generator seed");
  gen->add_option("--format", o.format, "triples-csv or container-json")
      ->check(CLI::IsMember({"auto", "triples-csv", "container-json"}));
  gen->add_option("--out", o.out, "output directory");
  gen->add_option("--spec", o.spec, "key = value spec file; flags override its entries");
  gen->add_option("--n", o.n, "nodes");
  gen->add_option("--m", o.m, "relations");
  gen->add_option("--d", o.d, "feature dimension");
  gen->add_option("--fraud-ratio", o.fraud_ratio, "fraction of fraud labels");
  gen->add_option("--informative", o.informative, "index of the informative relation");
  gen->add_option("--homophily", o.homophily, "per-relation homophily")->delimiter(',');
  gen->add_option("--avg-degree", o.avg_degree, "mean degree per relation");
  gen->add_option("--signal", o.signal, "distance between class feature means");

  auto* grad = app.add_subcommand("grad-check", "finite-difference check of the full model on a 6-node graph");
  grad->add_option("--seed", o.seed, "seed for graph and parameters");
  grad->add_option("--layers", o.layers, "layers")->expected(1);
  grad->add_option("--heads", o.heads, "heads")->expected(1);
  grad->add_option("--hidden", o.hidden, "hidden width");
  grad->add_option("--weight-decay", o.weight_decay, "include the L2 penalty with this lambda")->expected(1);
  grad->add_option("--ablation", o.ablation, "ablation mode")->expected(1);
  grad->add_flag("--literal-blocks", o.literal_blocks, "run L+1 relation blocks");
  grad->add_option("--out", o.out, "write grad_check.json and config.json here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (!o.config.empty()) apply_config_file(o.config, o, *sub);
    if ((name == "train" || name == "ablate" || name == "evaluate" || name == "export-attention") && o.dataset.empty()) {
      throw drag::ValidationError("--dataset is required for " + name);
    }
    if (name == "train" || name == "ablate") return cmd_train(o, name);
    if (name == "evaluate") return cmd_evaluate(o, *sub);
    if (name == "export-attention") return cmd_export(o);
    if (name == "gen-synthetic") return cmd_gen(o, *sub);
    return cmd_grad_check(o, *sub);
  } catch (const drag::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
