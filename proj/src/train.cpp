#include "drag/train.hpp"

#include "drag/error.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace drag::train {

namespace {

using nlohmann::json;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix(a ^ splitmix(b)); }

struct AdamState {
  std::vector<diff::Matrix> first;
  std::vector<diff::Matrix> second;
  Index step = 0;
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_step(std::vector<model::ParamRef>& refs, AdamState& state, double lr) {
  if (state.first.empty()) {
    for (const auto& ref : refs) {
      state.first.push_back(diff::Matrix::Zero(ref.tensor->rows(), ref.tensor->cols()));
      state.second.push_back(diff::Matrix::Zero(ref.tensor->rows(), ref.tensor->cols()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < refs.size(); ++t) {
    diff::Tensor& p = *refs[t].tensor;
    if (p.grad.size() == 0) continue;
    state.first[t] = kBeta1 * state.first[t] + (1.0 - kBeta1) * p.grad;
    state.second[t] = kBeta2 * state.second[t] + (1.0 - kBeta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -=
        lr * (state.first[t].array() / c1) / ((state.second[t].array() / c2).sqrt() + kAdamEps);
  }
}

bool better(const TrialResult& a, const TrialResult& b) {
  if (a.val.f1_macro != b.val.f1_macro) return a.val.f1_macro > b.val.f1_macro;
  return a.config.grid_key() < b.config.grid_key();
}

}  // namespace

model::HyperParams TrainConfig::hyperparams() const {
  model::HyperParams hp;
  hp.layers = ablation == model::AblationMode::SingleLayer ? 1 : layers;
  hp.hidden = hidden;
  hp.heads_alpha = heads;
  hp.heads_beta = heads;
  hp.heads_gamma = heads;
  hp.literal_blocks = literal_blocks;
  return hp;
}

void TrainConfig::validate() const {
  hyperparams().validate();
  if (!(learning_rate >= 0.0)) throw ValidationError("learning rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be non-negative");
  if (batch_size < 1) throw ValidationError("batch size must be positive");
  if (max_epochs < 1) throw ValidationError("max epochs must be positive");
  if (patience < 1) throw ValidationError("patience must be positive");
  if (repetitions < 1) throw ValidationError("repetitions must be positive");
}

std::tuple<double, double, Index, Index> TrainConfig::grid_key() const {
  return {learning_rate, weight_decay, layers, heads};
}

diff::Var weight_penalty(diff::Tape& tape, model::DragParams& params, double lambda) {
  std::vector<diff::Var> terms;
  for (auto& ref : params.tensors()) {
    if (!ref.decayed) continue;
    diff::Var w = tape.parameter(*ref.tensor);
    terms.push_back(diff::sum(diff::mul(w, w)));
  }
  diff::Var total = diff::concat_rows(terms);
  return diff::scale(diff::sum(total), lambda);
}

TrainOutput train_model(const model::PreparedGraph& g, const graph::SplitMasks& masks, const TrainConfig& cfg) {
  cfg.validate();
  if (masks.train.empty()) throw ValidationError("empty training set");
  if (masks.val.empty()) throw ValidationError("empty validation set");
  if (g.mode() != cfg.ablation) throw ValidationError("prepared graph mode does not match the configuration");
  const auto start = std::chrono::steady_clock::now();

  const auto& labels = g.graph().labels();
  TrainOutput out;
  out.result.config = cfg;
  model::DragParams params =
      model::init_params(cfg.hyperparams(), g.num_relations(), g.graph().feature_dim(), mix(cfg.seed, 1));
  auto refs = params.tensors();
  AdamState adam;
  std::mt19937_64 shuffle_rng(mix(cfg.seed, 2));
  std::vector<Index> order = masks.train;

  bool have_best = false;
  for (Index epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::span<const Index> batch(order.data() + begin, end - begin);
      params.zero_grad();
      try {
        diff::Tape tape;
        diff::Var yhat = model::forward_on_tape(tape, g, params, model::ForwardOptions{false, true});
        std::size_t clamped = 0;
        model::LossOptions loss_options;
        loss_options.positive_term_only = cfg.positive_term_only_loss;
        diff::Var loss = model::bce_loss(yhat, labels, batch, loss_options, &clamped);
        out.result.clamped_predictions += clamped;
        diff::Var total = cfg.weight_decay > 0.0 ? diff::add(loss, weight_penalty(tape, params, cfg.weight_decay)) : loss;
        tape.backward(total);
        epoch_loss += loss.scalar();
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + " (learning rate " +
                           std::to_string(cfg.learning_rate) + "): " + e.what());
      }
      adam_step(refs, adam, cfg.learning_rate);
      ++out.result.optimizer_steps;
      for (const auto& ref : refs) {
        if (!ref.tensor->value.allFinite()) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": parameter " + ref.name +
                             " became non-finite");
        }
      }
    }
    out.result.loss_curve.push_back(epoch_loss);

    const model::ForwardState state = model::forward(g, params, false);
    const double val_f1 = metrics::f1_macro(state.yhat, labels, masks.val, cfg.threshold);
    out.result.val_f1_curve.push_back(val_f1);
    out.result.epochs_run = epoch;
    if (!have_best || val_f1 > out.result.val.f1_macro) {
      have_best = true;
      out.result.best_epoch = epoch;
      out.result.val = metrics::evaluate(state.yhat, labels, masks.val, cfg.threshold);
      out.result.test = masks.test.empty() ? metrics::EvalResult{}
                                           : metrics::evaluate(state.yhat, labels, masks.test, cfg.threshold);
      out.params = params;
    }
    if (epoch - out.result.best_epoch >= cfg.patience) break;
  }
  out.result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

TrainOutput train_model(const graph::MultiRelationGraph& g, const graph::SplitMasks& masks, const TrainConfig& cfg) {
  return train_model(model::PreparedGraph(g, cfg.ablation), masks, cfg);
}

Grid Grid::single(const TrainConfig& cfg) {
  return Grid{{cfg.learning_rate}, {cfg.weight_decay}, {cfg.layers}, {cfg.heads}};
}

std::vector<TrainConfig> expand_grid(const Grid& grid, const TrainConfig& base) {
  std::vector<TrainConfig> out;
  for (double lr : grid.learning_rates) {
    for (double wd : grid.weight_decays) {
      for (Index layers : grid.layers) {
        for (Index heads : grid.heads) {
          TrainConfig cfg = base;
          cfg.learning_rate = lr;
          cfg.weight_decay = wd;
          cfg.layers = base.ablation == model::AblationMode::SingleLayer ? 1 : layers;
          cfg.heads = heads;
          const bool seen = std::any_of(out.begin(), out.end(),
                                        [&](const TrainConfig& c) { return c.grid_key() == cfg.grid_key(); });
          if (!seen) out.push_back(cfg);
        }
      }
    }
  }
  return out;
}

std::uint64_t trial_seed(std::uint64_t master, Index repetition, const TrainConfig& cfg) {
  std::uint64_t s = mix(master, static_cast<std::uint64_t>(repetition) + 0x1000);
  s = mix(s, std::bit_cast<std::uint64_t>(cfg.learning_rate));
  s = mix(s, std::bit_cast<std::uint64_t>(cfg.weight_decay));
  s = mix(s, static_cast<std::uint64_t>(cfg.layers));
  return mix(s, static_cast<std::uint64_t>(cfg.heads));
}

std::uint64_t split_seed(std::uint64_t master, Index repetition) {
  return mix(master, static_cast<std::uint64_t>(repetition));
}

GridResult grid_search(const graph::MultiRelationGraph& g, const graph::SplitMasks& masks, const Grid& grid,
                       const TrainConfig& base, Index repetition, int jobs) {
  std::vector<TrainConfig> configs = expand_grid(grid, base);
  if (configs.empty()) throw ValidationError("empty hyperparameter grid");
  for (auto& cfg : configs) cfg.seed = trial_seed(base.seed, repetition, cfg);
  const model::PreparedGraph prepared(g, base.ablation);

  std::vector<std::optional<TrainOutput>> results(configs.size());
  std::vector<std::string> failures(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        results[i] = train_model(prepared, masks, configs[i]);
      } catch (const NumericError& e) {
        failures[i] = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(configs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  GridResult out;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (!results[i]) {
      ++out.diverged;
      continue;
    }
    out.trials.push_back(results[i]->result);
    if (!best || better(results[i]->result, results[*best]->result)) best = i;
  }
  if (!best) throw NumericError("all " + std::to_string(configs.size()) + " grid trials diverged; first: " + failures[0]);
  out.best = results[*best]->result;
  out.best_params = std::move(results[*best]->params);
  return out;
}

std::size_t select_best(const std::vector<TrialResult>& trials) {
  if (trials.empty()) throw ValidationError("select_best: no trials");
  std::size_t best = 0;
  for (std::size_t i = 1; i < trials.size(); ++i) {
    if (better(trials[i], trials[best])) best = i;
  }
  return best;
}

std::string Summary::format() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f±%.4f", mean, std);
  return buf;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

ProtocolRow run_protocol(const graph::MultiRelationGraph& g, double percent, const Grid& grid, const TrainConfig& base,
                         int jobs) {
  base.validate();
  ProtocolRow row;
  row.label = base.ablation == model::AblationMode::Full ? "DRAG" : model::mode_name(base.ablation);
  row.percent = percent;
  std::vector<double> f1s;
  std::vector<double> aucs;
  for (Index rep = 0; rep < base.repetitions; ++rep) {
    const auto masks = graph::split_labels(g, percent, split_seed(base.seed, base.resample_split ? rep : 0));
    GridResult gr = grid_search(g, masks, grid, base, rep, jobs);
    f1s.push_back(gr.best.test.f1_macro);
    aucs.push_back(gr.best.test.auc);
    row.repetitions.push_back(std::move(gr.best));
    row.params.push_back(std::move(gr.best_params));
  }
  row.f1_macro = summarize(f1s);
  row.auc = summarize(aucs);
  return row;
}

std::vector<ProtocolRow> run_ablations(const graph::MultiRelationGraph& g, double percent, const Grid& grid,
                                       const TrainConfig& base, int jobs,
                                       const std::vector<model::AblationMode>& modes) {
  std::vector<ProtocolRow> rows;
  for (auto mode : modes) {
    TrainConfig cfg = base;
    cfg.ablation = mode;
    rows.push_back(run_protocol(g, percent, grid, cfg, jobs));
  }
  return rows;
}

json to_json(const TrainConfig& cfg) {
  return json{{"learning_rate", cfg.learning_rate},
              {"weight_decay", cfg.weight_decay},
              {"layers", cfg.layers},
              {"heads", cfg.heads},
              {"batch_size", cfg.batch_size},
              {"max_epochs", cfg.max_epochs},
              {"hidden", cfg.hidden},
              {"patience", cfg.patience},
              {"seed", cfg.seed},
              {"ablation", model::mode_name(cfg.ablation)},
              {"repetitions", cfg.repetitions},
              {"threshold", cfg.threshold},
              {"resample_split", cfg.resample_split},
              {"literal_blocks", cfg.literal_blocks},
              {"positive_term_only_loss", cfg.positive_term_only_loss}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.layers = j.value("layers", cfg.layers);
  cfg.heads = j.value("heads", cfg.heads);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.hidden = j.value("hidden", cfg.hidden);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.ablation = model::parse_mode(j.value("ablation", model::mode_name(cfg.ablation)));
  cfg.repetitions = j.value("repetitions", cfg.repetitions);
  cfg.threshold = j.value("threshold", cfg.threshold);
  cfg.resample_split = j.value("resample_split", cfg.resample_split);
  cfg.literal_blocks = j.value("literal_blocks", cfg.literal_blocks);
  cfg.positive_term_only_loss = j.value("positive_term_only_loss", cfg.positive_term_only_loss);
  return cfg;
}

json to_json(const metrics::EvalResult& r) {
  return json{{"f1_macro", r.f1_macro},
              {"auc", r.auc},
              {"n_eval", r.n_eval},
              {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}}};
}

json to_json(const TrialResult& r, bool include_timing) {
  json j{{"config", to_json(r.config)},
         {"best_epoch", r.best_epoch},
         {"epochs_run", r.epochs_run},
         {"optimizer_steps", r.optimizer_steps},
         {"val", to_json(r.val)},
         {"test", to_json(r.test)},
         {"loss_curve", r.loss_curve},
         {"val_f1_curve", r.val_f1_curve},
         {"clamped_predictions", r.clamped_predictions}};
  if (include_timing) j["wall_seconds"] = r.wall_seconds;
  return j;
}

json to_json(const ProtocolRow& row, bool include_timing) {
  json reps = json::array();
  for (const auto& r : row.repetitions) reps.push_back(to_json(r, include_timing));
  return json{{"label", row.label},
              {"percent", row.percent},
              {"f1_macro", {{"mean", row.f1_macro.mean}, {"std", row.f1_macro.std}, {"text", row.f1_macro.format()}}},
              {"auc", {{"mean", row.auc.mean}, {"std", row.auc.std}, {"text", row.auc.format()}}},
              {"repetitions", std::move(reps)}};
}

std::string format_table(const std::vector<ProtocolRow>& rows) {
  std::size_t label_width = 5;
  for (const auto& r : rows) label_width = std::max(label_width, r.label.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(label_width)) << "model" << "  " << std::setw(6) << "p%"
      << "  " << std::setw(16) << "F1-macro" << "  " << "AUC" << '\n';
  for (const auto& r : rows) {
    char pct[16];
    std::snprintf(pct, sizeof(pct), "%g", r.percent);
    // The ± sign is two bytes in UTF-8; pad by display width.
    const std::string f1 = r.f1_macro.format();
    out << std::left << std::setw(static_cast<int>(label_width)) << r.label << "  " << std::setw(6) << pct << "  "
        << f1 << std::string(f1.size() < 17 ? 17 - f1.size() + 1 : 2, ' ') << r.auc.format() << '\n';
  }
  return out.str();
}

}  // namespace drag::train
