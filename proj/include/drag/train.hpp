#pragma once

#include "drag/graph.hpp"
#include "drag/metrics.hpp"
#include "drag/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace drag::train {

using diff::Index;

struct TrainConfig {
  double learning_rate = 0.01;
  double weight_decay = 0.001;
  Index layers = 2;
  Index heads = 2;  // shared by the three attention stages
  Index batch_size = 1024;
  Index max_epochs = 1000;
  Index hidden = 64;
  Index patience = 100;
  std::uint64_t seed = 0;
  model::AblationMode ablation = model::AblationMode::Full;
  Index repetitions = 10;
  double threshold = 0.5;
  bool resample_split = true;     // each repetition draws a fresh split
  bool literal_blocks = false;
  bool positive_term_only_loss = false;

  model::HyperParams hyperparams() const;
  void validate() const;
  /// Key used for grid tie-breaking: (learning_rate, weight_decay, layers, heads).
  std::tuple<double, double, Index, Index> grid_key() const;
};

struct TrialResult {
  TrainConfig config;
  Index best_epoch = 0;
  Index epochs_run = 0;
  Index optimizer_steps = 0;
  metrics::EvalResult val;
  metrics::EvalResult test;
  std::vector<double> loss_curve;    // summed batch loss (without decay) per epoch
  std::vector<double> val_f1_curve;
  std::size_t clamped_predictions = 0;
  double wall_seconds = 0.0;
};

struct TrainOutput {
  model::DragParams params;  // from the best validation epoch
  TrialResult result;
};

/// Adam with L2 weight decay on weights and score vectors, full-graph forward
/// per batch, early stopping on validation F1-macro.
TrainOutput train_model(const model::PreparedGraph& g, const graph::SplitMasks& masks, const TrainConfig& cfg);
TrainOutput train_model(const graph::MultiRelationGraph& g, const graph::SplitMasks& masks, const TrainConfig& cfg);

/// λ Σ ‖W‖² over decayed tensors, recorded on the tape.
diff::Var weight_penalty(diff::Tape& tape, model::DragParams& params, double lambda);

struct Grid {
  std::vector<double> learning_rates{0.01, 0.001};
  std::vector<double> weight_decays{0.001, 0.0001};
  std::vector<Index> layers{1, 2, 3};
  std::vector<Index> heads{2, 8};

  static Grid single(const TrainConfig& cfg);
};

/// Distinct configurations in grid order; SingleLayer collapses layers to 1.
std::vector<TrainConfig> expand_grid(const Grid& grid, const TrainConfig& base);

/// Seed for one trial, derived from the master seed, the repetition and the
/// configuration values (not its position), so ablations and protocol runs agree.
std::uint64_t trial_seed(std::uint64_t master, Index repetition, const TrainConfig& cfg);
std::uint64_t split_seed(std::uint64_t master, Index repetition);

/// Index of the best trial: highest validation F1-macro, ties to the smallest grid key.
std::size_t select_best(const std::vector<TrialResult>& trials);

struct GridResult {
  TrialResult best;
  model::DragParams best_params;
  std::vector<TrialResult> trials;  // grid order; diverged trials omitted
  std::size_t diverged = 0;
};

/// Trains every configuration (on `jobs` worker threads) and keeps the one with
/// the best validation F1-macro; ties go to the smallest grid key.
GridResult grid_search(const graph::MultiRelationGraph& g, const graph::SplitMasks& masks, const Grid& grid,
                       const TrainConfig& base, Index repetition = 0, int jobs = 1);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation

  std::string format() const;  // "0.7988±0.0067"
};

Summary summarize(const std::vector<double>& values);

struct ProtocolRow {
  std::string label;
  double percent = 0.0;
  Summary f1_macro;
  Summary auc;
  std::vector<TrialResult> repetitions;
  std::vector<model::DragParams> params;  // best parameters of each repetition
};

ProtocolRow run_protocol(const graph::MultiRelationGraph& g, double percent, const Grid& grid, const TrainConfig& base,
                         int jobs = 1);

std::vector<ProtocolRow> run_ablations(const graph::MultiRelationGraph& g, double percent, const Grid& grid,
                                       const TrainConfig& base, int jobs = 1,
                                       const std::vector<model::AblationMode>& modes = {
                                           model::AblationMode::Full, model::AblationMode::NoRelTypes,
                                           model::AblationMode::NoLayerAgg, model::AblationMode::SingleLayer});

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const metrics::EvalResult& r);
/// Timing is left out unless requested so that repeated runs serialize identically.
nlohmann::json to_json(const TrialResult& r, bool include_timing = false);
nlohmann::json to_json(const ProtocolRow& row, bool include_timing = false);

/// Aligned text table; one row per protocol row with F1 and AUC columns.
std::string format_table(const std::vector<ProtocolRow>& rows);

}  // namespace drag::train
