#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mccf/model.hpp"

namespace mccf {

struct TrainerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::int32_t epochs = 30;
  std::int32_t batch_size = 128;
  double learning_rate = 1e-3;
  double dropout_rate = 0.5;
  double lambda = 1e-4;  // L0 penalty weight
  std::uint64_t seed = 1;
  AdamConfig adam;
  // 0 disables early stopping; > 0 holds out val_fraction of the train
  // split internally and stops after that many epochs without improvement.
  std::int32_t early_stop_patience = 0;
  double val_fraction = 0.1;
  bool resample_each_epoch = true;

  void validate() const;
};

// Moment accumulators per parameter tensor, in registry order.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::int64_t step = 0;
};

// Standard Adam with bias correction. Throws TrainerError naming the tensor
// when a gradient entry is non-finite.
void adam_step(ModelParams& params, AdamState& state, double lr, const AdamConfig& cfg);

// Eq.-16 rating loss: (1 / (2n)) * sum (pred - target)^2.
double rating_loss(std::span<const double> preds, std::span<const double> targets);
double total_loss(double rating, double penalty, double lambda);

struct EpochStats {
  std::int32_t epoch = 0;
  double train_loss = 0.0;
  double val_rmse = 0.0;  // NaN when no validation holdout
  double val_mae = 0.0;
  double active_gate_fraction = 1.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::int32_t best_epoch = -1;  // 1-based; -1 when early stopping is off
  bool diverged = false;
  std::string divergence_reason;
};

struct Trained {
  Mccf model;
  TrainResult result;
};

// Full training loop: per-epoch neighborhood resampling, shuffled
// mini-batches, forward/backward on a reused tape, Adam updates. With early
// stopping the returned model is the best-validation snapshot; on divergence
// (non-finite loss or gradient) it is the last end-of-epoch snapshot.
Trained train(const BipartiteGraph& train_graph, FeatureMode mode, const ModelConfig& mcfg,
              const TrainConfig& tcfg, std::ostream* log = nullptr);

// "epoch,train_loss,val_rmse,val_mae,active_gate_fraction"
void write_history_csv(std::span<const EpochStats> history, std::ostream& out);

}  // namespace mccf
