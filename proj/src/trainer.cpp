#include "mccf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mccf/evaluator.hpp"
#include "mccf/sampler.hpp"

namespace mccf {

namespace k = kernels;

void TrainConfig::validate() const {
  if (epochs < 0) throw TrainerError("epochs must be >= 0");
  if (batch_size < 1) throw TrainerError("batch_size must be >= 1");
  if (learning_rate <= 0.0) throw TrainerError("learning_rate must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw TrainerError("dropout_rate must be in [0, 1)");
  if (lambda < 0.0) throw TrainerError("lambda must be >= 0");
  if (early_stop_patience < 0) throw TrainerError("early_stop_patience must be >= 0");
  if (val_fraction <= 0.0 || val_fraction >= 1.0)
    throw TrainerError("val_fraction must be in (0, 1)");
  if (adam.beta1 <= 0.0 || adam.beta1 >= 1.0 || adam.beta2 <= 0.0 || adam.beta2 >= 1.0 ||
      adam.eps <= 0.0)
    throw TrainerError("adam hyperparameters out of range");
}

double rating_loss(std::span<const double> preds, std::span<const double> targets) {
  if (preds.empty()) throw TrainerError("rating_loss: empty batch");
  if (preds.size() != targets.size()) throw TrainerError("rating_loss: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double diff = preds[i] - targets[i];
    acc += diff * diff;
  }
  return acc / (2.0 * double(preds.size()));
}

double total_loss(double rating, double penalty, double lambda) {
  if (lambda < 0.0) throw TrainerError("total_loss: lambda must be >= 0");
  return rating + lambda * penalty;
}

void adam_step(ModelParams& params, AdamState& state, double lr, const AdamConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 / (1.0 - std::pow(cfg.beta1, double(state.step)));
  const double c2 = 1.0 / (1.0 - std::pow(cfg.beta2, double(state.step)));
  std::size_t idx = 0;
  std::string bad;
  params.for_each([&](const char*, const std::string& name, Tensor& t) {
    if (state.m.size() <= idx) {
      state.m.emplace_back(t.val.size(), 0.0);
      state.v.emplace_back(t.val.size(), 0.0);
    }
    auto& m = state.m[idx];
    auto& v = state.v[idx];
    if (m.size() != t.val.size()) throw TrainerError("adam state shape drift in " + name);
    const int ok = k::ops().adam(t.val.data(), t.grad.data(), m.data(), v.data(), t.val.size(),
                                 lr, cfg.beta1, cfg.beta2, cfg.eps, c1, c2);
    if (!ok && bad.empty()) bad = name;
    ++idx;
  });
  if (!bad.empty()) throw TrainerError("non-finite gradient in tensor " + bad);
}

void write_history_csv(std::span<const EpochStats> history, std::ostream& out) {
  out << "epoch,train_loss,val_rmse,val_mae,active_gate_fraction\n";
  for (const auto& h : history) {
    out << h.epoch << ',' << h.train_loss << ',';
    if (std::isnan(h.val_rmse)) {
      out << ',';
    } else {
      out << h.val_rmse << ',' << h.val_mae;
    }
    out << ',' << h.active_gate_fraction << '\n';
  }
}

Trained train(const BipartiteGraph& train_graph, FeatureMode mode, const ModelConfig& mcfg,
              const TrainConfig& tcfg, std::ostream* log) {
  tcfg.validate();
  mcfg.validate();
  if (train_graph.edges().empty()) throw TrainerError("train: empty train split");

  // Early stopping holds out a validation slice; otherwise fit on everything.
  const bool use_val = tcfg.early_stop_patience > 0;
  BipartiteGraph fit_graph;
  std::vector<RatingEdge> val_edges;
  if (use_val) {
    const auto val_seed = Rng::stream(tcfg.seed, streams::kValSplit).next_u64();
    auto split = split_train_test(train_graph, 1.0 - tcfg.val_fraction, val_seed);
    fit_graph = std::move(split.train);
    val_edges = std::move(split.test);
    if (val_edges.empty() || fit_graph.edges().empty())
      throw TrainerError("train: validation holdout left an empty split");
  } else {
    fit_graph = train_graph;
  }

  const auto feats = build_features(fit_graph, mode);
  const auto thresholds = average_degrees(fit_graph);

  Rng init = Rng::stream(tcfg.seed, streams::kInit);
  Trained out{
      Mccf(mcfg,
           GraphMeta{fit_graph.n_users(), fit_graph.n_items(), fit_graph.max_rating(), mode},
           init),
      {}};
  Mccf& model = out.model;
  TrainResult& result = out.result;
  if (tcfg.epochs == 0) return out;

  const auto& edges = fit_graph.edges();
  const std::size_t n_edges = edges.size();
  std::vector<std::int32_t> order(n_edges);
  std::iota(order.begin(), order.end(), 0);

  AdamState adam;
  Tape tape(mcfg.hc);
  std::vector<BatchExample> batch;
  NeighborhoodSet nbrs;

  ModelParams last_good = model.params();
  ModelParams best;
  double best_val = std::numeric_limits<double>::infinity();
  std::int32_t best_epoch = -1;

  for (std::int32_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    if (tcfg.resample_each_epoch || epoch == 1) {
      Rng sample_rng = Rng::stream(tcfg.seed, streams::kSample, std::uint64_t(epoch));
      nbrs = sample_all(fit_graph, thresholds, sample_rng);
    }
    Rng shuffle_rng = Rng::stream(tcfg.seed, streams::kShuffle, std::uint64_t(epoch));
    shuffle_rng.shuffle(std::span<std::int32_t>(order));
    Rng gate_rng = Rng::stream(tcfg.seed, streams::kGates, std::uint64_t(epoch));
    Rng dropout_rng = Rng::stream(tcfg.seed, streams::kDropout, std::uint64_t(epoch));

    double loss_acc = 0.0;
    double penalty_acc = 0.0;
    std::size_t batches = 0;
    bool stop = false;

    for (std::size_t start = 0; start < n_edges; start += std::size_t(tcfg.batch_size)) {
      const std::size_t end = std::min(n_edges, start + std::size_t(tcfg.batch_size));
      batch.clear();
      for (std::size_t k2 = start; k2 < end; ++k2) {
        const auto& e = edges[std::size_t(order[k2])];
        batch.push_back({e.user, e.item, double(e.rating)});
      }
      tape.reset();
      const BatchOut bo = model.batch_forward(tape, feats, nbrs, batch, /*training=*/true,
                                              tcfg.dropout_rate, tcfg.lambda, &gate_rng,
                                              &dropout_rng);
      const double lr_val = tape.value(bo.rating_loss)[0];
      const double total_val = tape.value(bo.total)[0];
      if (!std::isfinite(total_val)) {
        result.diverged = true;
        std::ostringstream ss;
        ss << "non-finite loss in epoch " << epoch << " batch " << batches;
        result.divergence_reason = ss.str();
        stop = true;
        break;
      }
      loss_acc += lr_val * double(end - start);
      if (bo.penalty >= 0) penalty_acc += tape.value(bo.penalty)[0];
      ++batches;

      model.params().zero_grads();
      tape.backward(bo.total);
      try {
        adam_step(model.params(), adam, tcfg.learning_rate, tcfg.adam);
      } catch (const TrainerError& err) {
        result.diverged = true;
        result.divergence_reason = err.what();
        stop = true;
        break;
      }
    }
    if (stop) {
      model.params() = last_good;  // roll back to the last completed epoch
      break;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_acc / double(n_edges) +
                       tcfg.lambda * (batches > 0 ? penalty_acc / double(batches) : 0.0);
    stats.active_gate_fraction = model.active_gate_fraction();
    stats.val_rmse = std::numeric_limits<double>::quiet_NaN();
    stats.val_mae = std::numeric_limits<double>::quiet_NaN();
    if (use_val) {
      const EvalReport rep = evaluate(model, fit_graph, val_edges);
      stats.val_rmse = rep.rmse;
      stats.val_mae = rep.mae;
      if (rep.rmse < best_val) {
        best_val = rep.rmse;
        best = model.params();
        best_epoch = epoch;
      }
    }
    result.history.push_back(stats);
    if (log != nullptr) {
      *log << "epoch " << epoch << " train_loss " << stats.train_loss;
      if (use_val) *log << " val_rmse " << stats.val_rmse << " val_mae " << stats.val_mae;
      *log << " active_gates " << stats.active_gate_fraction << '\n';
    }

    last_good = model.params();
    if (use_val && epoch - best_epoch >= tcfg.early_stop_patience &&
        epoch < tcfg.epochs) {
      if (log != nullptr)
        *log << "early stop: no val improvement since epoch " << best_epoch << '\n';
      break;
    }
  }

  if (use_val && best_epoch > 0) {
    model.params() = best;
    result.best_epoch = best_epoch;
  }
  return out;
}

}  // namespace mccf
