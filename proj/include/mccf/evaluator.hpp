#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mccf/model.hpp"

namespace mccf {

struct EvaluatorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalReport {
  double rmse = 0.0;
  double mae = 0.0;
  std::int64_t n_scored = 0;
  std::int64_t n_fallback = 0;  // doubly-cold pairs scored by the train global mean
};

// RMSE/MAE over already-clipped prediction/target pairs.
EvalReport metrics(std::span<const double> predictions, std::span<const double> targets);

// Scores every test edge with deterministic eval neighborhoods, clips
// predictions to [1, R], and falls back to the train global mean when both
// endpoints have zero training degree. Throws on an empty test set or when
// the snapshot does not match the graph shape.
EvalReport evaluate(const Mccf& model, const BipartiteGraph& train_graph,
                    std::span<const RatingEdge> test);

// One dump row: node-level rows carry one item of the chosen user's
// neighborhood (idx = that user, weights = the item's cross-component
// attention profile normalized to sum 1); component-level rows carry one
// item's beta vector (idx = -1).
struct AttentionRow {
  std::int32_t entity = -1;
  std::string level;  // "node" or "component"
  std::int32_t idx = -1;
  std::vector<double> w;
  std::int32_t label = -1;  // -1 when unknown
};

struct AttentionDump {
  std::int32_t components = 0;
  std::vector<AttentionRow> rows;
};

// Exports the hierarchical attention weights a trained model assigns on the
// train graph. `user` picks the node-level context user; when absent the
// highest-degree user stands in (documented restriction: rows cover that
// user's neighborhood, not all items). Labels, when given, are per-item
// classes attached to every row.
AttentionDump export_attention(const Mccf& model, const BipartiteGraph& train_graph,
                               std::optional<std::int32_t> user,
                               const std::vector<std::int32_t>* item_labels);

// CSV with header entity_id,level,idx,w_0..w_{M-1},label.
void write_attention_csv(const AttentionDump& dump, std::ostream& out);

}  // namespace mccf
